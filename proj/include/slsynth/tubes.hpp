#pragma once

#include "slsynth/model.hpp"
#include "slsynth/sls_ops.hpp"

#include <limits>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Disturbance scalings for the robust program.  Sigma[0] is the
// initial-condition scaling; Sigma[j+1] combines the process-noise scaling at
// step j with the linearization-error hook.  Upsilon[j] scales the noise on
// the measurement of x_j through the envelope.
// ---------------------------------------------------------------------------

struct TubeParams {
  std::vector<Mat> Sigma;    // j = 0..T, nx x nx
  std::vector<Mat> Upsilon;  // j = 0..T-1, nr x nr
  Vec tau;                   // tube radii, k = 0..T-1
  double rho = 0.0;          // initial radius: max_l || e_l^T Xi ||_1
};

inline TubeParams build_scalings(const std::vector<Vec>& z, const std::vector<Vec>& v,
                                 const Vec& tau, const ProblemSpec& spec) {
  const int T = spec.T;
  if (static_cast<int>(z.size()) != T + 1 || static_cast<int>(v.size()) != T ||
      tau.size() != T)
    throw ShapeError("build_scalings: trajectory lengths inconsistent with the horizon");
  TubeParams tp;
  tp.Sigma.resize(T + 1);
  tp.Upsilon.resize(T);
  tp.tau = tau;
  tp.Sigma[0] = spec.noise.Xi;
  const Mat I = Mat::Identity(spec.nx, spec.nx);
  for (int j = 0; j < T; ++j) {
    tp.Sigma[j + 1] = spec.noise.E(z[j]) + spec.noise.sigma_value(tau(j), z[j], v[j]) * I;
    const double b = spec.observation.b(z[j]);  // throws InvalidEnvelope when negative
    tp.Upsilon[j] = b * Mat::Identity(spec.nr, spec.nr);
  }
  for (int l = 0; l < spec.nx; ++l)
    tp.rho = std::max(tp.rho, spec.noise.Xi.row(l).cwiseAbs().sum());
  return tp;
}

// ---------------------------------------------------------------------------
// l1 constraint tightening.  For each row and step the margin is the support
// function of the scaled disturbance set in the row direction; feasible iff
// nominal + margin <= 0, i.e. slack = -(nominal + margin) >= 0.
// ---------------------------------------------------------------------------

struct TightenEntry {
  int row = 0;
  int k = 0;
  double nominal = 0.0;  // c^T (z_k, v_k) + b
  double margin = 0.0;
  double slack = 0.0;
};

struct TightenReport {
  std::vector<TightenEntry> entries;
  double min_slack = std::numeric_limits<double>::infinity();
  double max_margin = 0.0;
  bool feasible(double tol = 0.0) const { return min_slack >= -tol; }
};

namespace detail {

// Support value of the scaled disturbances in the direction (cx, cu) at time
// k: sum_j ||row * Sigma_j||_1 + ||row * Upsilon_j||_1 over the causal band.
inline double l1_margin(const ResponseMaps& m, const TubeParams& tp, const Vec& cx, const Vec& cu,
                        int k) {
  const int T = m.T;
  const bool with_u = (k < T) && (cu.cwiseAbs().maxCoeff() != 0.0);
  double margin = 0.0;
  for (int j = 0; j <= k; ++j) {
    Eigen::RowVectorXd row = cx.transpose() * m.xw.get(k, j);
    if (with_u) row += cu.transpose() * m.uw.get(k, j);
    margin += (row * tp.Sigma[j]).cwiseAbs().sum();
  }
  for (int j = 0; j < std::min(k, T); ++j) {
    Eigen::RowVectorXd row = cx.transpose() * m.xe.get(k, j);
    if (with_u) row += cu.transpose() * m.ue.get(k, j);
    margin += (row * tp.Upsilon[j]).cwiseAbs().sum();
  }
  return margin;
}

}  // namespace detail

inline TightenReport tighten(const ResponseMaps& maps, const TubeParams& tubes,
                             const ConstraintSet& constraints, const std::vector<Vec>& z,
                             const std::vector<Vec>& v) {
  const int T = maps.T, nx = maps.nx, nu = maps.nu;
  TightenReport rep;
  for (size_t i = 0; i < constraints.rows.size(); ++i) {
    const auto& row = constraints.rows[i];
    const Vec cx = row.c.head(nx);
    const Vec cu = row.c.tail(nu);
    int k_lo = row.terminal ? T : 0;
    int k_hi = row.terminal ? T : T - 1;
    if (!row.terminal && row.at_k >= 0) k_lo = k_hi = std::min(row.at_k, T - 1);
    for (int k = k_lo; k <= k_hi; ++k) {
      TightenEntry e;
      e.row = static_cast<int>(i);
      e.k = k;
      e.nominal = cx.dot(z[k]) + ((k < T) ? cu.dot(v[k]) : 0.0) + row.b;
      e.margin = detail::l1_margin(maps, tubes, cx, cu, k);
      e.slack = -(e.nominal + e.margin);
      rep.min_slack = std::min(rep.min_slack, e.slack);
      rep.max_margin = std::max(rep.max_margin, e.margin);
      rep.entries.push_back(e);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Per-direction tube radii r_{l,k} and their consistency against tau.  The
// terminal row (state directions only) is included for plotting and
// containment checks.
// ---------------------------------------------------------------------------

struct TubeRadii {
  Mat r_x;  // nx x (T+1)
  Mat r_u;  // nu x T
  Vec max_r;          // length T: max over all directions at step k
  bool tau_consistent = true;  // max_r(k) <= tau(k) for k = 0..T-1

  double radius(int l, int k) const {  // l indexes the (x,u) stack
    return l < r_x.rows() ? r_x(l, k) : r_u(l - r_x.rows(), k);
  }
};

inline TubeRadii tube_radii(const ResponseMaps& maps, const TubeParams& tubes) {
  const int T = maps.T, nx = maps.nx, nu = maps.nu;
  TubeRadii out;
  out.r_x = Mat::Zero(nx, T + 1);
  out.r_u = Mat::Zero(nu, T);
  out.max_r = Vec::Zero(T);
  const Vec zu = Vec::Zero(nu);
  for (int k = 0; k <= T; ++k) {
    for (int l = 0; l < nx; ++l) {
      Vec cx = Vec::Zero(nx);
      cx(l) = 1.0;
      out.r_x(l, k) = detail::l1_margin(maps, tubes, cx, zu, k);
    }
    if (k < T) {
      const Vec zx = Vec::Zero(nx);
      for (int l = 0; l < nu; ++l) {
        Vec cu = Vec::Zero(nu);
        cu(l) = 1.0;
        out.r_u(l, k) = detail::l1_margin(maps, tubes, zx, cu, k);
      }
      out.max_r(k) = std::max(out.r_x.col(k).maxCoeff(), out.r_u.col(k).maxCoeff());
      if (tubes.tau.size() == T && out.max_r(k) > tubes.tau(k)) out.tau_consistent = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force support oracle: enumerate every +-1 assignment of the scalar
// disturbances that can reach time k and maximize the directional deviation.
// Must reproduce the l1 margin exactly.
// ---------------------------------------------------------------------------

inline double vertex_oracle(const ResponseMaps& maps, const TubeParams& tubes,
                            const Vec& direction, int k, int max_dims = 20) {
  const int T = maps.T, nx = maps.nx, nu = maps.nu, nr = maps.nr;
  if (direction.size() != nx + nu) throw ShapeError("vertex_oracle: direction must be (x,u)-sized");
  const int dims = (k + 1) * nx + std::min(k, T) * nr;
  if (dims > max_dims)
    throw OracleTooLarge("vertex_oracle: " + std::to_string(dims) + " disturbance scalars");

  const Vec cx = direction.head(nx);
  const Vec cu = direction.tail(nu);
  const bool with_u = (k < T);

  std::vector<double> coeff;
  coeff.reserve(dims);
  for (int j = 0; j <= k; ++j) {
    Eigen::RowVectorXd row = cx.transpose() * maps.xw.get(k, j);
    if (with_u) row += cu.transpose() * maps.uw.get(k, j);
    const Eigen::RowVectorXd scaled = row * tubes.Sigma[j];
    for (int d = 0; d < nx; ++d) coeff.push_back(scaled(d));
  }
  for (int j = 0; j < std::min(k, T); ++j) {
    Eigen::RowVectorXd row = cx.transpose() * maps.xe.get(k, j);
    if (with_u) row += cu.transpose() * maps.ue.get(k, j);
    const Eigen::RowVectorXd scaled = row * tubes.Upsilon[j];
    for (int d = 0; d < nr; ++d) coeff.push_back(scaled(d));
  }

  const int n = static_cast<int>(coeff.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
    double val = 0.0;
    for (int i = 0; i < n; ++i) val += (mask >> i) & 1ull ? coeff[i] : -coeff[i];
    best = std::max(best, val);
  }
  return best;
}

}  // namespace sls
