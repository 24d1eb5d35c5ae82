#pragma once

#include "slsynth/model.hpp"
#include "slsynth/qp.hpp"

#include <string>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Perception-error envelope calibration: fit a polynomial upper envelope
// b(x) = beta^T m(x) over observed residuals by the hinge program
//   min  sum_i b(x_i) + gamma ||beta||^2 + mu sum_i xi_i
//   s.t. b(x_i) >= r_i - xi_i,  xi_i >= 0.
// ---------------------------------------------------------------------------

struct MonomialBasis {
  std::vector<int> coords;                 // state coordinates entering the basis
  int degree = 0;                          // max total degree
  std::vector<std::vector<int>> exponents; // one multi-index per basis function

  static MonomialBasis make(const std::vector<int>& coords, int degree) {
    MonomialBasis b;
    b.coords = coords;
    b.degree = degree;
    std::vector<int> expo(coords.size(), 0);
    std::function<void(size_t, int)> rec = [&](size_t pos, int remaining) {
      if (pos == coords.size()) {
        b.exponents.push_back(expo);
        return;
      }
      for (int d = 0; d <= remaining; ++d) {
        expo[pos] = d;
        rec(pos + 1, remaining - d);
      }
      expo[pos] = 0;
    };
    rec(0, degree);
    return b;
  }

  int size() const { return static_cast<int>(exponents.size()); }

  Vec eval(const Vec& x) const {
    Vec m(size());
    for (int i = 0; i < size(); ++i) {
      double v = 1.0;
      for (size_t c = 0; c < coords.size(); ++c)
        for (int d = 0; d < exponents[i][c]; ++d) v *= x(coords[c]);
      m(i) = v;
    }
    return m;
  }
};

struct ResidualDataset {
  Mat X;  // one state per row
  Vec r;  // nonnegative residuals
  std::vector<std::string> columns;  // coordinate names (for CSV round trips)

  int size() const { return static_cast<int>(r.size()); }
};

struct Envelope {
  MonomialBasis basis;
  Vec beta;
  Vec slacks;  // realized hinge slacks at the fit points

  double eval(const Vec& x) const { return beta.dot(basis.eval(x)); }
};

inline Envelope fit_envelope(const ResidualDataset& data, const MonomialBasis& basis, double gamma,
                             double mu) {
  const int N = data.size();
  const int nb = basis.size();
  if (N < nb) throw SpecError("fit_envelope: need at least as many samples as basis functions");
  if (gamma < 0.0 || mu < 0.0) throw SpecError("fit_envelope: gamma, mu must be nonnegative");
  for (int i = 0; i < N; ++i)
    if (!(data.r(i) >= 0.0)) throw SpecError("fit_envelope: residuals must be nonnegative");

  Mat M(N, nb);
  for (int i = 0; i < N; ++i) M.row(i) = basis.eval(data.X.row(i).transpose()).transpose();

  const int nvar = nb + N;
  QpProblem qp;
  qp.P = Mat::Zero(nvar, nvar);
  qp.P.topLeftCorner(nb, nb) = 2.0 * gamma * Mat::Identity(nb, nb);
  qp.q = Vec::Zero(nvar);
  qp.q.head(nb) = M.colwise().sum().transpose();
  qp.q.tail(N).setConstant(mu);
  qp.A = Mat::Zero(2 * N, nvar);
  qp.l = Vec(2 * N);
  qp.u = Vec(2 * N);
  for (int i = 0; i < N; ++i) {
    qp.A.block(i, 0, 1, nb) = M.row(i);
    qp.A(i, nb + i) = 1.0;
    qp.l(i) = data.r(i);
    qp.u(i) = kInf;
    qp.A(N + i, nb + i) = 1.0;
    qp.l(N + i) = 0.0;
    qp.u(N + i) = kInf;
  }
  const QpResult res = solve_qp(qp);
  if (res.status == QpStatus::DualInfeasible)
    throw FitUnbounded("envelope program unbounded (gamma too small for this basis)");
  if (res.status != QpStatus::Solved)
    throw Error(std::string("fit_envelope: QP ") + to_string(res.status));

  Envelope env;
  env.basis = basis;
  env.beta = res.x.head(nb);
  env.slacks = Vec(N);
  for (int i = 0; i < N; ++i)
    env.slacks(i) = std::max(0.0, data.r(i) - M.row(i).dot(env.beta));
  return env;
}

// Fraction of held-out residuals at or below the predicted bound.
inline double coverage(const Envelope& env, const ResidualDataset& held_out) {
  if (held_out.size() == 0) throw SpecError("coverage: empty held-out set");
  int inside = 0;
  for (int i = 0; i < held_out.size(); ++i)
    if (held_out.r(i) <= env.eval(held_out.X.row(i).transpose())) ++inside;
  return static_cast<double>(inside) / held_out.size();
}

// Synthetic residual generator: states uniform in a box, residuals a seeded
// fraction of a ground-truth envelope (plus optional additive noise).
inline ResidualDataset synthetic_residuals(const std::function<double(const Vec&)>& truth,
                                           const Vec& lo, const Vec& hi, int n, std::uint64_t seed,
                                           double frac_lo = 0.2, double frac_hi = 1.0,
                                           double extra_noise = 0.0) {
  Rng rng(seed);
  ResidualDataset d;
  const int nx = static_cast<int>(lo.size());
  d.X = Mat(n, nx);
  d.r = Vec(n);
  for (int c = 0; c < nx; ++c) d.columns.push_back("x" + std::to_string(c));
  for (int i = 0; i < n; ++i) {
    Vec x(nx);
    for (int c = 0; c < nx; ++c) x(c) = rng.uniform(lo(c), hi(c));
    d.X.row(i) = x.transpose();
    d.r(i) = truth(x) * rng.uniform(frac_lo, frac_hi) + rng.uniform(0.0, extra_noise);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Local discrete-time observability: stacked reduced outputs along iterated
// discrete dynamics and the Jacobian of that stack at the base state.
// ---------------------------------------------------------------------------

struct ObservabilityStack {
  Vec outputs;  // n * nr
  Mat jacobian; // (n * nr) x nx
};

inline ObservabilityStack observability_matrix(const DynamicsModel& dyn, const Mat& Cr,
                                               const Vec& x_hat, const std::vector<Vec>& u_seq,
                                               double dt) {
  if (u_seq.empty()) throw SpecError("observability_matrix: need at least one input");
  const int nx = dyn.nx;
  const int nr = static_cast<int>(Cr.rows());
  const int n = static_cast<int>(u_seq.size());
  ObservabilityStack st;
  st.outputs = Vec(n * nr);
  st.jacobian = Mat(n * nr, nx);

  Vec x = x_hat;
  Mat J = Mat::Identity(nx, nx);
  for (int i = 0; i < n; ++i) {
    const LinearizedModel lin = linearize(dyn, {x, Vec(x)}, {u_seq[i]}, dt);
    x = discretize_step(dyn, x, u_seq[i], dt);
    J = lin.A[0] * J;
    st.outputs.segment(i * nr, nr) = Cr * x;
    st.jacobian.middleRows(i * nr, nr) = Cr * J;
  }
  return st;
}

// Minimum singular value over the full state dimension: zero whenever the
// stack has fewer rows than states (the state cannot be locally recovered).
inline double observability_metric(const DynamicsModel& dyn, const Mat& Cr, const Vec& x_hat,
                                   const std::vector<Vec>& u_seq, double dt) {
  const ObservabilityStack st = observability_matrix(dyn, Cr, x_hat, u_seq, dt);
  if (st.jacobian.rows() < st.jacobian.cols()) return 0.0;
  Eigen::JacobiSVD<Mat> svd(st.jacobian);
  return svd.singularValues().minCoeff();
}

// Evaluation-only form of the representation loss: l2 feature-matching term
// minus the weighted observability margin.
inline double observability_loss(const Vec& reduced_feature, const DynamicsModel& dyn,
                                 const Mat& Cr, const Vec& x_hat, const std::vector<Vec>& u_seq,
                                 double lambda, double dt) {
  const double match = (reduced_feature - Cr * x_hat).norm();
  return match - lambda * observability_metric(dyn, Cr, x_hat, u_seq, dt);
}

}  // namespace sls
