#pragma once

#include "slsynth/model.hpp"
#include "slsynth/scp.hpp"

#include <string>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Built-in benchmark specs.  Light-dark carries its published constants; for
// the car and quadrotor the learned perception envelope and scene geometry
// are not published, so those parts are synthetic stand-ins (documented in
// the README) and their acceptance checks are property-based.
// ---------------------------------------------------------------------------

inline ProblemSpec make_lightdark() {
  ProblemSpec s;
  s.name = "lightdark";
  s.nx = 2;
  s.nu = 2;
  s.nr = 2;
  s.T = 20;
  s.dt = 0.2;
  s.dynamics = make_dynamics("single_integrator_2d");
  s.observation = make_observation(Mat::Identity(2, 2), "quadratic_lightdark", {0.02, 0, 2.0});
  const int nd = 4;
  for (int i = 0; i < 2; ++i) s.constraints.add_box(nd, i, -2.0, 5.0);
  for (int i = 0; i < 2; ++i) s.constraints.add_box(nd, 2 + i, -1.0, 1.0);
  for (int i = 0; i < 2; ++i) s.constraints.add_box(nd, i, -0.15, 0.15, /*terminal=*/true);
  s.costs.Qbar = Mat::Identity(2, 2);
  s.costs.Rbar = Mat::Identity(2, 2);
  s.costs.Pbar = 50.0 * Mat::Identity(2, 2);
  s.costs.Q = 1e4 * Mat::Identity(2, 2);
  s.costs.R = 1e4 * Mat::Identity(2, 2);
  s.costs.P = 1e4 * Mat::Identity(2, 2);
  s.noise.Xi = 0.05 * Mat::Identity(2, 2);
  s.noise.E_const = 0.05 * Mat::Identity(2, 2);
  s.x0 = Vec(2);
  s.x0 << 0.0, 2.0;
  s.goal = Mat::Zero(2, 1);
  return s;
}

inline ProblemSpec make_car() {
  ProblemSpec s;
  s.name = "car";
  s.nx = 4;
  s.nu = 2;
  s.nr = 3;
  s.T = 30;
  s.dt = 0.15;
  s.dynamics = make_dynamics("dubins_car");
  Mat Cr(3, 4);
  Cr << 0.976, 0.132, -0.172, 0.0,
      -0.216, 0.668, -0.712, 0.0,
      0.0209, 0.733, 0.680, 0.0;
  // Synthetic occlusion blob between start and goal.
  s.observation = make_observation(Cr, "gaussian_occlusion",
                                   {0.02, 0.2, 0.8, 2, 0, 1, -1.5, 0.3});
  const int nd = 6;
  const double pi = 3.14159265358979323846;
  s.constraints.add_box(nd, 0, -3.5, 0.5);
  s.constraints.add_box(nd, 1, -2.0, 1.9);
  s.constraints.add_box(nd, 2, -2.0 * pi, 2.0 * pi);
  s.constraints.add_box(nd, 3, -1.0, 2.0);
  s.constraints.add_box(nd, 4, -pi, pi);
  s.constraints.add_box(nd, 5, -4.0, 4.0);
  s.constraints.add_box(nd, 0, 0.0, 0.45, true);
  s.constraints.add_box(nd, 1, 0.35, 0.65, true);
  s.constraints.add_box(nd, 2, -2.0 * pi, 2.0 * pi, true);
  s.constraints.add_box(nd, 3, -1.0, 1.0, true);
  Obstacle ob;
  ob.dims = {0, 1};
  ob.center = Vec(2);
  ob.center << -0.9, -0.6;
  ob.radius = 0.4;
  s.constraints.obstacles.push_back(ob);
  s.costs.Qbar = Eigen::Vector4d(1.0, 1.0, 0.0, 0.0).asDiagonal();
  s.costs.Rbar = 0.5 * Mat::Identity(2, 2);
  s.costs.Pbar = Eigen::Vector4d(100.0, 100.0, 0.0, 10.0).asDiagonal();
  s.costs.Q = 1e5 * Mat::Identity(4, 4);
  s.costs.R = 1e5 * Mat::Identity(2, 2);
  s.costs.P = 3e6 * Mat::Identity(4, 4);
  s.noise.Xi = 0.01 * Mat::Identity(4, 4);
  s.noise.E_const = 0.01 * Mat::Identity(4, 4);
  s.x0 = Vec(4);
  s.x0 << -2.1, -1.75, 0.5 * pi, 0.0;
  s.goal = Mat::Zero(4, 1);
  s.goal.col(0) << 0.25, 0.5, 0.0, 0.0;
  return s;
}

inline ProblemSpec make_quadrotor() {
  ProblemSpec s;
  s.name = "quadrotor";
  s.nx = 10;
  s.nu = 3;
  s.nr = 5;
  s.T = 35;
  s.dt = 0.15;
  s.dynamics = make_dynamics("quadrotor10d", {9.81});
  Mat Cr(5, 10);
  Cr << 0.34, -0.78, 0.15, 0, 0, 0, -0.27, -0.42, 0, 0,
      -0.47, -0.62, -0.22, 0, 0, 0, 0.24, 0.53, 0, 0,
      0.78, -0.04, -0.33, 0, 0, 0, 0.42, 0.32, 0, 0,
      0.07, -0.05, 0.89, 0, 0, 0, 0.40, 0.20, 0, 0,
      0.21, 0.04, 0.18, 0, 0, 0, -0.72, 0.63, 0, 0;
  s.observation = make_observation(Cr, "gaussian_occlusion",
                                   {0.02, 0.2, 0.8, 3, 0, 1, 2, 0.3, 2.5, 1.1});
  const int nd = 13;
  s.constraints.add_box(nd, 0, -10.0, 10.0);
  s.constraints.add_box(nd, 1, -10.0, 10.0);
  s.constraints.add_box(nd, 2, 0.0, 10.0);
  for (int i = 3; i < 6; ++i) s.constraints.add_box(nd, i, -5.0, 5.0);
  for (int i = 6; i < 10; ++i) s.constraints.add_box(nd, i, -2.0, 2.0);
  s.constraints.add_box(nd, 10, -5.0, 5.0);
  s.constraints.add_box(nd, 11, -5.0, 5.0);
  s.constraints.add_box(nd, 12, 0.0, 40.0);
  // Synthetic terminal set about the goal position (success needs a target).
  s.constraints.add_box(nd, 0, -1.9, -1.1, true);
  s.constraints.add_box(nd, 1, 2.1, 2.9, true);
  s.constraints.add_box(nd, 2, 1.0, 1.8, true);
  Obstacle ob;
  ob.dims = {0, 1, 2};
  ob.center = Vec(3);
  ob.center << -0.3, 2.8, 1.2;
  ob.radius = 0.45;
  s.constraints.obstacles.push_back(ob);
  Vec qb(10);
  qb << 1, 1, 1, 1, 1, 1, 1, 0, 0, 0;
  s.costs.Qbar = qb.asDiagonal();
  s.costs.Rbar = Mat::Identity(3, 3);
  Vec pb(10);
  pb << 50, 50, 50, 5, 5, 5, 5, 1, 1, 1;
  s.costs.Pbar = pb.asDiagonal();
  s.costs.Q = 5e5 * Mat::Identity(10, 10);
  s.costs.R = 5e5 * Mat::Identity(3, 3);
  s.costs.P = 5e5 * Mat::Identity(10, 10);
  s.noise.Xi = 0.01 * Mat::Identity(10, 10);
  s.noise.E_const = 0.01 * Mat::Identity(10, 10);
  s.x0 = Vec(10);
  s.x0 << 0.9, 3.1, 1.0, 0.001, 0.001, 0.001, 0.001, -0.001, -0.001, -0.001;
  s.goal = Mat::Zero(10, 1);
  s.goal.col(0) << -1.5, 2.5, 1.4, 0.001, 0.001, 0.001, -0.001, -0.001, -0.001, -0.001;
  return s;
}

inline std::vector<std::string> builtin_spec_names() { return {"lightdark", "car", "quadrotor"}; }

inline ProblemSpec builtin_spec(const std::string& name) {
  if (name == "lightdark") return make_lightdark();
  if (name == "car") return make_car();
  if (name == "quadrotor") return make_quadrotor();
  throw SpecError("unknown builtin spec: " + name);
}

// ---------------------------------------------------------------------------
// Disturbance sampling: uniform draws the ball interior, extreme its
// vertices.  Deterministic under the seed.
// ---------------------------------------------------------------------------

enum class DisturbanceMode { Uniform, Extreme };

inline DisturbanceMode disturbance_mode_from_string(const std::string& s) {
  if (s == "uniform") return DisturbanceMode::Uniform;
  if (s == "extreme") return DisturbanceMode::Extreme;
  throw SpecError("unknown disturbance mode: " + s);
}

struct DisturbanceSample {
  Mat w;  // nx x (T+1); column 0 is the initial-condition channel
  Mat e;  // nr x T
};

inline DisturbanceSample sample_disturbance(DisturbanceMode mode, int nx, int nr, int T,
                                            std::uint64_t seed) {
  Rng rng(seed);
  DisturbanceSample d;
  d.w = Mat(nx, T + 1);
  d.e = Mat(nr, T);
  auto draw = [&]() { return mode == DisturbanceMode::Uniform ? rng.symmetric() : rng.sign(); };
  for (int j = 0; j <= T; ++j)
    for (int i = 0; i < nx; ++i) d.w(i, j) = draw();
  for (int j = 0; j < T; ++j)
    for (int i = 0; i < nr; ++i) d.e(i, j) = draw();
  return d;
}

// ---------------------------------------------------------------------------
// Closed-loop rollout of the true nonlinear system under the synthesized
// affine policy, with containment and raw-constraint bookkeeping.
// ---------------------------------------------------------------------------

struct RolloutResult {
  Mat x;  // nx x (T+1)
  Mat u;  // nu x T
  Mat y;  // nr x T; column j is the realized measurement of x_j
  bool diverged = false;
  bool contained = true;    // every direction, every step inside the tubes
  bool violation = false;   // any raw constraint (incl. obstacles) violated
  bool terminal_ok = true;  // terminal rows satisfied at k = T
  double max_normalized_excursion = 0.0;
  bool success() const { return !diverged && terminal_ok && !violation; }
};

inline RolloutResult rollout(const SynthesisResult& result, const ProblemSpec& spec, const Mat& w,
                             const Mat& e) {
  const int nx = spec.nx, nu = spec.nu, nr = spec.nr, T = spec.T;
  if (w.rows() != nx || w.cols() != T + 1 || e.rows() != nr || e.cols() != T)
    throw ShapeError("rollout: disturbance dimensions");

  RolloutResult rr;
  rr.x = Mat::Zero(nx, T + 1);
  rr.u = Mat::Zero(nu, T);
  rr.y = Mat::Zero(nr, T);
  rr.x.col(0) = spec.x0 + spec.noise.Xi * w.col(0);

  const double tol = 1e-9;
  auto record_containment = [&](int l, int k, double dev) {
    const double r = result.radii.radius(l, k);
    const double norm = std::abs(dev) / std::max(r, 1e-12);
    rr.max_normalized_excursion = std::max(rr.max_normalized_excursion, norm);
    if (std::abs(dev) > r * (1.0 + 1e-9) + 1e-12) rr.contained = false;
  };
  auto check_rows = [&](int k) {
    for (const auto& row : spec.constraints.rows) {
      const bool applies = row.terminal ? (k == T)
                                        : (k < T && (row.at_k < 0 || row.at_k == k));
      if (!applies) continue;
      const double val = row.c.head(nx).dot(rr.x.col(k)) +
                         ((k < T) ? row.c.tail(nu).dot(rr.u.col(k)) : 0.0) + row.b;
      if (val > tol) {
        rr.violation = true;
        if (row.terminal) rr.terminal_ok = false;
      }
    }
    for (const auto& ob : spec.constraints.obstacles) {
      double q = 0.0;
      for (size_t d = 0; d < ob.dims.size(); ++d) {
        const double dd = rr.x(ob.dims[d], k) - ob.center(d);
        q += dd * dd;
      }
      if (std::sqrt(q) < ob.radius - tol) rr.violation = true;
    }
  };

  for (int k = 0; k < T; ++k) {
    Vec u = result.v[k] + result.gains.K0[k] * (rr.x.col(0) - result.z[0]);
    for (int j = 0; j < k; ++j)
      u += result.gains.K[k][j] * (rr.y.col(j) - spec.observation.Cr * result.z[j]);
    rr.u.col(k) = u;

    for (int l = 0; l < nx; ++l) record_containment(l, k, rr.x(l, k) - result.z[k](l));
    for (int l = 0; l < nu; ++l) record_containment(nx + l, k, u(l) - result.v[k](l));
    check_rows(k);

    rr.y.col(k) = spec.observation.Cr * rr.x.col(k) +
                  spec.observation.b(rr.x.col(k)) * e.col(k);
    Vec next;
    try {
      next = discretize_step(spec.dynamics, rr.x.col(k), u, spec.dt) +
             spec.noise.E(rr.x.col(k)) * w.col(k + 1);
    } catch (const IntegrationDiverged&) {
      rr.diverged = true;
      rr.violation = true;
      rr.terminal_ok = false;
      return rr;
    }
    if (!next.allFinite()) {
      rr.diverged = true;
      rr.violation = true;
      rr.terminal_ok = false;
      return rr;
    }
    rr.x.col(k + 1) = next;
  }
  for (int l = 0; l < nx; ++l) record_containment(l, T, rr.x(l, T) - result.z[T](l));
  check_rows(T);
  return rr;
}

struct MonteCarloReport {
  int n = 0;
  double sr = 0.0;
  double cvr = 0.0;
  double containment_rate = 0.0;
  double max_normalized_excursion = 0.0;
  int diverged = 0;
};

inline MonteCarloReport monte_carlo(const SynthesisResult& result, const ProblemSpec& spec, int n,
                                    DisturbanceMode mode, std::uint64_t seed, int threads = 1,
                                    std::vector<RolloutResult>* keep = nullptr) {
  if (n < 1) throw SpecError("monte_carlo: need n >= 1");
  std::vector<RolloutResult> rollouts(n);
  Rng master(seed);
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = master.next_u64();
  parallel_for(n, threads, [&](int i) {
    const DisturbanceSample d = sample_disturbance(mode, spec.nx, spec.nr, spec.T, seeds[i]);
    rollouts[i] = rollout(result, spec, d.w, d.e);
  });

  MonteCarloReport rep;
  rep.n = n;
  int nsucc = 0, nviol = 0, ncont = 0;
  for (const auto& r : rollouts) {
    nsucc += r.success() ? 1 : 0;
    nviol += r.violation ? 1 : 0;
    ncont += r.contained ? 1 : 0;
    rep.diverged += r.diverged ? 1 : 0;
    rep.max_normalized_excursion = std::max(rep.max_normalized_excursion,
                                            r.max_normalized_excursion);
  }
  rep.sr = static_cast<double>(nsucc) / n;
  rep.cvr = static_cast<double>(nviol) / n;
  rep.containment_rate = static_cast<double>(ncont) / n;
  if (keep) *keep = std::move(rollouts);
  return rep;
}

}  // namespace sls
