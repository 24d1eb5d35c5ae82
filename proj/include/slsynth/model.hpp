#pragma once

#include "slsynth/types.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Continuous-time dynamics with optional analytic Jacobians of the field.
// ---------------------------------------------------------------------------

struct DynamicsModel {
  int nx = 0;
  int nu = 0;
  std::string id;            // registry id for serialization ("" = custom)
  std::vector<double> params;

  // State rate f_c(x, u).
  std::function<Vec(const Vec&, const Vec&)> f;
  // Optional continuous-time Jacobians d f_c / dx, d f_c / du.
  std::function<void(const Vec&, const Vec&, Mat&, Mat&)> jac;

  bool has_jacobians() const { return static_cast<bool>(jac); }
};

// Scalar error envelope b(x) >= 0 for the reduced observation, so that the
// measurement scaling is b(x) * I_{nr}.
struct ObservationModel {
  Mat Cr;  // nr x nx
  std::string envelope_id;
  std::vector<double> envelope_params;
  std::function<double(const Vec&)> envelope;
  std::function<Vec(const Vec&)> envelope_grad;  // optional, d b / dx

  int nr() const { return static_cast<int>(Cr.rows()); }
  double b(const Vec& x) const {
    const double v = envelope(x);
    if (!(v >= 0.0)) throw InvalidEnvelope("envelope b(x) negative at a queried state");
    return v;
  }
};

// One linear constraint row c^T (x, u) + b <= 0.  Terminal rows act at k = T
// on the state only.  at_k restricts a non-terminal row to a single step
// (-1 = every step); per-iteration obstacle linearizations use this.
struct ConstraintRow {
  Vec c;  // length nx + nu
  double b = 0.0;
  bool terminal = false;
  int at_k = -1;
};

// Circular / spherical keep-out region over selected position coordinates.
// Linearized once per SCP iteration into a supporting half-space row.
struct Obstacle {
  std::vector<int> dims;
  Vec center;
  double radius = 0.0;
};

struct ConstraintSet {
  std::vector<ConstraintRow> rows;
  std::vector<Obstacle> obstacles;

  void add_row(const Vec& c, double b, bool terminal = false) {
    rows.push_back({c, b, terminal});
  }
  // Box lo <= y_i <= hi as two rows on coordinate `index` of the (x,u) stack.
  void add_box(int dim_total, int index, double lo, double hi, bool terminal = false) {
    Vec c = Vec::Zero(dim_total);
    c(index) = 1.0;
    add_row(c, -hi, terminal);
    c(index) = -1.0;
    add_row(c, lo, terminal);
  }
};

struct CostWeights {
  // Trajectory cost (nominal tracking).
  Mat Qbar, Rbar, Pbar;
  // Tube cost (response-map weights).
  Mat Q, R, P;
};

struct NoiseSpec {
  Mat Xi;       // nx x nx initial-uncertainty scaling
  Mat E_const;  // nx x nx process-noise scaling when constant
  std::function<Mat(const Vec&)> E_fn;  // optional state-dependent override
  // Linearization-error hook sigma(tau, z, v); zero by default.
  std::function<double(double, const Vec&, const Vec&)> sigma;

  Mat E(const Vec& x) const { return E_fn ? E_fn(x) : E_const; }
  bool constant_E() const { return !E_fn; }
  bool zero_sigma() const { return !sigma; }
  double sigma_value(double tau, const Vec& z, const Vec& v) const {
    if (!sigma) return 0.0;
    const double s = sigma(tau, z, v);
    if (!(s >= 0.0)) throw SpecError("sigma hook returned a negative value");
    return s;
  }
};

struct ProblemSpec {
  int nx = 0, nu = 0, nr = 0;
  int T = 0;
  double dt = 0.0;
  DynamicsModel dynamics;
  ObservationModel observation;
  ConstraintSet constraints;
  CostWeights costs;
  NoiseSpec noise;
  Vec x0;
  Mat goal;  // nx x (T+1); a single goal state is replicated across columns

  std::string name;

  Vec goal_at(int k) const { return goal.col(std::min<int>(k, goal.cols() - 1)); }
};

// ---------------------------------------------------------------------------
// Discretization: one fixed-step explicit RK4 stage over dt.
// ---------------------------------------------------------------------------

inline Vec discretize_step(const DynamicsModel& model, const Vec& x, const Vec& u, double dt) {
  if (!(dt > 0.0)) throw SpecError("discretize_step: dt must be positive");
  const Vec k1 = model.f(x, u);
  const Vec k2 = model.f(x + 0.5 * dt * k1, u);
  const Vec k3 = model.f(x + 0.5 * dt * k2, u);
  const Vec k4 = model.f(x + dt * k3, u);
  Vec out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw IntegrationDiverged("discretize_step produced a non-finite state");
  return out;
}

struct LinearizedModel {
  std::vector<Mat> A;  // nx x nx, k = 0..T-1, Jacobians of the discrete step
  std::vector<Mat> B;  // nx x nu
};

namespace detail {

// Exact Jacobian of the RK4 step, chained through the stages from the
// analytic continuous-time Jacobians.
inline void rk4_jacobian_analytic(const DynamicsModel& m, const Vec& x, const Vec& u, double dt,
                                  Mat& A, Mat& B) {
  const int nx = m.nx, nu = m.nu;
  Mat fx(nx, nx), fu(nx, nu);
  const Mat I = Mat::Identity(nx, nx);

  const Vec k1 = m.f(x, u);
  m.jac(x, u, fx, fu);
  Mat dk1x = fx, dk1u = fu;

  const Vec x2 = x + 0.5 * dt * k1;
  const Vec k2 = m.f(x2, u);
  m.jac(x2, u, fx, fu);
  Mat dk2x = fx * (I + 0.5 * dt * dk1x);
  Mat dk2u = fx * (0.5 * dt * dk1u) + fu;

  const Vec x3 = x + 0.5 * dt * k2;
  const Vec k3 = m.f(x3, u);
  m.jac(x3, u, fx, fu);
  Mat dk3x = fx * (I + 0.5 * dt * dk2x);
  Mat dk3u = fx * (0.5 * dt * dk2u) + fu;

  const Vec x4 = x + dt * k3;
  m.jac(x4, u, fx, fu);
  Mat dk4x = fx * (I + dt * dk3x);
  Mat dk4u = fx * (dt * dk3u) + fu;

  A = I + (dt / 6.0) * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x);
  B = (dt / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);
}

// Central differences on the discrete step; step scaled per coordinate.
inline void rk4_jacobian_fd(const DynamicsModel& m, const Vec& x, const Vec& u, double dt,
                            Mat& A, Mat& B) {
  const int nx = m.nx, nu = m.nu;
  A.resize(nx, nx);
  B.resize(nx, nu);
  for (int i = 0; i < nx; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    A.col(i) = (discretize_step(m, xp, u, dt) - discretize_step(m, xm, u, dt)) / (2.0 * h);
  }
  for (int i = 0; i < nu; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(i)));
    Vec up = u, um = u;
    up(i) += h;
    um(i) -= h;
    B.col(i) = (discretize_step(m, x, up, dt) - discretize_step(m, x, um, dt)) / (2.0 * h);
  }
}

}  // namespace detail

// Jacobians of discretize_step along a nominal trajectory, analytic when the
// model registers them and central differences otherwise.
inline LinearizedModel linearize(const DynamicsModel& model, const std::vector<Vec>& z,
                                 const std::vector<Vec>& v, double dt) {
  if (z.size() != v.size() + 1 || v.empty())
    throw ShapeError("linearize: need |z| = T+1 and |v| = T");
  LinearizedModel lin;
  const int T = static_cast<int>(v.size());
  lin.A.resize(T);
  lin.B.resize(T);
  for (int k = 0; k < T; ++k) {
    if (model.has_jacobians())
      detail::rk4_jacobian_analytic(model, z[k], v[k], dt, lin.A[k], lin.B[k]);
    else
      detail::rk4_jacobian_fd(model, z[k], v[k], dt, lin.A[k], lin.B[k]);
    if (!lin.A[k].allFinite() || !lin.B[k].allFinite())
      throw LinearizationFailed("non-finite Jacobian entry at step " + std::to_string(k));
  }
  return lin;
}

// ---------------------------------------------------------------------------
// Spec validation: empty result iff all type invariants hold.
// ---------------------------------------------------------------------------

inline std::vector<std::string> validate_spec(const ProblemSpec& s) {
  std::vector<std::string> out;
  auto bad = [&out](const std::string& msg) { out.push_back(msg); };

  if (s.nx <= 0 || s.nu <= 0 || s.nr <= 0) bad("dims must be positive");
  if (s.T < 1) bad("horizon T must be >= 1");
  if (!(s.dt > 0.0)) bad("dt must be positive");
  if (!s.dynamics.f) bad("dynamics.f missing");
  if (s.dynamics.nx != s.nx || s.dynamics.nu != s.nu) bad("dynamics dims inconsistent");
  if (s.observation.Cr.rows() != s.nr || s.observation.Cr.cols() != s.nx)
    bad("observation.Cr must be nr x nx");
  if (!s.observation.envelope) bad("observation envelope missing");
  if (s.x0.size() != s.nx) bad("x0 must have length nx");
  if (s.goal.rows() != s.nx || s.goal.cols() < 1) bad("goal must be nx x 1 or nx x (T+1)");
  if (s.goal.cols() != 1 && s.goal.cols() != s.T + 1)
    bad("goal trajectory must have T+1 columns");

  auto check_square = [&](const Mat& m, int n, const std::string& name) {
    if (m.rows() != n || m.cols() != n) bad(name + " must be " + std::to_string(n) + "x" + std::to_string(n));
  };
  check_square(s.costs.Qbar, s.nx, "CostWeights.Qbar");
  check_square(s.costs.Rbar, s.nu, "CostWeights.Rbar");
  check_square(s.costs.Pbar, s.nx, "CostWeights.Pbar");
  check_square(s.costs.Q, s.nx, "CostWeights.Q");
  check_square(s.costs.R, s.nu, "CostWeights.R");
  check_square(s.costs.P, s.nx, "CostWeights.P");
  check_square(s.noise.Xi, s.nx, "NoiseSpec.Xi");

  if (out.empty()) {
    if (!is_pd(s.costs.Rbar)) bad("CostWeights.Rbar not positive definite");
    if (!is_pd(s.costs.R)) bad("CostWeights.R not positive definite");
    if (!is_psd(s.costs.Qbar)) bad("CostWeights.Qbar not PSD");
    if (!is_psd(s.costs.Pbar)) bad("CostWeights.Pbar not PSD");
    if (!is_psd(s.costs.Q)) bad("CostWeights.Q not PSD");
    if (!is_psd(s.costs.P)) bad("CostWeights.P not PSD");
    if (!s.noise.Xi.allFinite()) bad("NoiseSpec.Xi not finite");
    const Mat E0 = s.noise.E(s.x0);
    if (E0.rows() != s.nx || E0.cols() != s.nx || !E0.allFinite())
      bad("NoiseSpec.E must return a finite nx x nx matrix");
  }

  for (size_t i = 0; i < s.constraints.rows.size(); ++i) {
    const auto& row = s.constraints.rows[i];
    if (row.c.size() != s.nx + s.nu) {
      bad("ConstraintSet row " + std::to_string(i) + " has wrong length");
      continue;
    }
    if (row.c.cwiseAbs().maxCoeff() == 0.0)
      bad("ConstraintSet row " + std::to_string(i) + " is zero");
    if (row.terminal && row.c.tail(s.nu).cwiseAbs().maxCoeff() != 0.0)
      bad("ConstraintSet terminal row " + std::to_string(i) + " touches inputs");
  }
  for (size_t i = 0; i < s.constraints.obstacles.size(); ++i) {
    const auto& ob = s.constraints.obstacles[i];
    if (ob.radius <= 0.0 || ob.center.size() != static_cast<int>(ob.dims.size()))
      bad("Obstacle " + std::to_string(i) + " malformed");
    for (int d : ob.dims)
      if (d < 0 || d >= s.nx) bad("Obstacle " + std::to_string(i) + " has an out-of-range dim");
  }

  // Envelope nonnegativity, spot-checked at x0, goal and a few seeded points.
  if (s.observation.envelope && s.x0.size() == s.nx) {
    Rng rng(0xb0b);
    auto probe = [&](const Vec& x) {
      const double b = s.observation.envelope(x);
      if (!(b >= 0.0)) bad("observation envelope negative near a probed state");
    };
    probe(s.x0);
    if (s.goal.rows() == s.nx && s.goal.cols() >= 1) probe(s.goal.col(0));
    for (int i = 0; i < 8; ++i) {
      Vec x = s.x0;
      for (int d = 0; d < s.nx; ++d) x(d) += rng.symmetric() * (1.0 + std::abs(s.x0(d)));
      probe(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in dynamics registry (used by the JSON spec loader and benchmarks).
// ---------------------------------------------------------------------------

inline DynamicsModel make_dynamics(const std::string& id, const std::vector<double>& params = {}) {
  DynamicsModel m;
  m.id = id;
  m.params = params;
  if (id == "single_integrator_2d") {
    m.nx = 2;
    m.nu = 2;
    m.f = [](const Vec&, const Vec& u) { return u; };
    m.jac = [](const Vec&, const Vec&, Mat& fx, Mat& fu) {
      fx = Mat::Zero(2, 2);
      fu = Mat::Identity(2, 2);
    };
  } else if (id == "dubins_car") {
    m.nx = 4;
    m.nu = 2;
    m.f = [](const Vec& x, const Vec& u) {
      Vec dx(4);
      dx << x(3) * std::cos(x(2)), x(3) * std::sin(x(2)), u(0), u(1);
      return dx;
    };
    m.jac = [](const Vec& x, const Vec&, Mat& fx, Mat& fu) {
      fx = Mat::Zero(4, 4);
      fx(0, 2) = -x(3) * std::sin(x(2));
      fx(0, 3) = std::cos(x(2));
      fx(1, 2) = x(3) * std::cos(x(2));
      fx(1, 3) = std::sin(x(2));
      fu = Mat::Zero(4, 2);
      fu(2, 0) = 1.0;
      fu(3, 1) = 1.0;
    };
  } else if (id == "quadrotor10d") {
    const double g = params.empty() ? 9.81 : params[0];
    m.nx = 10;
    m.nu = 3;
    m.params = {g};
    // state (px, py, pz, vx, vy, vz, tx, ty, wx, wy), input (ux, uy, uz)
    m.f = [g](const Vec& x, const Vec& u) {
      Vec dx(10);
      dx(0) = x(3);
      dx(1) = x(4);
      dx(2) = x(5);
      dx(3) = g * std::tan(x(6)) - 3.0 * x(3);
      dx(4) = g * std::tan(x(7)) - 3.0 * x(4);
      dx(5) = u(2) - g - x(5);
      dx(6) = -10.0 * x(6) + x(8);
      dx(7) = -10.0 * x(7) + x(9);
      dx(8) = -10.0 * x(6) + 50.0 * u(0);
      dx(9) = -10.0 * x(7) + 50.0 * u(1);
      return dx;
    };
    m.jac = [g](const Vec& x, const Vec&, Mat& fx, Mat& fu) {
      fx = Mat::Zero(10, 10);
      fx(0, 3) = fx(1, 4) = fx(2, 5) = 1.0;
      const double sx = 1.0 / std::cos(x(6)), sy = 1.0 / std::cos(x(7));
      fx(3, 3) = -3.0;
      fx(3, 6) = g * sx * sx;
      fx(4, 4) = -3.0;
      fx(4, 7) = g * sy * sy;
      fx(5, 5) = -1.0;
      fx(6, 6) = -10.0;
      fx(6, 8) = 1.0;
      fx(7, 7) = -10.0;
      fx(7, 9) = 1.0;
      fx(8, 6) = -10.0;
      fx(9, 7) = -10.0;
      fu = Mat::Zero(10, 3);
      fu(5, 2) = 1.0;
      fu(8, 0) = 50.0;
      fu(9, 1) = 50.0;
    };
  } else if (id == "linear") {
    // params = [nx, nu, vec(Ac) col-major, vec(Bc) col-major]
    if (params.size() < 2) throw SpecError("linear dynamics needs params [nx, nu, Ac, Bc]");
    const int nx = static_cast<int>(params[0]);
    const int nu = static_cast<int>(params[1]);
    if (static_cast<int>(params.size()) != 2 + nx * nx + nx * nu)
      throw SpecError("linear dynamics params have the wrong length");
    Mat Ac(nx, nx), Bc(nx, nu);
    int p = 2;
    for (int j = 0; j < nx; ++j)
      for (int i = 0; i < nx; ++i) Ac(i, j) = params[p++];
    for (int j = 0; j < nu; ++j)
      for (int i = 0; i < nx; ++i) Bc(i, j) = params[p++];
    m.nx = nx;
    m.nu = nu;
    m.f = [Ac, Bc](const Vec& x, const Vec& u) -> Vec { return Ac * x + Bc * u; };
    m.jac = [Ac, Bc](const Vec&, const Vec&, Mat& fx, Mat& fu) {
      fx = Ac;
      fu = Bc;
    };
  } else {
    throw SpecError("unknown dynamics id: " + id);
  }
  return m;
}

inline ObservationModel make_observation(const Mat& Cr, const std::string& envelope_id,
                                         const std::vector<double>& p) {
  ObservationModel obs;
  obs.Cr = Cr;
  obs.envelope_id = envelope_id;
  obs.envelope_params = p;
  if (envelope_id == "constant") {
    if (p.size() != 1) throw SpecError("constant envelope needs one parameter");
    const double c = p[0];
    obs.envelope = [c](const Vec&) { return c; };
    obs.envelope_grad = [n = Cr.cols()](const Vec&) { return Vec::Zero(n); };
  } else if (envelope_id == "quadratic_lightdark") {
    // b(x) = a * (x(i) - c)^2, params = [a, i, c]
    if (p.size() != 3) throw SpecError("quadratic_lightdark envelope needs [a, index, center]");
    const double a = p[0], c = p[2];
    const int i = static_cast<int>(p[1]);
    obs.envelope = [a, i, c](const Vec& x) { return a * (x(i) - c) * (x(i) - c); };
    obs.envelope_grad = [a, i, c, n = Cr.cols()](const Vec& x) {
      Vec g = Vec::Zero(n);
      g(i) = 2.0 * a * (x(i) - c);
      return g;
    };
  } else if (envelope_id == "gaussian_occlusion") {
    // b(x) = b0 + b1 * exp(-||p - c||^2 / r^2) over coordinates dims
    // params = [b0, b1, r, ndims, dims..., center...]
    if (p.size() < 6) throw SpecError("gaussian_occlusion envelope needs [b0,b1,r,nd,dims...,c...]");
    const double b0 = p[0], b1 = p[1], r = p[2];
    const int nd = static_cast<int>(p[3]);
    if (static_cast<int>(p.size()) != 4 + 2 * nd)
      throw SpecError("gaussian_occlusion envelope params have the wrong length");
    std::vector<int> dims(nd);
    Vec c(nd);
    for (int i = 0; i < nd; ++i) dims[i] = static_cast<int>(p[4 + i]);
    for (int i = 0; i < nd; ++i) c(i) = p[4 + nd + i];
    obs.envelope = [b0, b1, r, dims, c](const Vec& x) {
      double q = 0.0;
      for (size_t i = 0; i < dims.size(); ++i) {
        const double d = x(dims[i]) - c(i);
        q += d * d;
      }
      return b0 + b1 * std::exp(-q / (r * r));
    };
    obs.envelope_grad = [b0, b1, r, dims, c, n = Cr.cols()](const Vec& x) {
      double q = 0.0;
      for (size_t i = 0; i < dims.size(); ++i) {
        const double d = x(dims[i]) - c(i);
        q += d * d;
      }
      const double e = b1 * std::exp(-q / (r * r));
      Vec g = Vec::Zero(n);
      for (size_t i = 0; i < dims.size(); ++i)
        g(dims[i]) = e * (-2.0 * (x(dims[i]) - c(i)) / (r * r));
      return g;
    };
  } else {
    throw SpecError("unknown envelope id: " + envelope_id);
  }
  return obs;
}

}  // namespace sls
