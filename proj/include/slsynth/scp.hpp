#pragma once

#include "slsynth/model.hpp"
#include "slsynth/qp.hpp"
#include "slsynth/riccati.hpp"
#include "slsynth/tubes.hpp"

#include <string>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Sequential convex programming around a shooting nominal: each iteration
// linearizes the dynamics, solves a trust-region QP for the nominal update
// (tightening margins and tube-cost coefficients frozen from the last
// response-map evaluation), re-integrates the nominal, and re-evaluates the
// double-Riccati response maps, tubes and margins at the new nominal.
// ---------------------------------------------------------------------------

struct SynthesisOptions {
  int max_iter = 20;
  double step_tol = 1e-3;
  double trust0 = 1.0;
  double trust_floor = 1e-4;
  int init_iters = 20;
  int tau_sweeps = 5;
  int threads = 1;
  // Inner back-off added to every tightened bound so the re-evaluated slacks
  // stay nonnegative after the shooting correction.
  double margin_backoff = 1e-6;
};

struct IterationRecord {
  int iter = 0;
  double step_norm = 0.0;
  std::string qp_status;
  int qp_iters = 0;
  bool slack_retry = false;
  double trust_radius = 0.0;
  double j_traj = 0.0;
  double j_tube = 0.0;
  double max_margin = 0.0;
  double min_slack = 0.0;
  bool tau_converged = true;
};

struct SynthesisResult {
  std::vector<Vec> z;  // T+1 nominal states
  std::vector<Vec> v;  // T nominal inputs
  StackedLtv ltv;
  ResponseMaps maps;
  GainSchedule gains;
  TubeParams tubes;
  TubeRadii radii;
  TightenReport tight;
  double j_traj = 0.0;
  double j_tube = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<IterationRecord> log;
};

namespace detail {

inline std::vector<Vec> integrate_nominal(const ProblemSpec& spec, const std::vector<Vec>& v) {
  std::vector<Vec> z(spec.T + 1);
  z[0] = spec.x0;
  for (int k = 0; k < spec.T; ++k) z[k + 1] = discretize_step(spec.dynamics, z[k], v[k], spec.dt);
  return z;
}

inline double traj_cost(const ProblemSpec& spec, const std::vector<Vec>& z,
                        const std::vector<Vec>& v) {
  double c = 0.0;
  for (int k = 0; k < spec.T; ++k) {
    const Vec dz = z[k] - spec.goal_at(k);
    c += dz.dot(spec.costs.Qbar * dz) + v[k].dot(spec.costs.Rbar * v[k]);
  }
  const Vec dT = z[spec.T] - spec.goal_at(spec.T);
  return c + dT.dot(spec.costs.Pbar * dT);
}

// Supporting half-space rows for the keep-out regions, regenerated around the
// current nominal each iteration.  The half-space lies entirely outside the
// disk, so feasibility of the row implies feasibility of the true constraint.
inline void append_obstacle_rows(const ProblemSpec& spec, const std::vector<Vec>& z,
                                 ConstraintSet& cs) {
  const int nd = spec.nx + spec.nu;
  for (const auto& ob : spec.constraints.obstacles) {
    for (int k = 0; k <= spec.T; ++k) {
      Vec p(ob.dims.size());
      for (size_t d = 0; d < ob.dims.size(); ++d) p(d) = z[k](ob.dims[d]);
      Vec n = p - ob.center;
      const double dist = n.norm();
      if (dist < 1e-9) {
        n = Vec::Zero(p.size());
        n(0) = 1.0;
      } else {
        n /= dist;
      }
      // n^T (p - c) >= radius  ->  -n^T p + (n^T c + radius) <= 0
      ConstraintRow row;
      row.c = Vec::Zero(nd);
      for (size_t d = 0; d < ob.dims.size(); ++d) row.c(ob.dims[d]) = -n(d);
      row.b = n.dot(ob.center) + ob.radius;
      row.terminal = (k == spec.T);
      row.at_k = (k == spec.T) ? -1 : k;
      cs.rows.push_back(row);
    }
  }
}

// Everything the QP freezes between nominal updates.
struct Evaluation {
  StackedLtv ltv;
  LqgSolution lqg;
  TubeParams tubes;
  TubeRadii radii;
  ConstraintSet rows;  // static rows + obstacle linearizations
  TightenReport tight;
  Vec beta;  // envelope tube-cost coefficients, one per measurement channel
  bool tau_converged = true;
};

inline StackedLtv make_ltv(const ProblemSpec& spec, const LinearizedModel& lin,
                           const TubeParams& tubes) {
  StackedLtv ltv;
  ltv.nx = spec.nx;
  ltv.nu = spec.nu;
  ltv.nr = spec.nr;
  ltv.T = spec.T;
  ltv.A = lin.A;
  ltv.B = lin.B;
  ltv.C.assign(spec.T, spec.observation.Cr);
  ltv.Xi = tubes.Sigma[0];
  ltv.E.assign(tubes.Sigma.begin() + 1, tubes.Sigma.end());
  ltv.F = tubes.Upsilon;
  return ltv;
}

inline Evaluation evaluate_nominal(const ProblemSpec& spec, const std::vector<Vec>& z,
                                   const std::vector<Vec>& v, Vec tau,
                                   const SynthesisOptions& opt) {
  Evaluation ev;
  const LinearizedModel lin = linearize(spec.dynamics, z, v, spec.dt);
  if (tau.size() != spec.T) tau = Vec::Zero(spec.T);

  // With a nonzero linearization-error hook the scalings depend on tau, which
  // depends on the radii; iterate the assignment to a fixed point.
  const int sweeps = spec.noise.zero_sigma() ? 1 : opt.tau_sweeps;
  for (int s = 0; s < sweeps; ++s) {
    ev.tubes = build_scalings(z, v, tau, spec);
    ev.ltv = make_ltv(spec, lin, ev.tubes);
    ev.lqg = solve_lqg(ev.ltv, spec.costs.Q, spec.costs.R, spec.costs.P, std::nullopt, opt.threads);
    ev.radii = tube_radii(ev.lqg.maps, ev.tubes);
    const Vec tau_new = ev.radii.max_r;
    const double drift = (tau_new - tau).cwiseAbs().maxCoeff();
    tau = tau_new;
    if (spec.noise.zero_sigma() || drift <= 1e-9 * (1.0 + tau.cwiseAbs().maxCoeff())) break;
    if (s == sweeps - 1) ev.tau_converged = false;
  }
  ev.tubes.tau = tau;
  ev.radii = tube_radii(ev.lqg.maps, ev.tubes);

  ev.rows = spec.constraints;
  append_obstacle_rows(spec, z, ev.rows);
  ev.tight = tighten(ev.lqg.maps, ev.tubes, ev.rows, z, v);

  // Tube-cost sensitivity to the envelope: J_tube's measurement part equals
  // sum_j beta_j b(z_j)^2 for diagonal Upsilon.
  const Mat Qh = psd_sqrt(spec.costs.Q), Rh = psd_sqrt(spec.costs.R), Ph = psd_sqrt(spec.costs.P);
  ev.beta = Vec::Zero(spec.T);
  const ResponseMaps& m = ev.lqg.maps;
  for (int j = 0; j < spec.T; ++j) {
    double b = 0.0;
    for (int k = j + 1; k <= spec.T; ++k) {
      const Mat& W = (k == spec.T) ? Ph : Qh;
      b += (W * m.xe.at(k, j)).squaredNorm();
      if (k < spec.T) b += (Rh * m.ue.at(k, j)).squaredNorm();
    }
    ev.beta(j) = b;
  }
  return ev;
}

// Frozen tube cost as a function of the nominal (exact value, used in the
// merit test): the envelope part varies with z, the rest is constant.
inline double tube_cost_envelope_part(const ProblemSpec& spec, const Vec& beta,
                                      const std::vector<Vec>& z) {
  double c = 0.0;
  for (int j = 0; j < spec.T; ++j) {
    const double b = spec.observation.b(z[j]);
    c += beta(j) * b * b;
  }
  return c;
}

inline Vec envelope_gradient(const ProblemSpec& spec, const Vec& x) {
  if (spec.observation.envelope_grad) return spec.observation.envelope_grad(x);
  Vec g(spec.nx);
  for (int i = 0; i < spec.nx; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (spec.observation.envelope(xp) - spec.observation.envelope(xm)) / (2.0 * h);
  }
  return g;
}

struct QpSubproblem {
  QpProblem qp;
  int trust_row_begin = 0;  // trust-region rows occupy the tail of A
  int nvar = 0;
};

// Decision vector: [dz_0 .. dz_T, dv_0 .. dv_{T-1}].
inline QpSubproblem build_qp_subproblem(const ProblemSpec& spec, const std::vector<Vec>& z,
                                        const std::vector<Vec>& v, const LinearizedModel& lin,
                                        const Evaluation* ev, bool tightened, double trust,
                                        double margin_backoff) {
  const int nx = spec.nx, nu = spec.nu, T = spec.T;
  const int nvar = (T + 1) * nx + T * nu;
  auto zoff = [&](int k) { return k * nx; };
  auto voff = [&](int k) { return (T + 1) * nx + k * nu; };

  QpSubproblem sub;
  sub.nvar = nvar;
  QpProblem& qp = sub.qp;
  qp.P = Mat::Zero(nvar, nvar);
  qp.q = Vec::Zero(nvar);

  // Exact quadratic tracking objective about the current nominal.
  for (int k = 0; k <= T; ++k) {
    const Mat& W = (k == T) ? spec.costs.Pbar : spec.costs.Qbar;
    qp.P.block(zoff(k), zoff(k), nx, nx) += 2.0 * W;
    qp.q.segment(zoff(k), nx) += 2.0 * W * (z[k] - spec.goal_at(k));
  }
  for (int k = 0; k < T; ++k) {
    qp.P.block(voff(k), voff(k), nu, nu) += 2.0 * spec.costs.Rbar;
    qp.q.segment(voff(k), nu) += 2.0 * spec.costs.Rbar * v[k];
  }
  // Gauss-Newton of the envelope-dependent tube cost (frozen maps).
  if (tightened && ev) {
    for (int j = 0; j < T; ++j) {
      const double beta = ev->beta(j);
      if (beta <= 0.0) continue;
      const double b = spec.observation.b(z[j]);
      const Vec g = envelope_gradient(spec, z[j]);
      qp.P.block(zoff(j), zoff(j), nx, nx) += 2.0 * beta * (g * g.transpose());
      qp.q.segment(zoff(j), nx) += 2.0 * beta * b * g;
    }
  }

  // Constraint rows: initial state pin, defect-corrected dynamics, tightened
  // inequality rows, then the trust-region box.
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> lo, hi;
  auto add_row = [&](const Eigen::RowVectorXd& r, double l, double u) {
    rows.push_back(r);
    lo.push_back(l);
    hi.push_back(u);
  };

  for (int i = 0; i < nx; ++i) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nvar);
    r(zoff(0) + i) = 1.0;
    add_row(r, 0.0, 0.0);
  }
  for (int k = 0; k < T; ++k) {
    const Vec defect = discretize_step(spec.dynamics, z[k], v[k], spec.dt) - z[k + 1];
    for (int i = 0; i < nx; ++i) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nvar);
      for (int c = 0; c < nx; ++c) r(zoff(k) + c) = lin.A[k](i, c);
      for (int c = 0; c < nu; ++c) r(voff(k) + c) = lin.B[k](i, c);
      r(zoff(k + 1) + i) -= 1.0;
      add_row(r, -defect(i), -defect(i));
    }
  }

  // Inequalities come from the tighten report when margins are active, so the
  // QP rows and the certification rows are literally the same objects.
  const ConstraintSet* cs = ev ? &ev->rows : &spec.constraints;
  ConstraintSet fallback;
  if (!ev) {
    fallback = spec.constraints;
    append_obstacle_rows(spec, z, fallback);
    cs = &fallback;
  }
  auto add_ineq = [&](const ConstraintRow& row, int k, double margin) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nvar);
    for (int c = 0; c < nx; ++c) r(zoff(k) + c) = row.c(c);
    if (k < T)
      for (int c = 0; c < nu; ++c) r(voff(k) + c) = row.c(nx + c);
    const double nominal = row.c.head(nx).dot(z[k]) + ((k < T) ? row.c.tail(nu).dot(v[k]) : 0.0) +
                           row.b;
    const double bound = -(nominal + margin) - (margin > 0.0 ? margin_backoff : 0.0);
    add_row(r, -kInf, bound);
  };
  if (tightened && ev) {
    for (const auto& e : ev->tight.entries) add_ineq(cs->rows[e.row], e.k, e.margin);
  } else {
    for (const auto& row : cs->rows) {
      int k_lo = row.terminal ? T : 0;
      int k_hi = row.terminal ? T : T - 1;
      if (!row.terminal && row.at_k >= 0) k_lo = k_hi = std::min(row.at_k, T - 1);
      for (int k = k_lo; k <= k_hi; ++k) add_ineq(row, k, 0.0);
    }
  }

  sub.trust_row_begin = static_cast<int>(rows.size());
  for (int i = 0; i < nvar; ++i) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nvar);
    r(i) = 1.0;
    add_row(r, -trust, trust);
  }

  const int m = static_cast<int>(rows.size());
  qp.A = Mat(m, nvar);
  qp.l = Vec(m);
  qp.u = Vec(m);
  for (int i = 0; i < m; ++i) {
    qp.A.row(i) = rows[i];
    qp.l(i) = lo[i];
    qp.u(i) = hi[i];
  }
  return sub;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core SCP loop shared by initial_guess, ce_baseline and synthesize.
// ---------------------------------------------------------------------------

namespace detail {

// Total violation of the rows the QP enforces, at a candidate nominal.  With
// a frozen evaluation the margined (linearized) rows are used; otherwise the
// raw rows plus the true keep-out distances.
inline double constraint_violation(const ProblemSpec& spec, const Evaluation* ev,
                                   const std::vector<Vec>& z, const std::vector<Vec>& v) {
  const int T = spec.T;
  double total = 0.0;
  auto row_value = [&](const ConstraintRow& row, int k) {
    return row.c.head(spec.nx).dot(z[k]) + ((k < T) ? row.c.tail(spec.nu).dot(v[k]) : 0.0) + row.b;
  };
  if (ev) {
    for (const auto& e : ev->tight.entries)
      total += std::max(0.0, row_value(ev->rows.rows[e.row], e.k) + e.margin);
    return total;
  }
  for (const auto& row : spec.constraints.rows) {
    int k_lo = row.terminal ? T : 0, k_hi = row.terminal ? T : T - 1;
    if (!row.terminal && row.at_k >= 0) k_lo = k_hi = std::min(row.at_k, T - 1);
    for (int k = k_lo; k <= k_hi; ++k) total += std::max(0.0, row_value(row, k));
  }
  for (const auto& ob : spec.constraints.obstacles)
    for (int k = 0; k <= T; ++k) {
      double q = 0.0;
      for (size_t d = 0; d < ob.dims.size(); ++d) {
        const double dd = z[k](ob.dims[d]) - ob.center(d);
        q += dd * dd;
      }
      total += std::max(0.0, ob.radius - std::sqrt(q));
    }
  return total;
}

struct ScpState {
  std::vector<Vec> z, v;
  std::vector<IterationRecord> log;
  bool converged = false;
  int iterations = 0;
};

// A pair of opposing rows with no gap is infeasible for every nominal; catch
// it before iterating (a crossed box shows up this way).
inline void check_contradictory_rows(const ProblemSpec& spec) {
  const auto& rows = spec.constraints.rows;
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = i + 1; j < rows.size(); ++j) {
      if (rows[i].terminal != rows[j].terminal) continue;
      if (rows[i].at_k != rows[j].at_k) continue;
      const double scale = rows[i].c.cwiseAbs().maxCoeff();
      if ((rows[i].c + rows[j].c).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, scale) &&
          rows[i].b + rows[j].b > 1e-12)
        throw SynthesisInfeasible("contradictory constraint rows " + std::to_string(i) + " and " +
                                  std::to_string(j));
    }
}

// Exact-penalty relaxation: one slack per inequality row in [row_begin,
// row_end); equality, pin and trust rows stay hard.
inline QpResult solve_soft_qp(const QpProblem& base, int row_begin, int row_end) {
  const int n0 = base.nvar();
  const int m0 = base.ncon();
  const int ns = row_end - row_begin;
  QpProblem soft;
  soft.P = Mat::Zero(n0 + ns, n0 + ns);
  soft.P.topLeftCorner(n0, n0) = base.P;
  soft.q = Vec::Zero(n0 + ns);
  soft.q.head(n0) = base.q;
  soft.A = Mat::Zero(m0 + ns, n0 + ns);
  soft.A.topLeftCorner(m0, n0) = base.A;
  soft.l = Vec(m0 + ns);
  soft.u = Vec(m0 + ns);
  soft.l.head(m0) = base.l;
  soft.u.head(m0) = base.u;
  // Linear exact-penalty weight above the expected multiplier scale, plus
  // quadratic curvature so the splitting iterations converge briskly.
  const double penalty = 1e3 * (1.0 + base.q.cwiseAbs().maxCoeff());
  for (int s = 0; s < ns; ++s) {
    soft.A(row_begin + s, n0 + s) = -1.0;  // row - slack <= bound
    soft.A(m0 + s, n0 + s) = 1.0;          // slack >= 0
    soft.l(m0 + s) = 0.0;
    soft.u(m0 + s) = kInf;
    soft.q(n0 + s) = penalty;
    soft.P(n0 + s, n0 + s) = 0.1 * penalty;
  }
  QpResult qr = solve_qp(soft);
  if (qr.x.size() == n0 + ns) qr.x.conservativeResize(n0);
  return qr;
}

inline ScpState run_scp(const ProblemSpec& spec, const SynthesisOptions& opt, bool tightened,
                        std::vector<Vec> z, std::vector<Vec> v, Vec tau0,
                        Evaluation* ev_out = nullptr) {
  const int T = spec.T;
  check_contradictory_rows(spec);
  ScpState st;
  st.z = std::move(z);
  st.v = std::move(v);

  Evaluation ev;
  Vec tau = tau0;
  if (tightened) {
    ev = evaluate_nominal(spec, st.z, st.v, tau, opt);
    tau = ev.tubes.tau;
  }

  double trust = opt.trust0;
  QpResult warm;
  bool have_warm = false;
  const int iters = tightened ? opt.max_iter : opt.init_iters;

  for (int it = 1; it <= iters; ++it) {
    IterationRecord rec;
    rec.iter = it;
    rec.trust_radius = trust;
    const LinearizedModel lin = linearize(spec.dynamics, st.z, st.v, spec.dt);

    QpSubproblem sub = build_qp_subproblem(spec, st.z, st.v, lin, tightened ? &ev : nullptr,
                                           tightened, trust, opt.margin_backoff);
    const double merit_now = traj_cost(spec, st.z, st.v) +
                             (tightened ? tube_cost_envelope_part(spec, ev.beta, st.z) : 0.0);

    std::vector<Vec> z_new;
    std::vector<Vec> v_new;
    double step_norm = 0.0;
    bool accepted = false;
    while (true) {
      QpResult qr = solve_qp(sub.qp, {}, have_warm ? &warm : nullptr);
      rec.qp_status = to_string(qr.status);
      rec.qp_iters = qr.iters;
      if (qr.status == QpStatus::PrimalInfeasible) {
        // The trust region often cannot reach a distant terminal set in one
        // step; retry with exact-penalty slacks on the inequality rows.  The
        // penalty drives the slacks to zero as soon as the rows become
        // reachable, and a contradiction-free row set was checked up front.
        const int ineq0 = spec.nx + spec.T * spec.nx;
        QpResult qr2 = solve_soft_qp(sub.qp, ineq0, sub.trust_row_begin);
        if (qr2.status == QpStatus::Solved) {
          qr = qr2;
          rec.slack_retry = true;
          rec.qp_status = "solved_soft";
        }
      }
      if (qr.status == QpStatus::MaxIter && trust > opt.trust_floor) {
        trust *= 0.5;
        rec.trust_radius = trust;
        for (int i = sub.trust_row_begin; i < sub.qp.ncon(); ++i) {
          sub.qp.l(i) = -trust;
          sub.qp.u(i) = trust;
        }
        continue;
      }
      if (qr.status != QpStatus::Solved && qr.status != QpStatus::MaxIter) {
        throw SynthesisInfeasible(std::string(tightened ? "QP " : "initializer QP ") +
                                  to_string(qr.status) + " at iteration " + std::to_string(it));
      }
      if (qr.x.size() != sub.nvar) throw Error("QP returned a wrong-sized step");
      if (qr.y.size() == sub.qp.ncon()) {
        warm = qr;
        have_warm = true;
      }

      // Candidate: shooting re-integration of the updated inputs.
      v_new = st.v;
      for (int k = 0; k < T; ++k)
        v_new[k] += qr.x.segment((T + 1) * spec.nx + k * spec.nu, spec.nu);
      try {
        z_new = integrate_nominal(spec, v_new);
      } catch (const IntegrationDiverged&) {
        if (trust > opt.trust_floor) {
          trust *= 0.5;
          for (int i = sub.trust_row_begin; i < sub.qp.ncon(); ++i) {
            sub.qp.l(i) = -trust;
            sub.qp.u(i) = trust;
          }
          continue;
        }
        if (!tightened) throw InitialGuessFailed("nominal integration diverged");
        throw SynthesisInfeasible("nominal integration diverged");
      }
      step_norm = qr.x.head(sub.nvar).norm();

      const double merit_new = traj_cost(spec, z_new, v_new) +
                               (tightened ? tube_cost_envelope_part(spec, ev.beta, z_new) : 0.0) +
                               1e6 * constraint_violation(spec, tightened ? &ev : nullptr, z_new,
                                                          v_new);
      const double merit_ref = merit_now + 1e6 * constraint_violation(spec, tightened ? &ev : nullptr,
                                                                      st.z, st.v);
      if (merit_new <= merit_ref + 1e-9 * (1.0 + std::abs(merit_ref)) || trust <= opt.trust_floor) {
        accepted = true;
        break;
      }
      trust *= 0.5;
      for (int i = sub.trust_row_begin; i < sub.qp.ncon(); ++i) {
        sub.qp.l(i) = -trust;
        sub.qp.u(i) = trust;
      }
    }
    (void)accepted;

    st.z = z_new;
    st.v = v_new;
    rec.step_norm = step_norm;
    rec.j_traj = traj_cost(spec, st.z, st.v);

    if (tightened) {
      ev = evaluate_nominal(spec, st.z, st.v, tau, opt);
      tau = ev.tubes.tau;
      rec.j_tube = ev.lqg.cost;
      rec.max_margin = ev.tight.max_margin;
      rec.min_slack = ev.tight.min_slack;
      rec.tau_converged = ev.tau_converged;
    }
    st.log.push_back(rec);
    st.iterations = it;

    const bool small_step = step_norm <= opt.step_tol;
    const bool feasible = !tightened || ev.tight.min_slack >= -1e-8;
    if (small_step && feasible) {
      st.converged = true;
      break;
    }
  }
  if (tightened && ev_out) *ev_out = std::move(ev);
  return st;
}

}  // namespace detail

// Tightening-free SCP used to produce a dynamically feasible starting
// trajectory (stands in for an external NLP initializer).
inline std::pair<std::vector<Vec>, std::vector<Vec>> initial_guess(
    const ProblemSpec& spec, const SynthesisOptions& opt = {}) {
  std::vector<Vec> v(spec.T, Vec::Zero(spec.nu));
  std::vector<Vec> z;
  try {
    z = detail::integrate_nominal(spec, v);
  } catch (const IntegrationDiverged&) {
    throw InitialGuessFailed("zero-input rollout diverged");
  }
  detail::ScpState st = detail::run_scp(spec, opt, /*tightened=*/false, std::move(z), std::move(v),
                                        Vec::Zero(spec.T));
  return {st.z, st.v};
}

inline SynthesisResult synthesize(const ProblemSpec& spec, const SynthesisOptions& opt = {}) {
  {
    const auto violations = validate_spec(spec);
    if (!violations.empty()) {
      std::string msg = "invalid spec:";
      for (const auto& vi : violations) msg += "\n  - " + vi;
      throw SpecError(msg);
    }
  }
  auto [z0, v0] = initial_guess(spec, opt);
  detail::Evaluation ev;
  detail::ScpState st = detail::run_scp(spec, opt, /*tightened=*/true, std::move(z0), std::move(v0),
                                        Vec::Zero(spec.T), &ev);

  SynthesisResult res;
  res.z = st.z;
  res.v = st.v;
  res.ltv = ev.ltv;
  res.maps = ev.lqg.maps;
  res.gains = recover_gains(ev.lqg.maps, ev.ltv);
  res.tubes = ev.tubes;
  res.radii = ev.radii;
  res.tight = ev.tight;
  res.j_traj = detail::traj_cost(spec, st.z, st.v);
  res.j_tube = ev.lqg.cost;
  res.converged = st.converged;
  res.iterations = st.iterations;
  res.log = st.log;

  if (!res.tight.feasible(1e-8))
    throw SynthesisInfeasible("tightened constraints violated at the final nominal (min slack " +
                              std::to_string(res.tight.min_slack) + ")");
  return res;
}

// Certainty-equivalent baseline: the tightening-free nominal with response
// maps, tubes and margins computed once post hoc.  Its report may be
// infeasible; that gap is what the comparison plots show.
inline SynthesisResult ce_baseline(const ProblemSpec& spec, const SynthesisOptions& opt = {}) {
  {
    const auto violations = validate_spec(spec);
    if (!violations.empty()) throw SpecError("invalid spec");
  }
  auto [z, v] = initial_guess(spec, opt);
  detail::Evaluation ev = detail::evaluate_nominal(spec, z, v, Vec::Zero(spec.T), opt);

  SynthesisResult res;
  res.z = z;
  res.v = v;
  res.ltv = ev.ltv;
  res.maps = ev.lqg.maps;
  res.gains = recover_gains(ev.lqg.maps, ev.ltv);
  res.tubes = ev.tubes;
  res.radii = ev.radii;
  res.tight = ev.tight;
  res.j_traj = detail::traj_cost(spec, z, v);
  res.j_tube = ev.lqg.cost;
  res.converged = true;
  res.iterations = 0;
  return res;
}

}  // namespace sls
