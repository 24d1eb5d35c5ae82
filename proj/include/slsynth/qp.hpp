#pragma once

#include "slsynth/types.hpp"

#include <limits>

namespace sls {

// ---------------------------------------------------------------------------
// Dense convex QP solver:
//     min 1/2 x^T P x + q^T x   s.t.  l <= A x <= u
// Operator-splitting (ADMM) first-order method with Ruiz equilibration, a
// fixed iteration cap, infeasibility certificates and an active-set polish
// step.  Deterministic given inputs: no timing- or ordering-dependent
// decisions anywhere.
// ---------------------------------------------------------------------------

constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpProblem {
  Mat P;
  Vec q;
  Mat A;
  Vec l, u;

  int nvar() const { return static_cast<int>(P.rows()); }
  int ncon() const { return static_cast<int>(A.rows()); }
};

enum class QpStatus { Solved, MaxIter, PrimalInfeasible, DualInfeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::DualInfeasible: return "dual_infeasible";
  }
  return "?";
}

struct QpSettings {
  double eps_abs = 1e-9;
  double eps_rel = 1e-9;
  double eps_inf = 1e-7;
  int max_iter = 40000;
  int check_every = 25;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool polish = true;
  bool adaptive_rho = true;
};

struct QpResult {
  QpStatus status = QpStatus::MaxIter;
  Vec x, y, z;
  int iters = 0;
  double prim_res = kInf;
  double dual_res = kInf;
  double comp_res = kInf;
  bool polished = false;
  double objective = 0.0;
};

struct QpKktResiduals {
  double primal = 0.0, dual = 0.0, comp = 0.0;
};

inline QpKktResiduals qp_kkt_residuals(const QpProblem& p, const Vec& x, const Vec& y) {
  QpKktResiduals r;
  const Vec z = p.A * x;
  for (int i = 0; i < p.ncon(); ++i) {
    double viol = 0.0;
    if (z(i) > p.u(i)) viol = z(i) - p.u(i);
    if (z(i) < p.l(i)) viol = std::max(viol, p.l(i) - z(i));
    r.primal = std::max(r.primal, viol);
    double comp = 0.0;
    if (y(i) > 0.0 && p.u(i) < kInf) comp = y(i) * std::abs(p.u(i) - z(i));
    if (y(i) < 0.0 && p.l(i) > -kInf) comp = -y(i) * std::abs(z(i) - p.l(i));
    if (y(i) > 0.0 && p.u(i) >= kInf) comp = y(i) * 1e6;  // sign error on a one-sided row
    if (y(i) < 0.0 && p.l(i) <= -kInf) comp = -y(i) * 1e6;
    r.comp = std::max(r.comp, comp);
  }
  r.dual = (p.P * x + p.q + p.A.transpose() * y).cwiseAbs().maxCoeff();
  return r;
}

namespace detail {

struct RuizScaling {
  Vec D;  // nvar
  Vec E;  // ncon
  double c = 1.0;
};

inline RuizScaling ruiz_equilibrate(Mat& P, Vec& q, Mat& A, Vec& l, Vec& u, int iters = 10) {
  const int n = static_cast<int>(P.rows());
  const int m = static_cast<int>(A.rows());
  RuizScaling s;
  s.D = Vec::Ones(n);
  s.E = Vec::Ones(m);
  for (int it = 0; it < iters; ++it) {
    Vec dx(n), de(m);
    for (int j = 0; j < n; ++j) {
      double nrm = P.col(j).cwiseAbs().maxCoeff();
      if (m > 0) nrm = std::max(nrm, A.col(j).cwiseAbs().maxCoeff());
      dx(j) = (nrm > 1e-12) ? 1.0 / std::sqrt(nrm) : 1.0;
    }
    for (int i = 0; i < m; ++i) {
      const double nrm = A.row(i).cwiseAbs().maxCoeff();
      de(i) = (nrm > 1e-12) ? 1.0 / std::sqrt(nrm) : 1.0;
    }
    P = dx.asDiagonal() * P * dx.asDiagonal();
    q = dx.asDiagonal() * q;
    A = de.asDiagonal() * A * dx.asDiagonal();
    for (int i = 0; i < m; ++i) {
      if (l(i) > -kInf) l(i) *= de(i);
      if (u(i) < kInf) u(i) *= de(i);
    }
    s.D = s.D.cwiseProduct(dx);
    s.E = s.E.cwiseProduct(de);
    // Cost scaling keeps the objective O(1).
    double cost_nrm = std::max(P.cwiseAbs().maxCoeff(), q.cwiseAbs().maxCoeff());
    if (cost_nrm > 1e-12) {
      const double g = 1.0 / std::max(1.0, cost_nrm);
      P *= g;
      q *= g;
      s.c *= g;
    }
  }
  return s;
}

}  // namespace detail

inline QpResult solve_qp(const QpProblem& prob, const QpSettings& st = {},
                         const QpResult* warm = nullptr) {
  const int n = prob.nvar();
  const int m = prob.ncon();
  if (prob.q.size() != n || prob.A.cols() != n || prob.l.size() != m || prob.u.size() != m)
    throw ShapeError("solve_qp: dimension mismatch");

  QpResult res;
  res.x = Vec::Zero(n);
  res.y = Vec::Zero(m);
  res.z = Vec::Zero(m);

  // Crossed bounds are infeasible outright.
  for (int i = 0; i < m; ++i)
    if (prob.l(i) > prob.u(i) + 1e-12) {
      res.status = QpStatus::PrimalInfeasible;
      return res;
    }

  Mat P = prob.P;
  Vec q = prob.q;
  Mat A = prob.A;
  Vec l = prob.l, u = prob.u;
  detail::RuizScaling sc = detail::ruiz_equilibrate(P, q, A, l, u);

  Vec x = Vec::Zero(n), z = Vec::Zero(m), y = Vec::Zero(m);
  if (warm && warm->x.size() == n && warm->y.size() == m) {
    x = sc.D.cwiseInverse().asDiagonal() * warm->x;
    z = A * x;
    y = (sc.c * warm->y.array() / sc.E.array()).matrix();
  }

  // Per-row penalties: equality rows get a stiffer rho.
  auto make_rho = [&](double base) {
    Vec r(m);
    for (int i = 0; i < m; ++i) {
      const bool eq = (l(i) > -kInf) && (u(i) < kInf) && (u(i) - l(i) < 1e-14);
      const bool loose = (l(i) <= -kInf) && (u(i) >= kInf);
      r(i) = eq ? base * 1e3 : (loose ? base * 1e-6 : base);
    }
    return r;
  };
  double rho_base = st.rho;
  Vec rho = make_rho(rho_base);

  Eigen::LLT<Mat> kkt;
  auto factor = [&]() {
    Mat K = P + st.sigma * Mat::Identity(n, n);
    if (m > 0) K.noalias() += A.transpose() * rho.asDiagonal() * A;
    kkt.compute(K);
    if (kkt.info() != Eigen::Success) throw Error("solve_qp: reduced KKT factorization failed");
  };
  factor();

  auto unscaled_residuals = [&](const Vec& xs, const Vec& ys) {
    QpKktResiduals r;
    const Vec x0 = sc.D.asDiagonal() * xs;
    const Vec y0 = (ys.array() * sc.E.array() / sc.c).matrix();
    return qp_kkt_residuals(prob, x0, y0);
  };

  int it = 0;
  Vec dy_acc = Vec::Zero(m), dx_acc = Vec::Zero(n);
  for (it = 1; it <= st.max_iter; ++it) {
    const Vec x_prev = x, y_prev = y;
    Vec rhs = st.sigma * x - q;
    if (m > 0) rhs.noalias() += A.transpose() * (rho.asDiagonal() * z - y);
    const Vec xt = kkt.solve(rhs);
    const Vec zt = (m > 0) ? Vec(A * xt) : Vec::Zero(0);
    x = st.alpha * xt + (1.0 - st.alpha) * x;
    if (m > 0) {
      const Vec z_nom = st.alpha * zt + (1.0 - st.alpha) * z;
      const Vec z_cand = z_nom + (y.array() / rho.array()).matrix();
      Vec z_new(m);
      for (int i = 0; i < m; ++i) z_new(i) = std::min(std::max(z_cand(i), l(i)), u(i));
      y += (rho.array() * (z_nom - z_new).array()).matrix();
      z = z_new;
    }
    dx_acc = x - x_prev;
    dy_acc = y - y_prev;

    if (it % st.check_every == 0 || it == st.max_iter) {
      const QpKktResiduals r = unscaled_residuals(x, y);
      const double scale_p = 1.0 + (prob.A.rows() > 0 ? (prob.A * (sc.D.asDiagonal() * x)).cwiseAbs().maxCoeff() : 0.0);
      const double scale_d = 1.0 + prob.q.cwiseAbs().maxCoeff();
      if (r.primal <= st.eps_abs + st.eps_rel * scale_p &&
          r.dual <= st.eps_abs + st.eps_rel * scale_d) {
        res.status = QpStatus::Solved;
        break;
      }
      // Infeasibility certificates on the iterate differences.
      if (m > 0) {
        const double dy_nrm = dy_acc.cwiseAbs().maxCoeff();
        if (dy_nrm > 1e-14) {
          const Vec dyn = dy_acc / dy_nrm;
          double support = 0.0;
          bool bounded = true;
          for (int i = 0; i < m; ++i) {
            if (dyn(i) > 1e-12) {
              if (u(i) >= kInf) bounded = false;
              else support += u(i) * dyn(i);
            } else if (dyn(i) < -1e-12) {
              if (l(i) <= -kInf) bounded = false;
              else support += l(i) * dyn(i);
            }
          }
          if (bounded && (A.transpose() * dyn).cwiseAbs().maxCoeff() <= st.eps_inf &&
              support < -st.eps_inf) {
            res.status = QpStatus::PrimalInfeasible;
            res.iters = it;
            return res;
          }
        }
        const double dx_nrm = dx_acc.cwiseAbs().maxCoeff();
        if (dx_nrm > 1e-14) {
          const Vec dxn = dx_acc / dx_nrm;
          if ((P * dxn).cwiseAbs().maxCoeff() <= st.eps_inf && q.dot(dxn) < -st.eps_inf) {
            bool cone_ok = true;
            const Vec Adx = A * dxn;
            for (int i = 0; i < m; ++i) {
              if (u(i) < kInf && Adx(i) > st.eps_inf) cone_ok = false;
              if (l(i) > -kInf && Adx(i) < -st.eps_inf) cone_ok = false;
            }
            if (cone_ok) {
              res.status = QpStatus::DualInfeasible;
              res.iters = it;
              return res;
            }
          }
        }
      }
      if (st.adaptive_rho && it % (st.check_every * 8) == 0 && m > 0) {
        const double rp = (A * x - z).cwiseAbs().maxCoeff() /
                          std::max(1.0, std::max((A * x).cwiseAbs().maxCoeff(), z.cwiseAbs().maxCoeff()));
        const double rd = (P * x + q + A.transpose() * y).cwiseAbs().maxCoeff() /
                          std::max(1.0, std::max((P * x).cwiseAbs().maxCoeff(),
                                                 (A.transpose() * y).cwiseAbs().maxCoeff()));
        const double ratio = std::sqrt(std::max(rp, 1e-16) / std::max(rd, 1e-16));
        if (ratio > 5.0 || ratio < 0.2) {
          rho_base = std::min(1e6, std::max(1e-6, rho_base * ratio));
          rho = make_rho(rho_base);
          factor();
        }
      }
    }
  }
  res.iters = std::min(it, st.max_iter);

  // Unscale.
  res.x = sc.D.asDiagonal() * x;
  res.y = (y.array() * sc.E.array() / sc.c).matrix();
  res.z = prob.A * res.x;

  // Active-set polish: re-solve the KKT restricted to the active rows.
  if (st.polish && res.status == QpStatus::Solved && m > 0) {
    std::vector<int> act;
    std::vector<double> bact;
    for (int i = 0; i < m; ++i) {
      const bool eq = prob.u(i) - prob.l(i) < 1e-14;
      if (eq || res.y(i) > 1e-10 || (prob.u(i) < kInf && res.z(i) > prob.u(i) - 1e-9)) {
        if (prob.u(i) < kInf && (eq || res.y(i) >= 0.0)) {
          act.push_back(i);
          bact.push_back(prob.u(i));
          continue;
        }
      }
      if (res.y(i) < -1e-10 || (prob.l(i) > -kInf && res.z(i) < prob.l(i) + 1e-9)) {
        if (prob.l(i) > -kInf) {
          act.push_back(i);
          bact.push_back(prob.l(i));
        }
      }
    }
    const int ma = static_cast<int>(act.size());
    Mat K(n + ma, n + ma);
    K.setZero();
    K.topLeftCorner(n, n) = prob.P + 1e-12 * Mat::Identity(n, n);
    for (int a = 0; a < ma; ++a) {
      K.block(n + a, 0, 1, n) = prob.A.row(act[a]);
      K.block(0, n + a, n, 1) = prob.A.row(act[a]).transpose();
      K(n + a, n + a) = -1e-12;
    }
    Vec rhs(n + ma);
    rhs.head(n) = -prob.q;
    for (int a = 0; a < ma; ++a) rhs(n + a) = bact[a];
    Eigen::PartialPivLU<Mat> lu(K);
    Vec sol = lu.solve(rhs);
    // One refinement pass.
    sol += lu.solve(rhs - K * sol);
    Vec xp = sol.head(n);
    Vec yp = Vec::Zero(m);
    for (int a = 0; a < ma; ++a) yp(act[a]) = sol(n + a);
    const QpKktResiduals rp = qp_kkt_residuals(prob, xp, yp);
    const QpKktResiduals r0 = qp_kkt_residuals(prob, res.x, res.y);
    if (std::max({rp.primal, rp.dual, rp.comp}) <= std::max({r0.primal, r0.dual, r0.comp})) {
      res.x = xp;
      res.y = yp;
      res.z = prob.A * res.x;
      res.polished = true;
    }
  }

  const QpKktResiduals fin = qp_kkt_residuals(prob, res.x, res.y);
  res.prim_res = fin.primal;
  res.dual_res = fin.dual;
  res.comp_res = fin.comp;
  res.objective = 0.5 * res.x.dot(prob.P * res.x) + prob.q.dot(res.x);
  return res;
}

}  // namespace sls
