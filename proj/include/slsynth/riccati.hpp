#pragma once

#include "slsynth/sls_ops.hpp"
#include "slsynth/types.hpp"

#include <Eigen/Sparse>

#include <optional>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Backward control Riccati recursion.
//
// Without per-column weight modifications the recursion is column-independent
// and computed once.  The per-column hook exists for constrained-cost
// heuristics that reweight individual disturbance channels.
// ---------------------------------------------------------------------------

struct PerColumnMods {
  // adjust(j, Q, R, P) may modify the weights used for process column j.
  std::function<void(int, Mat&, Mat&, Mat&)> adjust;
};

struct ControlRecursion {
  bool per_column = false;
  // Shared path: S[k] cost-to-go (k = 0..T), K[k] gains (k = 0..T-1).
  std::vector<Mat> S, K;
  // Per-column path: cols[j] holds that column's S and K sequences.
  struct Column {
    std::vector<Mat> S, K;
  };
  std::vector<Column> cols;

  const Mat& gain(int k, int j) const { return per_column ? cols[j].K[k] : K[k]; }
};

struct KalmanRecursion {
  std::vector<Mat> Pi;  // Pi[j], j = 0..T
  std::vector<Mat> L;   // L[j], j = 1..T (L[0] unused), nr x nx
};

namespace detail {

inline void control_sweep(const StackedLtv& ltv, const Mat& Q, const Mat& R, const Mat& P,
                          std::vector<Mat>& S, std::vector<Mat>& K) {
  const int T = ltv.T;
  S.assign(T + 1, Mat());
  K.assign(T, Mat());
  S[T] = symmetrize(P);
  for (int k = T - 1; k >= 0; --k) {
    const Mat& A = ltv.A[k];
    const Mat& B = ltv.B[k];
    const Mat BtS = B.transpose() * S[k + 1];
    const Mat H = symmetrize(R + BtS * B);
    Eigen::LLT<Mat> llt(H);
    if (llt.info() != Eigen::Success)
      throw RiccatiSingular("R + B^T S B not positive definite at step " + std::to_string(k));
    K[k] = -llt.solve(BtS * A);
    S[k] = symmetrize(Q + A.transpose() * S[k + 1] * A + (A.transpose() * BtS.transpose()) * K[k]);
  }
}

}  // namespace detail

inline ControlRecursion backward_control(const StackedLtv& ltv, const Mat& Q, const Mat& R,
                                         const Mat& P,
                                         const std::optional<PerColumnMods>& mods = std::nullopt) {
  ControlRecursion out;
  if (!mods || !mods->adjust) {
    out.per_column = false;
    detail::control_sweep(ltv, Q, R, P, out.S, out.K);
    return out;
  }
  out.per_column = true;
  out.cols.resize(ltv.T + 1);
  for (int j = 0; j <= ltv.T; ++j) {
    Mat Qj = Q, Rj = R, Pj = P;
    mods->adjust(j, Qj, Rj, Pj);
    detail::control_sweep(ltv, Qj, Rj, Pj, out.cols[j].S, out.cols[j].K);
  }
  return out;
}

// Forward-in-j covariance recursion with its observer gains, exactly as the
// innovation form writes them (L has the sign that makes
// Pi_{j+1} = E E^T + A Pi A^T + A Pi C^T L_{j+1}).
inline KalmanRecursion backward_kalman(const StackedLtv& ltv) {
  const int T = ltv.T;
  KalmanRecursion out;
  out.Pi.assign(T + 1, Mat());
  out.L.assign(T + 1, Mat());
  out.Pi[0] = symmetrize(ltv.Xi * ltv.Xi.transpose());
  for (int j = 0; j < T; ++j) {
    const Mat& A = ltv.A[j];
    const Mat& C = ltv.C[j];
    const Mat& E = ltv.E[j];
    const Mat& F = ltv.F[j];
    const Mat CPi = C * out.Pi[j];
    const Mat innov = symmetrize(F * F.transpose() + CPi * C.transpose());
    Eigen::LLT<Mat> llt(innov);
    if (llt.info() != Eigen::Success)
      throw KalmanSingular("innovation matrix singular at step " + std::to_string(j) +
                           " (measurement scaling must be strictly positive or the prior full rank)");
    out.L[j + 1] = -llt.solve(CPi * A.transpose());
    out.Pi[j + 1] = symmetrize(E * E.transpose() + A * out.Pi[j] * A.transpose() +
                               A * CPi.transpose() * out.L[j + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-loop propagation operators.
//   bx, bu: state-feedback responses, forward in k per process column
//   hx, hy: observer responses, backward in j per row (hy column j multiplies
//           the scaled noise on the measurement of x_j)
// ---------------------------------------------------------------------------

struct PropagationOps {
  int nx = 0, nu = 0, nr = 0, T = 0;
  bool shared_gains = true;
  BlockLT bx, bu, hx, hy;
};

inline PropagationOps forward_passes(const StackedLtv& ltv, const ControlRecursion& ctrl,
                                     const KalmanRecursion& kal, int threads = 1) {
  const int nx = ltv.nx, nu = ltv.nu, nr = ltv.nr, T = ltv.T;
  PropagationOps P;
  P.nx = nx;
  P.nu = nu;
  P.nr = nr;
  P.T = T;
  P.shared_gains = !ctrl.per_column;
  P.bx = BlockLT(T + 1, T + 1, nx, nx, 0);
  P.bu = BlockLT(T, T + 1, nu, nx, 0);
  P.hx = BlockLT(T + 1, T + 1, nx, nx, 0);
  P.hy = BlockLT(T + 1, T, nx, nr, 1);

  // Control side, columns independent.
  parallel_for(T + 1, threads, [&](int j) {
    P.bx.at(j, j) = Mat::Identity(nx, nx);
    for (int k = j; k < T; ++k) {
      const Mat& K = ctrl.gain(k, j);
      P.bu.at(k, j) = K * P.bx.at(k, j);
      P.bx.at(k + 1, j) = ltv.A[k] * P.bx.at(k, j) + ltv.B[k] * P.bu.at(k, j);
    }
  });
  // Observer side, rows independent.
  parallel_for(T + 1, threads, [&](int k) {
    P.hx.at(k, k) = Mat::Identity(nx, nx);
    for (int j = k - 1; j >= 0; --j) {
      P.hy.at(k, j) = P.hx.at(k, j + 1) * kal.L[j + 1].transpose();
      P.hx.at(k, j) = P.hx.at(k, j + 1) * ltv.A[j] + P.hy.at(k, j) * ltv.C[j];
    }
  });
  return P;
}

// Residuals of the two stacked relations the propagation operators satisfy:
// (I - ZA) bx - ZB bu = I and hx (I - ZA) - hy ZC = I.
inline std::pair<double, double> propagation_residuals(const PropagationOps& P,
                                                       const StackedLtv& ltv) {
  const int T = ltv.T;
  const Mat I = Mat::Identity(ltv.nx, ltv.nx);
  double left = 0.0, right = 0.0;
  for (int k = 0; k <= T; ++k)
    for (int j = 0; j <= T; ++j) {
      Mat r = P.bx.get(k, j);
      if (k >= 1) r -= ltv.A[k - 1] * P.bx.get(k - 1, j) + ltv.B[k - 1] * P.bu.get(k - 1, j);
      if (k == j) r -= I;
      left = std::max(left, r.cwiseAbs().maxCoeff());

      Mat s = P.hx.get(k, j);
      if (j < T) s -= P.hx.get(k, j + 1) * ltv.A[j] + P.hy.get(k, j) * ltv.C[j];
      if (k == j) s -= I;
      right = std::max(right, s.cwiseAbs().maxCoeff());
    }
  return {left, right};
}

// ---------------------------------------------------------------------------
// Assembly of the four response maps from the propagation operators.
//
// With column-shared gains the triple products collapse to one running
// recursion per column (the strictly-lower factor M hx = I + N has low-rank
// blocks N_{k,j} = L_k^T C_{k-1} hx_{k-1,j}), which keeps the whole solve at
// O(T^2) block operations.  With per-column gains the products are formed
// directly.
// ---------------------------------------------------------------------------

namespace detail {

inline ResponseMaps assemble_shared(const PropagationOps& P, const StackedLtv& ltv,
                                    const ControlRecursion& ctrl, const KalmanRecursion& kal,
                                    int threads) {
  const int nx = ltv.nx, T = ltv.T;
  ResponseMaps m = ResponseMaps::zeros(ltv.nx, ltv.nu, ltv.nr, T);

  std::vector<Mat> Abar(T);
  for (int k = 0; k < T; ++k) Abar[k] = ltv.A[k] + ltv.B[k] * ctrl.K[k];

  // Process channels.
  parallel_for(T + 1, threads, [&](int j) {
    Mat W = Mat::Zero(nx, nx);  // (bx N)_{k,j}
    m.xw.at(j, j) = Mat::Identity(nx, nx);
    if (j < T) m.uw.at(j, j) = Mat::Zero(ltv.nu, nx);
    for (int k = j + 1; k <= T; ++k) {
      const Mat N = kal.L[k].transpose() * (ltv.C[k - 1] * P.hx.at(k - 1, j));
      W = Abar[k - 1] * W + N;
      m.xw.at(k, j) = P.hx.at(k, j) - W;
      if (k < T) m.uw.at(k, j) = -(ctrl.K[k] * W);
    }
  });
  // Measurement channels.
  parallel_for(T, threads, [&](int j) {
    Mat Wt;  // (bx MHy)_{k,j}
    for (int k = j + 1; k <= T; ++k) {
      const Mat Nt = (k == j + 1)
                         ? Mat(kal.L[j + 1].transpose())
                         : Mat(kal.L[k].transpose() * (ltv.C[k - 1] * P.hy.at(k - 1, j)));
      Wt = (k == j + 1) ? Nt : Mat(Abar[k - 1] * Wt + Nt);
      m.xe.at(k, j) = P.hy.at(k, j) - Wt;
      if (k < T) m.ue.at(k, j) = -(ctrl.K[k] * Wt);
    }
  });
  return m;
}

inline ResponseMaps assemble_direct(const PropagationOps& P, const StackedLtv& ltv) {
  const int nx = ltv.nx, nu = ltv.nu, nr = ltv.nr, T = ltv.T;
  ResponseMaps m = ResponseMaps::zeros(nx, nu, nr, T);

  // M hx and M hy, with M = I - ZA (block lower bidiagonal).
  BlockLT Mhx(T + 1, T + 1, nx, nx, 0), Mhy(T + 1, T, nx, nr, 1);
  for (int k = 0; k <= T; ++k) {
    for (int j = 0; j <= Mhx.band_end(k); ++j) {
      Mat v = P.hx.get(k, j);
      if (k >= 1) v -= ltv.A[k - 1] * P.hx.get(k - 1, j);
      Mhx.at(k, j) = v;
    }
    for (int j = 0; j <= Mhy.band_end(k); ++j) {
      Mat v = P.hy.get(k, j);
      if (k >= 1) v -= ltv.A[k - 1] * P.hy.get(k - 1, j);
      Mhy.at(k, j) = v;
    }
  }
  // xw = bx + hx - bx Mhx, uw = bu (I - Mhx), xe = hy - bx Mhy, ue = -bu Mhy.
  for (int k = 0; k <= T; ++k) {
    for (int j = 0; j <= k; ++j) {
      Mat acc = P.bx.get(k, j) + P.hx.get(k, j);
      for (int s = j; s <= k; ++s) acc -= P.bx.get(k, s) * Mhx.get(s, j);
      m.xw.at(k, j) = acc;
    }
    for (int j = 0; j < std::min(k, T); ++j) {
      Mat acc = P.hy.get(k, j);
      for (int s = j + 1; s <= k; ++s) acc -= P.bx.get(k, s) * Mhy.get(s, j);
      m.xe.at(k, j) = acc;
    }
  }
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j <= k; ++j) {
      Mat acc = P.bu.get(k, j);
      for (int s = j; s <= k; ++s) acc -= P.bu.get(k, s) * Mhx.get(s, j);
      m.uw.at(k, j) = acc;
    }
    for (int j = 0; j < k; ++j) {
      Mat acc = Mat::Zero(nu, nr);
      for (int s = j + 1; s <= k; ++s) acc -= P.bu.get(k, s) * Mhy.get(s, j);
      m.ue.at(k, j) = acc;
    }
  }
  return m;
}

}  // namespace detail

inline ResponseMaps assemble(const PropagationOps& P, const StackedLtv& ltv,
                             const ControlRecursion& ctrl, const KalmanRecursion& kal,
                             int threads = 1) {
  if (P.shared_gains && !ctrl.per_column)
    return detail::assemble_shared(P, ltv, ctrl, kal, threads);
  return detail::assemble_direct(P, ltv);
}

// ---------------------------------------------------------------------------
// Quadratic response cost: Q on state rows 0..T-1, R on all input rows, P on
// the terminal state row, through the ltv disturbance scalings.
// ---------------------------------------------------------------------------

inline double lqg_cost(const ResponseMaps& m, const StackedLtv& ltv, const Mat& Q, const Mat& R,
                       const Mat& P) {
  const int T = ltv.T;
  const Mat Qh = psd_sqrt(Q), Rh = psd_sqrt(R), Ph = psd_sqrt(P);
  double cost = 0.0;
  for (int k = 0; k <= T; ++k) {
    const Mat& W = (k == T) ? Ph : Qh;
    for (int j = 0; j <= m.xw.band_end(k); ++j)
      cost += (W * (m.xw.at(k, j) * ltv.w_scaling(j))).squaredNorm();
    for (int j = 0; j <= m.xe.band_end(k); ++j)
      cost += (W * (m.xe.at(k, j) * ltv.e_scaling(j))).squaredNorm();
  }
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j <= m.uw.band_end(k); ++j)
      cost += (Rh * (m.uw.at(k, j) * ltv.w_scaling(j))).squaredNorm();
    for (int j = 0; j <= m.ue.band_end(k); ++j)
      cost += (Rh * (m.ue.at(k, j) * ltv.e_scaling(j))).squaredNorm();
  }
  return cost;
}

// One-call solver: recursions, passes and assembly.
struct LqgSolution {
  ControlRecursion ctrl;
  KalmanRecursion kal;
  PropagationOps props;
  ResponseMaps maps;
  double cost = 0.0;
};

inline LqgSolution solve_lqg(const StackedLtv& ltv, const Mat& Q, const Mat& R, const Mat& P,
                             const std::optional<PerColumnMods>& mods = std::nullopt,
                             int threads = 1) {
  LqgSolution sol;
  sol.ctrl = backward_control(ltv, Q, R, P, mods);
  sol.kal = backward_kalman(ltv);
  sol.props = forward_passes(ltv, sol.ctrl, sol.kal, threads);
  sol.maps = assemble(sol.props, ltv, sol.ctrl, sol.kal, threads);
  sol.cost = lqg_cost(sol.maps, ltv, Q, R, P);
  return sol;
}

// ---------------------------------------------------------------------------
// Dense KKT oracle.  Parameterizes the causal blocks of Phi directly,
// enforces both realizability identities as linear equality constraints and
// minimizes the same quadratic response cost; solved through the Schur
// complement of the (lightly regularized, quasi-definite) KKT system with a
// dense Cholesky factorization and one refinement pass.  Verification-only:
// guarded to problems small enough to factor densely.
// ---------------------------------------------------------------------------

struct OracleResult {
  ResponseMaps maps;
  double cost = 0.0;
  int unknowns = 0;
  int equations = 0;
};

inline OracleResult dense_kkt_oracle(const StackedLtv& ltv, const Mat& Q, const Mat& R,
                                     const Mat& P, int max_unknowns = 2000) {
  const int nx = ltv.nx, nu = ltv.nu, nr = ltv.nr, T = ltv.T;

  enum MapId { XW, XE, UW, UE };
  struct VarBlock {
    MapId map;
    int k, j, rows, cols, offset;
  };
  std::vector<VarBlock> vars;
  int nvar = 0;
  auto add_var = [&](MapId id, int k, int j, int r, int c) {
    vars.push_back({id, k, j, r, c, nvar});
    nvar += r * c;
  };
  for (int k = 1; k <= T; ++k)
    for (int j = 0; j < k; ++j) add_var(XW, k, j, nx, nx);
  for (int k = 1; k <= T; ++k)
    for (int j = 0; j < std::min(k, T); ++j) add_var(XE, k, j, nx, nr);
  for (int k = 0; k < T; ++k)
    for (int j = 0; j <= k; ++j) add_var(UW, k, j, nu, nx);
  for (int k = 1; k < T; ++k)
    for (int j = 0; j < k; ++j) add_var(UE, k, j, nu, nr);

  if (nvar > max_unknowns)
    throw OracleTooLarge("dense oracle guard: " + std::to_string(nvar) + " unknowns > " +
                         std::to_string(max_unknowns));

  // Block lookup tables: index into vars or -1 (fixed/zero).
  auto table = [&](int rows, int cols) {
    return std::vector<int>(static_cast<size_t>(rows) * cols, -1);
  };
  std::vector<int> ixw = table(T + 1, T + 1), ixe = table(T + 1, T), iuw = table(T, T + 1),
                   iue = table(T, T);
  for (size_t v = 0; v < vars.size(); ++v) {
    const auto& b = vars[v];
    if (b.map == XW) ixw[b.k * (T + 1) + b.j] = static_cast<int>(v);
    if (b.map == XE) ixe[b.k * T + b.j] = static_cast<int>(v);
    if (b.map == UW) iuw[b.k * (T + 1) + b.j] = static_cast<int>(v);
    if (b.map == UE) iue[b.k * T + b.j] = static_cast<int>(v);
  }

  // Objective: block-diagonal H, one kron(S S^T, Omega) per variable block.
  const double hscale = std::max({Q.cwiseAbs().maxCoeff(), R.cwiseAbs().maxCoeff(),
                                  P.cwiseAbs().maxCoeff(), 1.0});
  const double ridge = 1e-12 * hscale;
  std::vector<Mat> Hblk(vars.size());
  for (size_t v = 0; v < vars.size(); ++v) {
    const auto& b = vars[v];
    const bool xrow = (b.map == XW || b.map == XE);
    const Mat& Omega = xrow ? (b.k == T ? P : Q) : R;
    const Mat& S = (b.map == XW || b.map == UW) ? ltv.w_scaling(b.j) : ltv.e_scaling(b.j);
    const Mat G = S * S.transpose();
    Mat H(b.rows * b.cols, b.rows * b.cols);
    for (int c1 = 0; c1 < b.cols; ++c1)
      for (int c2 = 0; c2 < b.cols; ++c2)
        H.block(c1 * b.rows, c2 * b.rows, b.rows, b.rows) = G(c1, c2) * Omega;
    H += ridge * Mat::Identity(H.rows(), H.cols());
    Hblk[v] = H;
  }

  // Equality constraints as sparse triplets.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int neq = 0;
  auto begin_eq = [&](int r, int c) {
    const int off = neq;
    neq += r * c;
    rhs.resize(neq, 0.0);
    return off;
  };
  auto add_plain = [&](int eq, int var, int rows, int cols) {
    const int off = vars[var].offset;
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r)
        trip.emplace_back(eq + c * rows + r, off + c * rows + r, 1.0);
  };
  // coeff * M * X added to an equation block of shape (M.rows() x cols(X)).
  auto add_left = [&](int eq, const Mat& M, double coeff, int var) {
    const auto& b = vars[var];
    for (int c = 0; c < b.cols; ++c)
      for (int r = 0; r < M.rows(); ++r)
        for (int s = 0; s < M.cols(); ++s) {
          const double val = coeff * M(r, s);
          if (val != 0.0) trip.emplace_back(eq + c * M.rows() + r, b.offset + c * b.rows + s, val);
        }
  };
  // coeff * X * N added to an equation block of shape (rows(X) x N.cols()).
  auto add_right = [&](int eq, const Mat& N, double coeff, int var) {
    const auto& b = vars[var];
    for (int c = 0; c < N.cols(); ++c)
      for (int r = 0; r < b.rows; ++r)
        for (int s = 0; s < b.cols; ++s) {
          const double val = coeff * N(s, c);
          if (val != 0.0) trip.emplace_back(eq + c * b.rows + r, b.offset + s * b.rows + r, val);
        }
  };
  auto set_rhs = [&](int eq, const Mat& M) {
    for (int c = 0; c < M.cols(); ++c)
      for (int r = 0; r < M.rows(); ++r) rhs[eq + c * M.rows() + r] = M(r, c);
  };

  // Left identity, process channel (k = 1..T, j < k).
  for (int k = 1; k <= T; ++k)
    for (int j = 0; j < k; ++j) {
      const int eq = begin_eq(nx, nx);
      add_plain(eq, ixw[k * (T + 1) + j], nx, nx);
      if (j < k - 1) add_left(eq, ltv.A[k - 1], -1.0, ixw[(k - 1) * (T + 1) + j]);
      else set_rhs(eq, ltv.A[k - 1]);  // previous-row block is the fixed identity
      add_left(eq, ltv.B[k - 1], -1.0, iuw[(k - 1) * (T + 1) + j]);
    }
  // Left identity, measurement channel (k = 1..T, j < k, target 0).
  for (int k = 1; k <= T; ++k)
    for (int j = 0; j < std::min(k, T); ++j) {
      const int eq = begin_eq(nx, nr);
      add_plain(eq, ixe[k * T + j], nx, nr);
      if (k - 1 >= 1 && j < std::min(k - 1, T))
        add_left(eq, ltv.A[k - 1], -1.0, ixe[(k - 1) * T + j]);
      if (k - 1 >= 1 && j < k - 1) add_left(eq, ltv.B[k - 1], -1.0, iue[(k - 1) * T + j]);
    }
  // Right identity, state rows (k = 1..T, m < k).
  for (int k = 1; k <= T; ++k)
    for (int m = 0; m < k; ++m) {
      const int eq = begin_eq(nx, nx);
      add_plain(eq, ixw[k * (T + 1) + m], nx, nx);
      if (m + 1 < k) add_right(eq, ltv.A[m], -1.0, ixw[k * (T + 1) + m + 1]);
      else set_rhs(eq, ltv.A[m]);
      add_right(eq, ltv.C[m], -1.0, ixe[k * T + m]);
    }
  // Right identity, input rows (k = 0..T-1, m <= k, target 0).
  for (int k = 0; k < T; ++k)
    for (int m = 0; m <= k; ++m) {
      const int eq = begin_eq(nu, nx);
      add_plain(eq, iuw[k * (T + 1) + m], nu, nx);
      if (m + 1 <= k) add_right(eq, ltv.A[m], -1.0, iuw[k * (T + 1) + m + 1]);
      if (m < k && k >= 1) add_right(eq, ltv.C[m], -1.0, iue[k * T + m]);
    }

  Eigen::SparseMatrix<double> A(neq, nvar);
  A.setFromTriplets(trip.begin(), trip.end());
  Vec b = Eigen::Map<Vec>(rhs.data(), neq);

  // x = Hinv A^T (A Hinv A^T)^{-1} b, the H-weighted minimum over the
  // (redundantly specified but consistent) equality set.
  std::vector<Eigen::LLT<Mat>> Hllt(vars.size());
  for (size_t v = 0; v < vars.size(); ++v) {
    Hllt[v].compute(Hblk[v]);
    if (Hllt[v].info() != Eigen::Success) throw OracleFailed("objective block factorization failed");
  }
  auto hinv_apply = [&](const Vec& y) {
    Vec out(nvar);
    for (size_t v = 0; v < vars.size(); ++v) {
      const auto& blk = vars[v];
      const int n = blk.rows * blk.cols;
      out.segment(blk.offset, n) = Hllt[v].solve(y.segment(blk.offset, n));
    }
    return out;
  };

  Eigen::SparseMatrix<double> At = A.transpose();
  Eigen::SparseMatrix<double> HinvAt(nvar, neq);
  {
    std::vector<Eigen::Triplet<double>> t2;
    for (int col = 0; col < At.outerSize(); ++col) {
      // Solve per variable block: At columns are sparse, walk block-wise.
      for (Eigen::SparseMatrix<double>::InnerIterator it(At, col); it;) {
        // Gather the contiguous entries belonging to one variable block.
        // Identify the block containing row it.row().
        int lo = 0, hi = static_cast<int>(vars.size()) - 1;
        while (lo < hi) {
          const int mid = (lo + hi + 1) / 2;
          if (vars[mid].offset <= it.row()) lo = mid;
          else hi = mid - 1;
        }
        const auto& blk = vars[lo];
        const int n = blk.rows * blk.cols;
        Vec dense = Vec::Zero(n);
        while (it && it.row() < blk.offset + n) {
          dense(it.row() - blk.offset) = it.value();
          ++it;
        }
        const Vec sol = Hllt[lo].solve(dense);
        for (int r = 0; r < n; ++r)
          if (sol(r) != 0.0) t2.emplace_back(blk.offset + r, col, sol(r));
      }
    }
    HinvAt.setFromTriplets(t2.begin(), t2.end());
  }

  Mat Sdense = Mat(A * HinvAt);
  const double eps = 1e-10 * (1.0 + Sdense.diagonal().cwiseAbs().maxCoeff());
  Sdense += eps * Mat::Identity(neq, neq);
  Eigen::LLT<Mat> Sllt(Sdense);
  if (Sllt.info() != Eigen::Success) throw OracleFailed("Schur complement factorization failed");

  Vec x = Vec::Zero(nvar);
  for (int pass = 0; pass < 3; ++pass) {
    const Vec resid = b - A * x;
    if (resid.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + b.cwiseAbs().maxCoeff())) break;
    const Vec lambda = Sllt.solve(resid);
    x += hinv_apply(At * lambda);
  }
  const double feas = (A * x - b).cwiseAbs().maxCoeff();
  if (!(feas <= 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())))
    throw OracleFailed("oracle equality residual " + std::to_string(feas));

  OracleResult out;
  out.unknowns = nvar;
  out.equations = neq;
  out.maps = ResponseMaps::zeros(nx, nu, nr, T);
  for (int k = 0; k <= T; ++k) out.maps.xw.at(k, k) = Mat::Identity(nx, nx);
  for (const auto& blk : vars) {
    Mat M(blk.rows, blk.cols);
    for (int c = 0; c < blk.cols; ++c)
      for (int r = 0; r < blk.rows; ++r) M(r, c) = x(blk.offset + c * blk.rows + r);
    switch (blk.map) {
      case XW: out.maps.xw.at(blk.k, blk.j) = M; break;
      case XE: out.maps.xe.at(blk.k, blk.j) = M; break;
      case UW: out.maps.uw.at(blk.k, blk.j) = M; break;
      case UE: out.maps.ue.at(blk.k, blk.j) = M; break;
    }
  }
  out.cost = lqg_cost(out.maps, ltv, Q, R, P);
  return out;
}

}  // namespace sls
