#pragma once

#include "slsynth/model.hpp"
#include "slsynth/types.hpp"

#include <utility>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Stacked LTV data over the horizon.  Logical stacked operators (the block
// downshift times the block-diagonal A, B, C) are only ever accessed through
// indexed blocks; nothing is materialized dense.
//
// Index conventions, used everywhere downstream:
//   - process channel j = 0..T:   j = 0 is the initial-condition channel
//     (scaling Xi), j >= 1 is the disturbance injected at step j-1
//     (scaling E[j-1]).
//   - measurement channel j = 0..T-1: noise on the measurement of x_j
//     (scaling F[j]), first able to influence x_{j+1}.
// ---------------------------------------------------------------------------

struct StackedLtv {
  int nx = 0, nu = 0, nr = 0, T = 0;
  std::vector<Mat> A, B, C;  // k = 0..T-1
  Mat Xi;                    // nx x nx
  std::vector<Mat> E;        // process scaling, slot j+1; size T
  std::vector<Mat> F;        // measurement scaling; size T

  const Mat& w_scaling(int j) const { return j == 0 ? Xi : E[static_cast<size_t>(j) - 1]; }
  const Mat& e_scaling(int j) const { return F[static_cast<size_t>(j)]; }

  void check() const {
    if (static_cast<int>(A.size()) != T || static_cast<int>(B.size()) != T ||
        static_cast<int>(C.size()) != T || static_cast<int>(E.size()) != T ||
        static_cast<int>(F.size()) != T)
      throw ShapeError("StackedLtv: per-step arrays must have length T");
    for (int k = 0; k < T; ++k) {
      if (A[k].rows() != nx || A[k].cols() != nx || B[k].rows() != nx || B[k].cols() != nu ||
          C[k].rows() != nr || C[k].cols() != nx || E[k].rows() != nx || E[k].cols() != nx ||
          F[k].rows() != nr || F[k].cols() != nr)
        throw ShapeError("StackedLtv: block dimensions inconsistent at step " + std::to_string(k));
    }
    if (Xi.rows() != nx || Xi.cols() != nx) throw ShapeError("StackedLtv: Xi must be nx x nx");
  }
};

// ---------------------------------------------------------------------------
// Block-lower-triangular storage: blocks exist for j <= k - shift.
// ---------------------------------------------------------------------------

class BlockLT {
 public:
  BlockLT() = default;
  BlockLT(int row_blocks, int col_blocks, int rdim, int cdim, int shift)
      : rows_(row_blocks), cols_(col_blocks), rdim_(rdim), cdim_(cdim), shift_(shift),
        zero_(Mat::Zero(rdim, cdim)) {
    offsets_.resize(rows_ + 1, 0);
    for (int k = 0; k < rows_; ++k) offsets_[k + 1] = offsets_[k] + band_width(k);
    blocks_.assign(offsets_[rows_], Mat::Zero(rdim_, cdim_));
  }

  int row_blocks() const { return rows_; }
  int col_blocks() const { return cols_; }
  int rdim() const { return rdim_; }
  int cdim() const { return cdim_; }
  int shift() const { return shift_; }
  // Largest stored column index in row k, or -1 when the row is empty.
  int band_end(int k) const { return std::min(k - shift_, cols_ - 1); }

  bool has(int k, int j) const {
    return k >= 0 && k < rows_ && j >= 0 && j <= band_end(k);
  }
  Mat& at(int k, int j) {
    if (!has(k, j)) throw ShapeError("BlockLT: block outside the causal band");
    return blocks_[offsets_[k] + j];
  }
  const Mat& at(int k, int j) const {
    if (!has(k, j)) throw ShapeError("BlockLT: block outside the causal band");
    return blocks_[offsets_[k] + j];
  }
  // Implicit zero outside the band.
  const Mat& get(int k, int j) const { return has(k, j) ? blocks_[offsets_[k] + j] : zero_; }

  bool same_shape(const BlockLT& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && rdim_ == o.rdim_ && cdim_ == o.cdim_ &&
           shift_ == o.shift_;
  }

 private:
  int band_width(int k) const { return std::max(0, band_end(k) + 1); }
  int rows_ = 0, cols_ = 0, rdim_ = 0, cdim_ = 0, shift_ = 0;
  std::vector<int> offsets_;
  std::vector<Mat> blocks_;
  Mat zero_;
};

// The four closed-loop response operators, block-indexed.
//   xw: (T+1) x (T+1) blocks of nx x nx, band j <= k, identity diagonal
//   xe: (T+1) x  T    blocks of nx x nr, band j <= k-1
//   uw:  T    x (T+1) blocks of nu x nx, band j <= k
//   ue:  T    x  T    blocks of nu x nr, band j <= k-1
struct ResponseMaps {
  int nx = 0, nu = 0, nr = 0, T = 0;
  BlockLT xw, xe, uw, ue;

  static ResponseMaps zeros(int nx, int nu, int nr, int T) {
    ResponseMaps m;
    m.nx = nx;
    m.nu = nu;
    m.nr = nr;
    m.T = T;
    m.xw = BlockLT(T + 1, T + 1, nx, nx, 0);
    m.xe = BlockLT(T + 1, T, nx, nr, 1);
    m.uw = BlockLT(T, T + 1, nu, nx, 0);
    m.ue = BlockLT(T, T, nu, nr, 1);
    return m;
  }

  // Open-loop maps: xw is the inverse of (I - ZA), everything else zero.
  static ResponseMaps open_loop(const StackedLtv& ltv) {
    ResponseMaps m = zeros(ltv.nx, ltv.nu, ltv.nr, ltv.T);
    for (int k = 0; k <= ltv.T; ++k) {
      m.xw.at(k, k) = Mat::Identity(ltv.nx, ltv.nx);
      for (int j = k - 1; j >= 0; --j) m.xw.at(k, j) = ltv.A[k - 1] * m.xw.get(k - 1, j);
    }
    return m;
  }
};

// Output-feedback gains: K[k][j] acts on the measurement of x_j (available
// from step j+1 on, so j < k), K0[k] on the initial-state deviation.
struct GainSchedule {
  int nx = 0, nu = 0, nr = 0, T = 0;
  std::vector<std::vector<Mat>> K;  // K[k] has k entries, j = 0..k-1
  std::vector<Mat> K0;              // size T, nu x nx

  static GainSchedule zeros(int nx, int nu, int nr, int T) {
    GainSchedule g;
    g.nx = nx;
    g.nu = nu;
    g.nr = nr;
    g.T = T;
    g.K.resize(T);
    for (int k = 0; k < T; ++k) g.K[k].assign(k, Mat::Zero(nu, nr));
    g.K0.assign(T, Mat::Zero(nu, nx));
    return g;
  }
};

// ---------------------------------------------------------------------------
// apply_response: (dx, du) = Phi * blkdiag(E, F) * (w, e)
// w is the full stacked process disturbance ((T+1)*nx, slot 0 = initial),
// e the stacked measurement disturbance (T*nr).
// ---------------------------------------------------------------------------

inline std::pair<Vec, Vec> apply_response(const ResponseMaps& maps, const StackedLtv& ltv,
                                          const Vec& w, const Vec& e) {
  const int nx = ltv.nx, nu = ltv.nu, nr = ltv.nr, T = ltv.T;
  if (maps.nx != nx || maps.nu != nu || maps.nr != nr || maps.T != T)
    throw ShapeError("apply_response: maps and ltv disagree");
  if (w.size() != (T + 1) * nx || e.size() != T * nr)
    throw ShapeError("apply_response: disturbance dimensions");

  std::vector<Vec> sw(T + 1), se(T);
  for (int j = 0; j <= T; ++j) sw[j] = ltv.w_scaling(j) * w.segment(j * nx, nx);
  for (int j = 0; j < T; ++j) se[j] = ltv.e_scaling(j) * e.segment(j * nr, nr);

  Vec dx = Vec::Zero((T + 1) * nx), du = Vec::Zero(T * nu);
  for (int k = 0; k <= T; ++k) {
    Vec acc = Vec::Zero(nx);
    for (int j = 0; j <= maps.xw.band_end(k); ++j) acc += maps.xw.at(k, j) * sw[j];
    for (int j = 0; j <= maps.xe.band_end(k); ++j) acc += maps.xe.at(k, j) * se[j];
    dx.segment(k * nx, nx) = acc;
  }
  for (int k = 0; k < T; ++k) {
    Vec acc = Vec::Zero(nu);
    for (int j = 0; j <= maps.uw.band_end(k); ++j) acc += maps.uw.at(k, j) * sw[j];
    for (int j = 0; j <= maps.ue.band_end(k); ++j) acc += maps.ue.at(k, j) * se[j];
    du.segment(k * nu, nu) = acc;
  }
  return {dx, du};
}

// ---------------------------------------------------------------------------
// Realizability identities.  Residuals of
//   [I - ZA, -ZB] Phi = [I, 0]        (left)
//   Phi [I - ZA; -ZC] = [I; 0]        (right)
// plus the largest entry stored above the causal band (zero by construction
// for maps built in-process; meaningful for deserialized maps).
// ---------------------------------------------------------------------------

struct IdentityReport {
  double left = 0.0;
  double right = 0.0;
  double causality = 0.0;
  double max_residual() const { return std::max(left, std::max(right, causality)); }
};

inline IdentityReport check_identities(const ResponseMaps& m, const StackedLtv& ltv) {
  const int T = ltv.T;
  IdentityReport rep;
  auto track = [](double& acc, const Mat& block) {
    const double v = block.cwiseAbs().maxCoeff();
    if (v > acc) acc = v;
  };

  const Mat Ix = Mat::Identity(ltv.nx, ltv.nx);
  // Left identity, process channel: row k of (I-ZA) xw - ZB uw = I.
  for (int k = 0; k <= T; ++k) {
    for (int j = 0; j <= T; ++j) {
      Mat r = m.xw.get(k, j);
      if (k >= 1) r -= ltv.A[k - 1] * m.xw.get(k - 1, j) + ltv.B[k - 1] * m.uw.get(k - 1, j);
      if (k == j) r -= Ix;
      track(rep.left, r);
    }
    // Left identity, measurement channel: target 0.
    for (int j = 0; j < T; ++j) {
      Mat r = m.xe.get(k, j);
      if (k >= 1) r -= ltv.A[k - 1] * m.xe.get(k - 1, j) + ltv.B[k - 1] * m.ue.get(k - 1, j);
      track(rep.left, r);
    }
  }
  // Right identity, state rows: xw (I-ZA) - xe ZC = I.
  for (int k = 0; k <= T; ++k) {
    for (int c = 0; c <= T; ++c) {
      Mat r = m.xw.get(k, c);
      if (c < T) r -= m.xw.get(k, c + 1) * ltv.A[c] + m.xe.get(k, c) * ltv.C[c];
      if (k == c) r -= Ix;
      track(rep.right, r);
    }
  }
  // Right identity, input rows: uw (I-ZA) - ue ZC = 0.
  for (int k = 0; k < T; ++k) {
    for (int c = 0; c <= T; ++c) {
      Mat r = m.uw.get(k, c);
      if (c < T) r -= m.uw.get(k, c + 1) * ltv.A[c] + m.ue.get(k, c) * ltv.C[c];
      track(rep.right, r);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Gain recovery: K = ue - uw (xw)^{-1} xe via block forward substitution,
// never a dense inverse.  The j = 0 column of uw (xw)^{-1} is the
// initial-condition channel; the part of it that the measurement gains
// already carry through C_0 is subtracted so that replaying the affine
// policy (which sums measurements from y_1 on) matches the maps exactly.
// ---------------------------------------------------------------------------

inline GainSchedule recover_gains(const ResponseMaps& maps, const StackedLtv& ltv) {
  const int T = maps.T, nx = maps.nx, nu = maps.nu, nr = maps.nr;
  GainSchedule g = GainSchedule::zeros(nx, nu, nr, T);

  // Diagonal factors of xw (identity for assembled maps, but kept general).
  std::vector<Eigen::PartialPivLU<Mat>> diag_lu, diag_lu_t;
  diag_lu.reserve(T + 1);
  diag_lu_t.reserve(T + 1);
  for (int k = 0; k <= T; ++k) {
    const Mat& D = maps.xw.at(k, k);
    Eigen::PartialPivLU<Mat> lu(D);
    if (std::abs(lu.determinant()) < 1e-300)
      throw GainRecoveryFailed("singular diagonal block in the state response");
    diag_lu.push_back(std::move(lu));
    diag_lu_t.emplace_back(Mat(D.transpose()));
  }

  // X = (xw)^{-1} xe, same band as xe: forward substitution in k.
  BlockLT X(T + 1, T, nx, nr, 1);
  for (int j = 0; j < T; ++j) {
    for (int k = j + 1; k <= T; ++k) {
      Mat rhs = maps.xe.get(k, j);
      for (int m = j + 1; m < k; ++m) rhs -= maps.xw.get(k, m) * X.at(m, j);
      X.at(k, j) = diag_lu[k].solve(rhs);
    }
  }
  // K = ue - uw X.
  for (int k = 0; k < T; ++k)
    for (int j = 0; j < k; ++j) {
      Mat Kkj = maps.ue.get(k, j);
      for (int m = j + 1; m <= k; ++m) Kkj -= maps.uw.get(k, m) * X.at(m, j);
      g.K[k][j] = Kkj;
    }

  // G = uw (xw)^{-1}, row by row (backward substitution over columns).
  // K0_k = G_{k,0} - K_{k,0} C_0.
  for (int k = 0; k < T; ++k) {
    std::vector<Mat> grow(k + 1);
    for (int j = k; j >= 0; --j) {
      Mat rhs = maps.uw.get(k, j);
      for (int m = j + 1; m <= k; ++m) rhs -= grow[m] * maps.xw.get(m, j);
      // grow[j] * xw(j,j) = rhs  =>  grow[j] = rhs * xw(j,j)^{-1}
      grow[j] = diag_lu_t[j].solve(rhs.transpose()).transpose();
    }
    g.K0[k] = grow[0];
    if (k >= 1) g.K0[k] -= g.K[k][0] * ltv.C[0];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Step-by-step simulation of the stacked error system under the affine
// output-feedback policy; the independent route against apply_response.
// ---------------------------------------------------------------------------

inline std::pair<Vec, Vec> simulate_closed_loop_ltv(const StackedLtv& ltv, const GainSchedule& g,
                                                    const Vec& w, const Vec& e) {
  const int nx = ltv.nx, nu = ltv.nu, nr = ltv.nr, T = ltv.T;
  if (w.size() != (T + 1) * nx || e.size() != T * nr)
    throw ShapeError("simulate_closed_loop_ltv: disturbance dimensions");

  Vec dx = Vec::Zero((T + 1) * nx), du = Vec::Zero(T * nu);
  std::vector<Vec> dy(T);  // dy[j] is the deviation of the measurement of x_j
  dx.segment(0, nx) = ltv.Xi * w.segment(0, nx);
  for (int k = 0; k < T; ++k) {
    Vec u = g.K0[k] * dx.segment(0, nx);
    for (int j = 0; j < k; ++j) u += g.K[k][j] * dy[j];
    du.segment(k * nu, nu) = u;
    dy[k] = ltv.C[k] * dx.segment(k * nx, nx) + ltv.F[k] * e.segment(k * nr, nr);
    dx.segment((k + 1) * nx, nx) = ltv.A[k] * dx.segment(k * nx, nx) + ltv.B[k] * u +
                                   ltv.E[k] * w.segment((k + 1) * nx, nx);
  }
  return {dx, du};
}

}  // namespace sls
