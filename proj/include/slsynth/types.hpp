#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sls {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Typed errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define SLS_DEFINE_ERROR(Name)                 \
  struct Name : Error {                        \
    using Error::Error;                        \
    Name() : Error(#Name) {}                   \
  }

SLS_DEFINE_ERROR(IntegrationDiverged);
SLS_DEFINE_ERROR(LinearizationFailed);
SLS_DEFINE_ERROR(ShapeError);
SLS_DEFINE_ERROR(GainRecoveryFailed);
SLS_DEFINE_ERROR(RiccatiSingular);
SLS_DEFINE_ERROR(KalmanSingular);
SLS_DEFINE_ERROR(OracleFailed);
SLS_DEFINE_ERROR(OracleTooLarge);
SLS_DEFINE_ERROR(InvalidEnvelope);
SLS_DEFINE_ERROR(SynthesisInfeasible);
SLS_DEFINE_ERROR(InitialGuessFailed);
SLS_DEFINE_ERROR(FitUnbounded);
SLS_DEFINE_ERROR(SpecError);

#undef SLS_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Counter-based RNG.  All randomness in the toolchain flows through this
// generator so that runs are reproducible bit-for-bit across platforms
// (no std::distribution involved).
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)))) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform in [-1, 1).
  double symmetric() { return 2.0 * next_double() - 1.0; }

  // {-1, +1} with equal probability.
  double sign() { return (next_u64() & 1ull) ? 1.0 : -1.0; }

  int next_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Derive an independent child stream, e.g. one per Monte Carlo rollout.
  Rng child(std::uint64_t stream) const { return Rng(state_, stream + 1); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }
  std::uint64_t state_;
};

inline Mat random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline bool is_finite(const Mat& m) { return m.allFinite(); }

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

// PSD square root through an eigendecomposition; negative eigenvalues below
// -tol are an error, tiny negatives are clamped.
inline Mat psd_sqrt(const Mat& m, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  if (es.info() != Eigen::Success) throw Error("psd_sqrt: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  Vec root(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol * scale) throw Error("psd_sqrt: matrix is not PSD");
    root(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

inline bool is_psd(const Mat& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

// Positive definiteness checked by Cholesky success.
inline bool is_pd(const Mat& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    return false;
  Eigen::LLT<Mat> llt(symmetrize(m));
  return llt.info() == Eigen::Success;
}

// Fixed 17-significant-digit formatting used by every CSV/JSON writer so
// rerunning with identical inputs produces byte-identical files.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// FNV-1a, used for content hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Deterministic parallel-for: static partition, disjoint writes only.
// ---------------------------------------------------------------------------

inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nt = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t]() {
      for (int i = t; i < n; i += nt) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace sls
