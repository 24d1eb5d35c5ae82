#pragma once

#include "slsynth/riccati.hpp"

#include <chrono>
#include <cmath>
#include <vector>

namespace sls {

// ---------------------------------------------------------------------------
// Performance sweep: the Riccati path against the dense oracle over growing
// horizons.  Timing assertions downstream are trend-level (log-log slopes),
// never absolute milliseconds.
// ---------------------------------------------------------------------------

struct ScalingRecord {
  int T = 0;
  int nx = 0, nu = 0, nr = 0;
  double riccati_ms = 0.0;
  double oracle_ms = -1.0;  // negative when the oracle was skipped
  double cost_riccati = 0.0;
  double cost_oracle = -1.0;
  double cost_rel_err = -1.0;
  std::string error;
};

// Random LTV instance: entries of A, B, C i.i.d. uniform in [-1, 1], A
// rescaled to spectral radius 0.95, constant scalings E = F = Xi = 0.1 I.
inline StackedLtv random_bench_ltv(std::uint64_t seed, int T, int nx = 2, int nu = 2, int nr = 2) {
  Rng rng(seed);
  StackedLtv ltv;
  ltv.nx = nx;
  ltv.nu = nu;
  ltv.nr = nr;
  ltv.T = T;
  for (int k = 0; k < T; ++k) {
    Mat A = random_matrix(rng, nx, nx);
    const double radius = A.eigenvalues().cwiseAbs().maxCoeff();
    if (radius > 1e-12) A *= 0.95 / radius;
    ltv.A.push_back(A);
    ltv.B.push_back(random_matrix(rng, nx, nu));
    ltv.C.push_back(random_matrix(rng, nr, nx));
    ltv.E.push_back(0.1 * Mat::Identity(nx, nx));
    ltv.F.push_back(0.1 * Mat::Identity(nr, nr));
  }
  ltv.Xi = 0.1 * Mat::Identity(nx, nx);
  return ltv;
}

namespace detail {

template <typename F>
double median_wall_ms(F&& fn, int repeats = 5) {
  fn();  // warm-up, discarded
  std::vector<double> times;
  times.reserve(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace detail

inline std::vector<ScalingRecord> horizon_sweep(std::uint64_t base_seed,
                                                const std::vector<int>& T_list,
                                                int oracle_guard = 2000, int repeats = 5) {
  std::vector<ScalingRecord> out;
  const Mat Q = Mat::Identity(2, 2), R = Mat::Identity(2, 2), P = Mat::Identity(2, 2);
  for (size_t i = 0; i < T_list.size(); ++i) {
    ScalingRecord rec;
    rec.T = T_list[i];
    rec.nx = 2;
    rec.nu = 2;
    rec.nr = 2;
    try {
      const StackedLtv ltv = random_bench_ltv(base_seed + i, rec.T);
      LqgSolution sol;
      rec.riccati_ms = detail::median_wall_ms([&]() { sol = solve_lqg(ltv, Q, R, P); }, repeats);
      rec.cost_riccati = sol.cost;
      try {
        OracleResult orc;
        rec.oracle_ms = detail::median_wall_ms(
            [&]() { orc = dense_kkt_oracle(ltv, Q, R, P, oracle_guard); }, repeats);
        rec.cost_oracle = orc.cost;
        rec.cost_rel_err = std::abs(rec.cost_riccati - rec.cost_oracle) /
                           std::max(rec.cost_oracle, 1e-300);
      } catch (const OracleTooLarge&) {
        rec.oracle_ms = -1.0;  // skipped above the guard, timing-only row
      }
    } catch (const Error& err) {
      rec.error = err.what();
    }
    out.push_back(rec);
  }
  return out;
}

// Least-squares slope of log(time) against log(T).
inline double loglog_slope(const std::vector<double>& T, const std::vector<double>& ms) {
  const int n = static_cast<int>(T.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(T[i]);
    const double y = std::log(std::max(ms[i], 1e-9));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace sls
