#pragma once

#include "slsynth/bench.hpp"
#include "slsynth/calibration.hpp"
#include "slsynth/environments.hpp"
#include "slsynth/spec_json.hpp"

#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace sls {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// CSV plumbing.  All floating-point cells go through fmt17 so identical runs
// produce byte-identical files.
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline void csv_write(const std::string& path, const CsvTable& t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << "\n";
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

inline CsvTable csv_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

// ---------------------------------------------------------------------------
// Response map / gain serialization: block maps keyed "k,j".
// ---------------------------------------------------------------------------

inline json blocklt_to_json(const BlockLT& b) {
  json out = json::object();
  for (int k = 0; k < b.row_blocks(); ++k)
    for (int j = 0; j <= b.band_end(k); ++j)
      out[std::to_string(k) + "," + std::to_string(j)] = mat_to_json(b.at(k, j));
  return out;
}

inline void blocklt_from_json(const json& j, BlockLT& b) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto comma = key.find(',');
    if (comma == std::string::npos) throw SpecError("bad block key: " + key);
    const int k = std::stoi(key.substr(0, comma));
    const int col = std::stoi(key.substr(comma + 1));
    if (!b.has(k, col)) throw SpecError("acausal block in serialized operator: " + key);
    b.at(k, col) = mat_from_json(it.value());
  }
}

inline json maps_to_json(const ResponseMaps& m) {
  json j;
  j["nx"] = m.nx;
  j["nu"] = m.nu;
  j["nr"] = m.nr;
  j["T"] = m.T;
  j["xw"] = blocklt_to_json(m.xw);
  j["xe"] = blocklt_to_json(m.xe);
  j["uw"] = blocklt_to_json(m.uw);
  j["ue"] = blocklt_to_json(m.ue);
  return j;
}

inline ResponseMaps maps_from_json(const json& j) {
  ResponseMaps m = ResponseMaps::zeros(j.at("nx").get<int>(), j.at("nu").get<int>(),
                                       j.at("nr").get<int>(), j.at("T").get<int>());
  blocklt_from_json(j.at("xw"), m.xw);
  blocklt_from_json(j.at("xe"), m.xe);
  blocklt_from_json(j.at("uw"), m.uw);
  blocklt_from_json(j.at("ue"), m.ue);
  return m;
}

inline json gains_to_json(const GainSchedule& g) {
  json j;
  j["nx"] = g.nx;
  j["nu"] = g.nu;
  j["nr"] = g.nr;
  j["T"] = g.T;
  json K = json::object();
  for (int k = 0; k < g.T; ++k)
    for (int jj = 0; jj < k; ++jj)
      K[std::to_string(k) + "," + std::to_string(jj)] = mat_to_json(g.K[k][jj]);
  j["K"] = K;
  json K0 = json::array();
  for (const auto& m : g.K0) K0.push_back(mat_to_json(m));
  j["K0"] = K0;
  return j;
}

inline GainSchedule gains_from_json(const json& j) {
  GainSchedule g = GainSchedule::zeros(j.at("nx").get<int>(), j.at("nu").get<int>(),
                                       j.at("nr").get<int>(), j.at("T").get<int>());
  for (auto it = j.at("K").begin(); it != j.at("K").end(); ++it) {
    const std::string& key = it.key();
    const auto comma = key.find(',');
    const int k = std::stoi(key.substr(0, comma));
    const int jj = std::stoi(key.substr(comma + 1));
    if (jj >= k) throw SpecError("acausal gain block: " + key);
    g.K[k][jj] = mat_from_json(it.value());
  }
  for (int k = 0; k < g.T; ++k) g.K0[k] = mat_from_json(j.at("K0")[k]);
  return g;
}

// ---------------------------------------------------------------------------
// SynthesisResult round trip (result.json embeds the spec).
// ---------------------------------------------------------------------------

inline json result_to_json(const SynthesisResult& r, const ProblemSpec& spec) {
  json j;
  j["schema"] = "slsynth-result-v1";
  j["tool_version"] = kToolVersion;
  j["spec"] = spec_to_json(spec);
  json z = json::array(), v = json::array();
  for (const auto& zk : r.z) z.push_back(vec_to_json(zk));
  for (const auto& vk : r.v) v.push_back(vec_to_json(vk));
  j["z"] = z;
  j["v"] = v;
  j["maps"] = maps_to_json(r.maps);
  j["gains"] = gains_to_json(r.gains);
  json sig = json::array(), ups = json::array();
  for (const auto& m : r.tubes.Sigma) sig.push_back(mat_to_json(m));
  for (const auto& m : r.tubes.Upsilon) ups.push_back(mat_to_json(m));
  j["tubes"] = {{"Sigma", sig}, {"Upsilon", ups}, {"tau", vec_to_json(r.tubes.tau)},
                {"rho", r.tubes.rho}};
  j["radii"] = {{"r_x", mat_to_json(r.radii.r_x)}, {"r_u", mat_to_json(r.radii.r_u)},
                {"max_r", vec_to_json(r.radii.max_r)}, {"tau_consistent", r.radii.tau_consistent}};
  json tight = json::array();
  for (const auto& e : r.tight.entries)
    tight.push_back({{"row", e.row}, {"k", e.k}, {"nominal", e.nominal},
                     {"margin", e.margin}, {"slack", e.slack}});
  j["tightening"] = tight;
  j["cost"] = {{"j_traj", r.j_traj}, {"j_tube", r.j_tube}};
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  json log = json::array();
  for (const auto& rec : r.log)
    log.push_back({{"iter", rec.iter}, {"step_norm", rec.step_norm}, {"qp_status", rec.qp_status},
                   {"qp_iters", rec.qp_iters}, {"slack_retry", rec.slack_retry},
                   {"trust_radius", rec.trust_radius}, {"j_traj", rec.j_traj},
                   {"j_tube", rec.j_tube}, {"max_margin", rec.max_margin},
                   {"min_slack", rec.min_slack}, {"tau_converged", rec.tau_converged}});
  j["log"] = log;
  return j;
}

inline std::pair<SynthesisResult, ProblemSpec> result_from_json(const json& j) {
  ProblemSpec spec = spec_from_json(j.at("spec"));
  SynthesisResult r;
  for (const auto& zk : j.at("z")) r.z.push_back(vec_from_json(zk));
  for (const auto& vk : j.at("v")) r.v.push_back(vec_from_json(vk));
  r.maps = maps_from_json(j.at("maps"));
  r.gains = gains_from_json(j.at("gains"));
  const auto& tb = j.at("tubes");
  for (const auto& m : tb.at("Sigma")) r.tubes.Sigma.push_back(mat_from_json(m));
  for (const auto& m : tb.at("Upsilon")) r.tubes.Upsilon.push_back(mat_from_json(m));
  r.tubes.tau = vec_from_json(tb.at("tau"));
  r.tubes.rho = tb.at("rho").get<double>();
  const auto& rd = j.at("radii");
  r.radii.r_x = mat_from_json(rd.at("r_x"));
  r.radii.r_u = mat_from_json(rd.at("r_u"));
  r.radii.max_r = vec_from_json(rd.at("max_r"));
  r.radii.tau_consistent = rd.at("tau_consistent").get<bool>();
  for (const auto& e : j.at("tightening")) {
    TightenEntry te;
    te.row = e.at("row").get<int>();
    te.k = e.at("k").get<int>();
    te.nominal = e.at("nominal").get<double>();
    te.margin = e.at("margin").get<double>();
    te.slack = e.at("slack").get<double>();
    r.tight.entries.push_back(te);
    r.tight.min_slack = std::min(r.tight.min_slack, te.slack);
    r.tight.max_margin = std::max(r.tight.max_margin, te.margin);
  }
  r.j_traj = j.at("cost").at("j_traj").get<double>();
  r.j_tube = j.at("cost").at("j_tube").get<double>();
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  return {std::move(r), std::move(spec)};
}

// ---------------------------------------------------------------------------
// Run artifacts.
// ---------------------------------------------------------------------------

inline CsvTable tubes_csv(const SynthesisResult& r) {
  CsvTable t;
  t.header = {"k", "state_index", "halfwidth", "nominal"};
  const int nx = static_cast<int>(r.radii.r_x.rows());
  const int nu = static_cast<int>(r.radii.r_u.rows());
  const int T = static_cast<int>(r.radii.r_u.cols());
  for (int k = 0; k <= T; ++k)
    for (int l = 0; l < nx; ++l)
      t.rows.push_back({std::to_string(k), std::to_string(l), fmt17(r.radii.r_x(l, k)),
                        fmt17(r.z[k](l))});
  for (int k = 0; k < T; ++k)
    for (int l = 0; l < nu; ++l)
      t.rows.push_back({std::to_string(k), std::to_string(nx + l), fmt17(r.radii.r_u(l, k)),
                        fmt17(r.v[k](l))});
  return t;
}

inline CsvTable iterations_csv(const SynthesisResult& r) {
  CsvTable t;
  t.header = {"iter", "step_norm", "qp_status", "qp_iters", "slack_retry", "trust_radius",
              "j_traj", "j_tube", "max_margin", "min_slack"};
  for (const auto& rec : r.log)
    t.rows.push_back({std::to_string(rec.iter), fmt17(rec.step_norm), rec.qp_status,
                      std::to_string(rec.qp_iters), rec.slack_retry ? "1" : "0",
                      fmt17(rec.trust_radius), fmt17(rec.j_traj), fmt17(rec.j_tube),
                      fmt17(rec.max_margin), fmt17(rec.min_slack)});
  return t;
}

inline CsvTable rollouts_csv(const SynthesisResult& r, const std::vector<RolloutResult>& rollouts) {
  CsvTable t;
  t.header = {"rollout_id", "k", "state_index", "value", "tube_lo", "tube_hi"};
  const int nx = static_cast<int>(r.radii.r_x.rows());
  const int nu = static_cast<int>(r.radii.r_u.rows());
  const int T = static_cast<int>(r.radii.r_u.cols());
  for (size_t i = 0; i < rollouts.size(); ++i) {
    const auto& rr = rollouts[i];
    for (int k = 0; k <= T; ++k)
      for (int l = 0; l < nx; ++l)
        t.rows.push_back({std::to_string(i), std::to_string(k), std::to_string(l),
                          fmt17(rr.x(l, k)), fmt17(r.z[k](l) - r.radii.r_x(l, k)),
                          fmt17(r.z[k](l) + r.radii.r_x(l, k))});
    for (int k = 0; k < T; ++k)
      for (int l = 0; l < nu; ++l)
        t.rows.push_back({std::to_string(i), std::to_string(k), std::to_string(nx + l),
                          fmt17(rr.u(l, k)), fmt17(r.v[k](l) - r.radii.r_u(l, k)),
                          fmt17(r.v[k](l) + r.radii.r_u(l, k))});
  }
  return t;
}

inline json mc_report_json(const MonteCarloReport& rep, DisturbanceMode mode, std::uint64_t seed) {
  return json{{"n", rep.n},
              {"mode", mode == DisturbanceMode::Uniform ? "uniform" : "extreme"},
              {"seed", seed},
              {"sr", rep.sr},
              {"cvr", rep.cvr},
              {"containment_rate", rep.containment_rate},
              {"max_normalized_excursion", rep.max_normalized_excursion},
              {"diverged", rep.diverged}};
}

inline CsvTable scaling_csv(const std::vector<ScalingRecord>& recs) {
  CsvTable t;
  t.header = {"T", "n_x", "n_u", "n_r", "riccati_ms", "oracle_ms", "cost_riccati", "cost_oracle",
              "cost_rel_err"};
  for (const auto& r : recs)
    t.rows.push_back({std::to_string(r.T), std::to_string(r.nx), std::to_string(r.nu),
                      std::to_string(r.nr), fmt17(r.riccati_ms), fmt17(r.oracle_ms),
                      fmt17(r.cost_riccati), fmt17(r.cost_oracle), fmt17(r.cost_rel_err)});
  return t;
}

inline json envelope_to_json(const Envelope& env, const std::vector<std::string>& coord_names,
                             double gamma, double mu, double training_coverage) {
  json j;
  j["schema"] = "slsynth-envelope-v1";
  json basis;
  basis["coords"] = env.basis.coords;
  basis["coord_names"] = coord_names;
  basis["degree"] = env.basis.degree;
  basis["exponents"] = env.basis.exponents;
  j["basis"] = basis;
  j["beta"] = vec_to_json(env.beta);
  j["gamma"] = gamma;
  j["mu"] = mu;
  j["training_coverage"] = training_coverage;
  return j;
}

// Residual CSV: coordinate columns followed by a final column named "r".
inline ResidualDataset residuals_from_csv(const std::string& path) {
  const CsvTable t = csv_read(path);
  if (t.header.empty() || t.header.back() != "r")
    throw SpecError("residual CSV must end with a column named 'r'");
  ResidualDataset d;
  const int nc = static_cast<int>(t.header.size()) - 1;
  d.columns.assign(t.header.begin(), t.header.end() - 1);
  d.X = Mat(t.rows.size(), nc);
  d.r = Vec(t.rows.size());
  for (size_t i = 0; i < t.rows.size(); ++i) {
    if (static_cast<int>(t.rows[i].size()) != nc + 1) throw SpecError("ragged residual CSV row");
    for (int c = 0; c < nc; ++c) d.X(static_cast<int>(i), c) = std::stod(t.rows[i][c]);
    d.r(static_cast<int>(i)) = std::stod(t.rows[i].back());
  }
  return d;
}

inline CsvTable residuals_to_csv(const ResidualDataset& d) {
  CsvTable t;
  t.header = d.columns;
  t.header.push_back("r");
  for (int i = 0; i < d.size(); ++i) {
    std::vector<std::string> row;
    for (int c = 0; c < d.X.cols(); ++c) row.push_back(fmt17(d.X(i, c)));
    row.push_back(fmt17(d.r(i)));
    t.rows.push_back(row);
  }
  return t;
}

// Plot-ready merge of nominal, tubes and rollout extremes per (k, state).
inline CsvTable summary_csv(const CsvTable& tubes, const CsvTable& rollouts) {
  struct Cell {
    double nominal = 0.0, halfwidth = 0.0;
    double vmin = kInf, vmax = -kInf;
    int n = 0, inside = 0;
  };
  std::map<std::pair<int, int>, Cell> cells;
  for (const auto& row : tubes.rows) {
    Cell& c = cells[{std::stoi(row[0]), std::stoi(row[1])}];
    c.halfwidth = std::stod(row[2]);
    c.nominal = std::stod(row[3]);
  }
  for (const auto& row : rollouts.rows) {
    auto key = std::make_pair(std::stoi(row[1]), std::stoi(row[2]));
    auto it = cells.find(key);
    if (it == cells.end()) continue;
    const double v = std::stod(row[3]);
    it->second.vmin = std::min(it->second.vmin, v);
    it->second.vmax = std::max(it->second.vmax, v);
    it->second.n += 1;
    const double lo = std::stod(row[4]), hi = std::stod(row[5]);
    if (v >= lo - 1e-12 && v <= hi + 1e-12) it->second.inside += 1;
  }
  CsvTable out;
  out.header = {"k", "state_index", "nominal", "tube_lo", "tube_hi", "rollout_min", "rollout_max",
                "n_rollouts", "containment_rate"};
  for (const auto& [key, c] : cells) {
    out.rows.push_back({std::to_string(key.first), std::to_string(key.second), fmt17(c.nominal),
                        fmt17(c.nominal - c.halfwidth), fmt17(c.nominal + c.halfwidth),
                        fmt17(c.n ? c.vmin : c.nominal), fmt17(c.n ? c.vmax : c.nominal),
                        std::to_string(c.n),
                        fmt17(c.n ? static_cast<double>(c.inside) / c.n : 1.0)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest: every output file listed with a content hash.  The timestamp
// is the one field exempt from byte-identity across reruns.
// ---------------------------------------------------------------------------

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot hash " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

inline void write_manifest(const std::string& dir, const std::string& spec_hash,
                           std::uint64_t seed, const std::vector<std::string>& files) {
  json j;
  j["tool_version"] = kToolVersion;
  j["spec_hash"] = spec_hash;
  j["seed"] = seed;
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp_utc"] = buf;
  json outputs = json::array();
  for (const auto& f : files)
    outputs.push_back({{"file", f}, {"fnv1a64", file_hash_hex((std::filesystem::path(dir) / f).string())}});
  j["outputs"] = outputs;
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  out << j.dump(2) << "\n";
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  json j;
  in >> j;
  return j;
}

}  // namespace sls
