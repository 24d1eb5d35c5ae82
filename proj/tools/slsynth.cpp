// Command-line front end: synthesis runs, Monte Carlo rollouts, horizon
// benchmarks, envelope calibration and report merging.
//
// Exit codes: 0 success, 1 user error (bad arguments, unreadable spec),
// 2 numerical failure (infeasible synthesis, solver breakdown).

#include "slsynth/slsynth.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace sls;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = resolve from env or default 1
};

int resolve_threads(int cli_threads) {
  if (cli_threads > 0) return cli_threads;
  if (const char* env = std::getenv("SLS_SYNTH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

// A spec argument is a file path, or the name of a built-in benchmark.
ProblemSpec resolve_spec(const std::string& arg) {
  if (fs::exists(arg)) return load_spec_file(arg);
  std::string name = arg;
  const auto slash = name.find_last_of('/');
  if (slash == std::string::npos) {
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json")
      name = name.substr(0, name.size() - 5);
    for (const auto& builtin : builtin_spec_names())
      if (name == builtin) return builtin_spec(name);
  }
  throw SpecError("spec file not found: " + arg);
}

std::string spec_hash(const ProblemSpec& spec) { return hex64(fnv1a(spec_to_json(spec).dump())); }

int cmd_synthesize(const std::string& spec_arg, const std::string& out_dir, bool ce,
                   const GlobalOpts& g) {
  ProblemSpec spec;
  try {
    spec = resolve_spec(spec_arg);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const auto violations = validate_spec(spec);
  if (!violations.empty()) {
    std::cerr << "error: invalid spec:\n";
    for (const auto& v : violations) std::cerr << "  - " << v << "\n";
    return 1;
  }
  fs::create_directories(out_dir);
  SynthesisOptions opt;
  opt.threads = resolve_threads(g.threads);
  const SynthesisResult res = ce ? ce_baseline(spec, opt) : synthesize(spec, opt);

  write_json((fs::path(out_dir) / "spec.json").string(), spec_to_json(spec));
  write_json((fs::path(out_dir) / "result.json").string(), result_to_json(res, spec));
  csv_write((fs::path(out_dir) / "tubes.csv").string(), tubes_csv(res));
  csv_write((fs::path(out_dir) / "iterations.csv").string(), iterations_csv(res));
  write_manifest(out_dir, spec_hash(spec), g.seed,
                 {"spec.json", "result.json", "tubes.csv", "iterations.csv"});
  std::cout << (ce ? "ce-baseline" : "synthesis") << " done: " << res.iterations
            << " iterations, converged=" << (res.converged ? "yes" : "no")
            << ", j_traj=" << fmt17(res.j_traj) << ", j_tube=" << fmt17(res.j_tube)
            << ", min_slack=" << fmt17(res.tight.min_slack) << "\n";
  return 0;
}

int cmd_rollout(const std::string& result_file, int n, const std::string& mode_str,
                const std::string& out_dir, const GlobalOpts& g) {
  if (!fs::exists(result_file)) {
    std::cerr << "error: result file not found: " << result_file << "\n";
    return 1;
  }
  auto [res, spec] = result_from_json(read_json(result_file));
  const DisturbanceMode mode = disturbance_mode_from_string(mode_str);
  fs::create_directories(out_dir);
  std::vector<RolloutResult> rollouts;
  const MonteCarloReport rep =
      monte_carlo(res, spec, n, mode, g.seed, resolve_threads(g.threads), &rollouts);
  write_json((fs::path(out_dir) / "report.json").string(), mc_report_json(rep, mode, g.seed));
  csv_write((fs::path(out_dir) / "rollouts.csv").string(), rollouts_csv(res, rollouts));
  write_manifest(out_dir, spec_hash(spec), g.seed, {"report.json", "rollouts.csv"});
  std::cout << "rollouts: n=" << rep.n << " SR=" << rep.sr * 100 << "% CVR=" << rep.cvr * 100
            << "% containment=" << rep.containment_rate * 100 << "%\n";
  return 0;
}

int cmd_bench(const std::string& t_list_str, const std::string& out_dir, const GlobalOpts& g) {
  std::vector<int> T_list;
  std::stringstream ss(t_list_str);
  std::string tok;
  while (std::getline(ss, tok, ',')) T_list.push_back(std::stoi(tok));
  if (T_list.empty()) {
    std::cerr << "error: empty T list\n";
    return 1;
  }
  fs::create_directories(out_dir);
  const auto recs = horizon_sweep(g.seed, T_list);
  csv_write((fs::path(out_dir) / "scaling.csv").string(), scaling_csv(recs));
  write_manifest(out_dir, "none", g.seed, {"scaling.csv"});
  for (const auto& r : recs)
    std::cout << "T=" << r.T << " riccati_ms=" << r.riccati_ms << " oracle_ms=" << r.oracle_ms
              << " cost_rel_err=" << r.cost_rel_err << (r.error.empty() ? "" : " error=" + r.error)
              << "\n";
  return 0;
}

int cmd_calibrate(const std::string& data_file, const std::string& basis_str, double gamma,
                  double mu, const std::string& out_file) {
  if (!fs::exists(data_file)) {
    std::cerr << "error: residual file not found: " << data_file << "\n";
    return 1;
  }
  const ResidualDataset data = residuals_from_csv(data_file);
  // Basis syntax: "px,py:3" — coordinate names (columns of the CSV), degree.
  const auto colon = basis_str.find(':');
  if (colon == std::string::npos) {
    std::cerr << "error: basis must look like name1,name2:degree\n";
    return 1;
  }
  std::vector<int> coords;
  std::stringstream ss(basis_str.substr(0, colon));
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto it = std::find(data.columns.begin(), data.columns.end(), name);
    if (it == data.columns.end()) {
      std::cerr << "error: basis coordinate '" << name << "' not a column of " << data_file << "\n";
      return 1;
    }
    coords.push_back(static_cast<int>(it - data.columns.begin()));
  }
  const int degree = std::stoi(basis_str.substr(colon + 1));
  const MonomialBasis basis = MonomialBasis::make(coords, degree);
  const Envelope env = fit_envelope(data, basis, gamma, mu);
  const double train_cov = coverage(env, data);
  std::vector<std::string> names;
  for (int c : coords) names.push_back(data.columns[c]);
  write_json(out_file, envelope_to_json(env, names, gamma, mu, train_cov));
  std::cout << "calibrated envelope: " << basis.size() << " basis terms, training coverage "
            << train_cov * 100 << "%\n";
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& rollout_dir,
               const std::string& out_file) {
  const fs::path tubes_path = fs::path(run_dir) / "tubes.csv";
  const fs::path roll_path = fs::path(rollout_dir) / "rollouts.csv";
  if (!fs::exists(tubes_path)) {
    std::cerr << "error: missing " << tubes_path.string() << "\n";
    return 1;
  }
  if (!fs::exists(roll_path)) {
    std::cerr << "error: missing " << roll_path.string() << "\n";
    return 1;
  }
  csv_write(out_file, summary_csv(csv_read(tubes_path.string()), csv_read(roll_path.string())));
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slsynth: robust output-feedback controller synthesis"};
  app.require_subcommand(1);
  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--threads", g.threads, "worker threads (or SLS_SYNTH_THREADS)");

  std::string spec_arg, out_dir = "out", result_file, mode = "uniform";
  std::string t_list = "10,12,15,20,40,80";
  std::string data_file, basis = "x0:2", env_out = "envelope.json";
  std::string run_dir, rollout_dir, summary_out = "summary.csv";
  int n = 50;
  bool ce = false;

  auto* syn = app.add_subcommand("synthesize", "synthesize a robust controller");
  syn->add_option("--spec", spec_arg, "spec file or builtin name")->required();
  syn->add_option("--out", out_dir, "output directory");
  syn->add_flag("--ce", ce, "certainty-equivalent baseline (post-hoc tubes)");

  auto* rol = app.add_subcommand("rollout", "Monte Carlo rollouts of a synthesis result");
  rol->add_option("--result", result_file, "result.json from synthesize")->required();
  rol->add_option("--n", n, "number of rollouts");
  rol->add_option("--mode", mode, "uniform | extreme");
  rol->add_option("--out", out_dir, "output directory");

  auto* ben = app.add_subcommand("bench-horizon", "Riccati vs dense-oracle horizon sweep");
  ben->add_option("--T-list", t_list, "comma-separated horizons");
  ben->add_option("--out", out_dir, "output directory");

  double gamma = 1e-4, mu = 1e3;
  auto* cal = app.add_subcommand("calibrate", "fit a perception-error envelope");
  cal->add_option("--data", data_file, "residual CSV (coordinate columns then r)")->required();
  cal->add_option("--basis", basis, "basis spec, e.g. px,py:3");
  cal->add_option("--gamma", gamma, "ridge weight");
  cal->add_option("--mu", mu, "hinge-slack weight");
  cal->add_option("--out", env_out, "output envelope JSON");

  auto* rep = app.add_subcommand("report", "merge tubes and rollouts into a plot-ready summary");
  rep->add_option("--run", run_dir, "synthesis output directory")->required();
  rep->add_option("--rollouts", rollout_dir, "rollout output directory")->required();
  rep->add_option("--out", summary_out, "summary CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (syn->parsed()) return cmd_synthesize(spec_arg, out_dir, ce, g);
    if (rol->parsed()) return cmd_rollout(result_file, n, mode, out_dir, g);
    if (ben->parsed()) return cmd_bench(t_list, out_dir, g);
    if (cal->parsed()) return cmd_calibrate(data_file, basis, gamma, mu, env_out);
    if (rep->parsed()) return cmd_report(run_dir, rollout_dir, summary_out);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
