// sensindex: sensitivity-index estimation from a single i.i.d. sample.
//
// Subcommands:
//   estimate   point estimate (and model-assisted variance/CI) from a CSV file
//   simulate   draw a sample from a catalogue model, write CSV
//   variance   asymptotic variance breakdown for a catalogue model
//   verify     run a named verification suite, emit a JSON report
//
// Exit codes: 0 ok, 1 verification suite failed, 2 input parse error,
// 3 ties present, 4 degenerate variance, 5 quadrature not converged,
// 64 usage error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sensindex/cli_support.hpp"

namespace {

using namespace sensindex;

constexpr const char* kExitCodeTable =
    "Exit codes:\n"
    "  0   success\n"
    "  1   verification suite failed\n"
    "  2   input parse error (CSV/JSON)\n"
    "  3   ties present under --tie-policy error\n"
    "  4   degenerate variance\n"
    "  5   quadrature failed to converge\n"
    "  64  usage error (bad flags, unknown model or suite, invalid level)\n";

std::map<std::string, double> parse_params(const std::vector<std::string>& kvs) {
  std::map<std::string, double> params;
  for (const auto& kv : kvs) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("--param expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
      if (params.count(key)) throw ParseError("--param '" + key + "' given twice");
      params[key] = v;
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("--param '" + kv + "': value is not a number");
    }
  }
  return params;
}

void emit_text(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    std::cout.flush();
    if (!std::cout) throw ParseError("failed to write to stdout");
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ParseError("cannot open output file '" + out_path + "'");
  out << text;
  out.flush();
  if (!out) throw ParseError("failed to write '" + out_path + "'");
}

void emit_json(const nlohmann::json& j, const std::string& out_path) {
  emit_text(j.dump(2) + "\n", out_path);
}

// A model source is either a catalogue name (with optional parameters) or a
// tabulated conditional-CDF grid read from CSV.
struct ModelSource {
  std::string name;                      // catalogue name ("" when tabulated)
  std::map<std::string, double> params;  // catalogue parameters
  std::string cond_cdf_csv;              // tabulated grid path ("" when catalogue)

  bool given() const { return !name.empty() || !cond_cdf_csv.empty(); }

  GenerativeModel resolve_scalar() const {
    if (!cond_cdf_csv.empty()) {
      if (!params.empty()) throw ParseError("--param applies to catalogue models only");
      return read_cond_cdf_csv(cond_cdf_csv);
    }
    return make_model(name, params);
  }
};

struct EstimateArgs {
  std::string csv_path;
  std::string index = "sobol";
  std::string tie_policy = "error";
  std::uint64_t seed = 0;
  double level = 0.95;
  ModelSource model;
  std::string out;
};

int cmd_estimate(const EstimateArgs& a) {
  const Sample s = read_sample_csv(a.csv_path);
  if (s.n() < 3) throw ParseError("estimate: need at least 3 data rows, got " + std::to_string(s.n()));
  const TiePolicy policy = tie_policy_from_string(a.tie_policy);
  const IndexKind kind = index_kind_from_string(a.index);

  EstimateReport rep;
  rep.n = s.n();
  if (s.dim() == 1) {
    const RankStructure rs = build_rank_structure(s, policy, a.seed, kind != IndexKind::sobol);
    rep.index_name = to_string(kind);
    switch (kind) {
      case IndexKind::sobol: rep.point = {sobol_rank_estimate_from(s.y(), rs)}; break;
      case IndexKind::cvm: rep.point = {cvm_rank_estimate_from(rank_sums(rs))}; break;
      case IndexKind::chatterjee: rep.point = {chatterjee_estimate_from(rank_sums(rs))}; break;
    }
  } else {
    if (kind != IndexKind::sobol)
      throw Error(exit_usage, "estimate: multi-column y supports --index sobol only");
    rep.index_name = "sobol";
    rep.point = sobol_multivariate(s, policy, a.seed);
  }

  std::optional<std::string> model_name;
  std::optional<double> corrected;
  if (a.model.given()) {
    if (s.dim() != 1)
      throw Error(exit_usage, "estimate: model-assisted variance requires a scalar y column");
    const GenerativeModel m = a.model.resolve_scalar();
    model_name = m.name;
    double sigma2 = 0.0, shift = 0.0;
    DeltaEstimate de;
    if (kind == IndexKind::sobol) {
      const auto bd = sobol_asymptotic_variance(m);
      de = delta_n(m, s.n());
      sigma2 = bd.total;
      shift = de.value / (2.0 * bd.var_y);
    } else {
      // Chatterjee's estimator shares the CvM index's asymptotics.
      const auto bd = cvm_asymptotic_variance(m);
      de = delta_n_cvm(m, s.n());
      sigma2 = bd.total;
      shift = 3.0 * de.value;
    }
    rep.bias_delta_n = de.value;
    rep.variance = sigma2;
    corrected = rep.point[0] + shift;
    rep.ci = confidence_interval(*corrected, sigma2, s.n(), a.level);
  }
  emit_json(estimate_report_json(rep, policy, model_name, corrected), a.out);
  return exit_ok;
}

struct SimulateArgs {
  ModelSource model;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  Sample s;
  if (a.model.cond_cdf_csv.empty() && a.model.name == "pair_linear_noise") {
    s = sample_model(make_vector_model(a.model.name, a.model.params), a.n, a.seed);
  } else {
    s = sample_model(a.model.resolve_scalar(), a.n, a.seed);
  }
  std::ostringstream os;
  write_sample_csv(os, s);
  emit_text(os.str(), a.out);
  return exit_ok;
}

struct VarianceArgs {
  ModelSource model;
  std::string index = "sobol";
  std::size_t n = 0;  // 0 = no finite-n bias term
  int nodes = 256;
  double tol = 1e-8;
  std::string out;
};

int cmd_variance(const VarianceArgs& a) {
  QuadratureSpec spec;
  spec.nodes = a.nodes;
  spec.rel_tol = a.tol;

  if (a.model.cond_cdf_csv.empty() && a.model.name == "pair_linear_noise") {
    if (a.index != "sobol")
      throw Error(exit_usage, "variance: the joint model supports --index sobol only");
    const VectorModel vm = make_vector_model(a.model.name, a.model.params);
    const Eigen::MatrixXd gamma = gamma_matrix(vm, spec);
    std::vector<double> rhos;
    for (const auto& comp : vm.components) rhos.push_back(true_indices(comp, spec).sobol);
    emit_json(joint_variance_json(vm, gamma, rhos), a.out);
    return exit_ok;
  }

  const GenerativeModel m = a.model.resolve_scalar();
  const std::string label = a.model.cond_cdf_csv.empty() ? a.model.name : m.name;
  if (a.index == "sobol") {
    const auto bd = sobol_asymptotic_variance(m, spec);
    std::optional<DeltaEstimate> de;
    if (a.n) de = delta_n(m, a.n);
    emit_json(sobol_variance_json(label, a.model.params, bd, de), a.out);
  } else {
    const auto bd = cvm_asymptotic_variance(m, spec);
    std::optional<DeltaEstimate> de;
    if (a.n) de = delta_n_cvm(m, a.n);
    emit_json(cvm_variance_json(label, a.model.params, bd, true_indices(m, spec).cvm, de), a.out);
  }
  return exit_ok;
}

struct VerifyArgs {
  std::string suite;
  ModelSource model;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 42;
  std::string index = "sobol";
  int nodes = 256;
  double tol = 1e-8;
  std::string plot_path;
  std::string out;
};

int cmd_verify(const VerifyArgs& a) {
  if (!a.model.cond_cdf_csv.empty())
    throw Error(exit_usage, "verify: suites run on catalogue models (--model), not tabulated grids");
  VerifyConfig cfg;
  cfg.model = a.model.name;
  cfg.params = a.model.params;
  cfg.n = a.n;
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  cfg.index = index_kind_from_string(a.index);
  cfg.spec.nodes = a.nodes;
  cfg.spec.rel_tol = a.tol;

  const VerifyReport rep = run_verify_suite(a.suite, cfg);
  emit_json(verify_report_json(rep), a.out);
  if (!a.plot_path.empty()) {
    std::ostringstream os;
    write_plot_csv(os, rep);
    emit_text(os.str(), a.plot_path);
  }
  return rep.pass ? exit_ok : exit_suite_failed;
}

void add_model_options(CLI::App* cmd, ModelSource& model, std::vector<std::string>& raw_params,
                       bool allow_cond_cdf = true) {
  cmd->add_option("--model", model.name, "Catalogue model name");
  cmd->add_option("--param", raw_params, "Model parameter key=value (repeatable)");
  if (allow_cond_cdf) {
    cmd->add_option("--cond-cdf-csv", model.cond_cdf_csv,
                    "Tabulated conditional-CDF grid CSV (columns x,t,F) instead of --model")
        ->excludes("--model");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sensindex: rank-based sensitivity indices from a single i.i.d. sample"};
  app.footer(kExitCodeTable);
  app.require_subcommand(1);

  EstimateArgs est;
  std::vector<std::string> est_params;
  auto* c_est = app.add_subcommand("estimate", "Estimate a sensitivity index from a CSV sample");
  c_est->add_option("csv", est.csv_path, "Input CSV (header x,y or x,y1..yd)")->required();
  c_est->add_option("--index", est.index, "Index to estimate")
      ->check(CLI::IsMember({"sobol", "cvm", "chatterjee"}))
      ->capture_default_str();
  c_est->add_option("--tie-policy", est.tie_policy, "Tie handling for x (and y) ranks")
      ->check(CLI::IsMember({"error", "stable-index", "random-jitter"}))
      ->capture_default_str();
  c_est->add_option("--seed", est.seed, "Jitter seed for --tie-policy random-jitter")
      ->capture_default_str();
  c_est->add_option("--level", est.level, "Confidence level for the model-assisted CI")
      ->capture_default_str();
  add_model_options(c_est, est.model, est_params);
  c_est->add_option("--out", est.out, "Output JSON path (default: stdout)");

  SimulateArgs sim;
  std::vector<std::string> sim_params;
  auto* c_sim = app.add_subcommand("simulate", "Draw a sample from a catalogue model, write CSV");
  add_model_options(c_sim, sim.model, sim_params);
  c_sim->add_option("--n", sim.n, "Sample size")->required()->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  c_sim->add_option("--out", sim.out, "Output CSV path (default: stdout)");

  VarianceArgs var;
  std::vector<std::string> var_params;
  auto* c_var = app.add_subcommand("variance", "Asymptotic variance breakdown for a model");
  add_model_options(c_var, var.model, var_params);
  c_var->add_option("--index", var.index, "Index whose variance to compute")
      ->check(CLI::IsMember({"sobol", "cvm"}))
      ->capture_default_str();
  c_var->add_option("--n", var.n, "Also evaluate the finite-n bias term at this sample size");
  c_var->add_option("--nodes", var.nodes, "Gauss-Legendre nodes per panel")
      ->check(CLI::IsMember({64, 128, 256, 512, 1024, 2048}))
      ->capture_default_str();
  c_var->add_option("--tol", var.tol, "Quadrature relative tolerance")->capture_default_str();
  c_var->add_option("--out", var.out, "Output JSON path (default: stdout)");

  VerifyArgs ver;
  std::vector<std::string> ver_params;
  auto* c_ver = app.add_subcommand("verify", "Run a verification suite");
  c_ver->add_option("suite", ver.suite, "doob|bracket|clt-sobol|clt-cvm|delta|consistency|kernels")
      ->required()
      ->check(CLI::IsMember(sensindex::verify_suite_names()));
  add_model_options(c_ver, ver.model, ver_params, /*allow_cond_cdf=*/false);
  c_ver->add_option("--n", ver.n, "Override the suite's sample size");
  c_ver->add_option("--reps", ver.reps, "Override replicates (doob/bracket: seeds; delta: MC budget)");
  c_ver->add_option("--seed", ver.seed, "Master seed")->capture_default_str();
  c_ver->add_option("--index", ver.index, "Index for the delta suite")
      ->check(CLI::IsMember({"sobol", "cvm"}))
      ->capture_default_str();
  c_ver->add_option("--nodes", ver.nodes, "Gauss-Legendre nodes per panel")
      ->check(CLI::IsMember({64, 128, 256, 512, 1024, 2048}))
      ->capture_default_str();
  c_ver->add_option("--tol", ver.tol, "Quadrature relative tolerance")->capture_default_str();
  c_ver->add_option("--emit-plot-data", ver.plot_path, "Write tidy per-suite CSV to this path");
  c_ver->add_option("--out", ver.out, "Output JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return sensindex::exit_usage;
  }

  try {
    if (c_est->parsed()) {
      est.model.params = parse_params(est_params);
      return cmd_estimate(est);
    }
    if (c_sim->parsed()) {
      sim.model.params = parse_params(sim_params);
      return cmd_simulate(sim);
    }
    if (c_var->parsed()) {
      var.model.params = parse_params(var_params);
      return cmd_variance(var);
    }
    if (c_ver->parsed()) {
      ver.model.params = parse_params(ver_params);
      return cmd_verify(ver);
    }
    return sensindex::exit_usage;
  } catch (const sensindex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  }
}
