#pragma once

// Plumbing behind the command-line tool: strict CSV ingestion/emission, JSON
// report serialization, and the named verification suites. Header-only so the
// test suite can drive everything in-process with small configurations.

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "sensindex/errors.hpp"
#include "sensindex/estimators.hpp"
#include "sensindex/martingale.hpp"
#include "sensindex/mc_harness.hpp"
#include "sensindex/models.hpp"
#include "sensindex/ranking.hpp"
#include "sensindex/variance.hpp"

namespace sensindex {

// ---------------------------------------------------------------------------
// Number formatting: 17 significant digits round-trips every double.
// ---------------------------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// CSV: fixed dialect. Comma separator, '.' decimal, mandatory header, UTF-8,
// LF line endings. No sniffing; deviations are parse errors with diagnostics.
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline double parse_csv_number(const std::string& cell, std::size_t line_no, std::size_t col_no) {
  const auto where = [&] {
    return "line " + std::to_string(line_no) + ", column " + std::to_string(col_no);
  };
  if (cell.empty()) throw ParseError("csv: " + where() + ": empty cell");
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ParseError("csv: " + where() + ": '" + cell + "' is not a number");
  if (!std::isfinite(value)) throw NonFinite("csv: " + where() + ": non-finite value '" + cell + "'");
  return value;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("csv: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
    throw ParseError("csv: '" + path + "' starts with a byte-order mark; plain UTF-8 expected");

  CsvTable table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    if (start == text.size()) {
      break;  // trailing newline already consumed
    }
    std::size_t end = text.find('\n', start);
    bool had_newline = end != std::string::npos;
    if (!had_newline) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + (had_newline ? 1 : 0);
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      throw ParseError("csv: line " + std::to_string(line_no) +
                       ": CRLF line ending; the dialect is LF only");
    if (line.empty()) {
      if (start >= text.size()) break;  // blank line at EOF tolerated
      throw ParseError("csv: line " + std::to_string(line_no) + ": empty line");
    }
    const auto cells = detail::split_csv_line(line);
    if (line_no == 1) {
      table.header = cells;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError("csv: line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " columns, found " +
                       std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      row[c] = detail::parse_csv_number(cells[c], line_no, c + 1);
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError("csv: '" + path + "' has no header row");
  return table;
}

// Sample files: header `x,y` (scalar) or `x,y1,..,yd` (vector output).
inline Sample read_sample_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const auto& h = table.header;
  if (h.empty() || h[0] != "x")
    throw ParseError("csv: '" + path + "': first header column must be 'x'");
  std::size_t d = 0;
  if (h.size() == 2 && h[1] == "y") {
    d = 1;
  } else {
    d = h.size() - 1;
    if (d == 0) throw ParseError("csv: '" + path + "': no y column");
    for (std::size_t k = 1; k < h.size(); ++k)
      if (h[k] != "y" + std::to_string(k))
        throw ParseError("csv: '" + path + "': header column " + std::to_string(k + 1) +
                         " must be 'y" + std::to_string(k) + "', found '" + h[k] + "'");
  }
  Sample s;
  s.xs.reserve(table.rows.size());
  s.ys.assign(d, {});
  for (auto& col : s.ys) col.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    s.xs.push_back(row[0]);
    for (std::size_t k = 0; k < d; ++k) s.ys[k].push_back(row[k + 1]);
  }
  s.validate();
  return s;
}

inline void write_sample_csv(std::ostream& os, const Sample& s) {
  if (s.dim() == 1) {
    os << "x,y\n";
  } else {
    os << "x";
    for (std::size_t k = 1; k <= s.dim(); ++k) os << ",y" << k;
    os << "\n";
  }
  for (std::size_t i = 0; i < s.n(); ++i) {
    os << format_g17(s.xs[i]);
    for (std::size_t k = 0; k < s.dim(); ++k) os << "," << format_g17(s.ys[k][i]);
    os << "\n";
  }
}

// Conditional-CDF grids: header `x,t,F`, one row per grid cell, every (x, t)
// pair of the rectangular grid present exactly once (any row order).
inline GenerativeModel read_cond_cdf_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"x", "t", "F"})
    throw ParseError("csv: '" + path + "': conditional-CDF grid needs header 'x,t,F'");
  std::set<double> xset, tset;
  for (const auto& row : table.rows) {
    xset.insert(row[0]);
    tset.insert(row[1]);
  }
  const std::vector<double> xs(xset.begin(), xset.end());
  const std::vector<double> ts(tset.begin(), tset.end());
  if (xs.size() < 2 || ts.size() < 2)
    throw ParseError("csv: '" + path + "': conditional-CDF grid needs at least 2 x and 2 t values");
  if (xs.size() * ts.size() != table.rows.size())
    throw ParseError("csv: '" + path + "': grid incomplete: " + std::to_string(table.rows.size()) +
                     " rows for a " + std::to_string(xs.size()) + "x" + std::to_string(ts.size()) +
                     " grid");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> F(xs.size(), std::vector<double>(ts.size(), nan));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t xi = static_cast<std::size_t>(
        std::lower_bound(xs.begin(), xs.end(), row[0]) - xs.begin());
    const std::size_t ti = static_cast<std::size_t>(
        std::lower_bound(ts.begin(), ts.end(), row[1]) - ts.begin());
    if (!std::isnan(F[xi][ti]))
      throw ParseError("csv: '" + path + "': duplicate grid cell (x=" + format_g17(row[0]) +
                       ", t=" + format_g17(row[1]) + ")");
    F[xi][ti] = row[2];
  }
  std::string name = path;
  const std::size_t slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  return tabulated_conditional_model(xs, ts, F, "tabulated:" + name);
}

// ---------------------------------------------------------------------------
// JSON serialization. nlohmann::json with the default std::map storage keeps
// keys sorted, so identical reports serialize to identical bytes.
// ---------------------------------------------------------------------------

inline nlohmann::json mat3_json(const Mat3& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < 3; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json params_json(const std::map<std::string, double>& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : params) j[k] = v;
  return j;
}

inline nlohmann::json estimate_report_json(const EstimateReport& rep, TiePolicy policy,
                                           const std::optional<std::string>& model,
                                           std::optional<double> bias_corrected_point) {
  nlohmann::json j;
  j["report"] = "estimate";
  j["index"] = rep.index_name;
  j["n"] = rep.n;
  j["point"] = rep.point;
  j["tie_policy"] = to_string(policy);
  if (model) j["model"] = *model;
  if (rep.bias_delta_n) j["bias_delta_n"] = *rep.bias_delta_n;
  if (rep.variance) j["sigma2"] = *rep.variance;
  if (bias_corrected_point) j["bias_corrected_point"] = *bias_corrected_point;
  if (rep.ci) {
    j["ci"] = {{"lower", rep.ci->lower}, {"upper", rep.ci->upper}, {"level", rep.ci->level}};
  }
  return j;
}

inline nlohmann::json delta_json(const DeltaEstimate& d) {
  return {{"n", d.n}, {"value", d.value}, {"std_error", d.std_error}, {"budget", d.budget}};
}

inline nlohmann::json sobol_variance_json(const std::string& model,
                                          const std::map<std::string, double>& params,
                                          const SobolVarianceBreakdown& bd,
                                          const std::optional<DeltaEstimate>& delta) {
  nlohmann::json j;
  j["report"] = "variance_sobol";
  j["model"] = model;
  j["params"] = params_json(params);
  j["mean_y"] = bd.mean_y;
  j["var_y"] = bd.var_y;
  j["rho"] = bd.rho;
  j["sigma0"] = mat3_json(bd.sigma0);
  j["sigma1"] = mat3_json(bd.sigma1);
  j["v"] = std::vector<double>{bd.v(0), bd.v(1), bd.v(2)};
  j["contrib_sigma0"] = bd.contrib_sigma0;
  j["contrib_sigma1"] = bd.contrib_sigma1;
  j["sigma2_total"] = bd.total;
  if (delta) j["delta_n"] = delta_json(*delta);
  return j;
}

inline nlohmann::json cvm_variance_json(const std::string& model,
                                        const std::map<std::string, double>& params,
                                        const CvmVarianceBreakdown& bd, double rho,
                                        const std::optional<DeltaEstimate>& delta) {
  nlohmann::json j;
  j["report"] = "variance_cvm";
  j["model"] = model;
  j["params"] = params_json(params);
  j["rho"] = rho;
  j["term_input"] = bd.term_input;
  j["term_output"] = bd.term_output;
  j["term_cross"] = bd.term_cross;
  j["sigma2_raw"] = bd.total_raw;
  j["sigma2_total"] = bd.total;
  if (delta) j["delta_n"] = delta_json(*delta);
  return j;
}

inline nlohmann::json joint_variance_json(const VectorModel& vm, const Eigen::MatrixXd& gamma,
                                          const std::vector<double>& rhos) {
  nlohmann::json j;
  j["report"] = "variance_joint";
  j["model"] = vm.name;
  j["gamma"] = matrix_json(gamma);
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t k = 0; k < vm.components.size(); ++k) {
    comps.push_back({{"name", vm.components[k].name},
                     {"rho", rhos[k]},
                     {"sigma2", gamma(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))}});
  }
  j["components"] = comps;
  return j;
}

// ---------------------------------------------------------------------------
// Verification suites.
// ---------------------------------------------------------------------------

struct VerifyConfig {
  std::string model;                     // empty = suite default
  std::map<std::string, double> params;  // parameters for --model
  std::size_t n = 0;                     // 0 = suite default
  std::size_t reps = 0;                  // 0 = suite default (doob/bracket: #seeds; delta: MC budget)
  std::uint64_t seed = 42;
  IndexKind index = IndexKind::sobol;    // delta suite only
  QuadratureSpec spec{};
};

struct SuiteAssertion {
  std::string name;
  double measured = 0.0;
  double limit = 0.0;
  std::string cmp;  // "<=" or ">="
  bool pass = false;
};

struct VerifyReport {
  std::string suite;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json details = nlohmann::json::object();
  std::vector<SuiteAssertion> assertions;
  bool pass = true;
  double runtime_seconds = 0.0;
  std::vector<std::string> plot_header;
  std::vector<std::vector<std::string>> plot_rows;

  void add(const std::string& name, double measured, double limit, const std::string& cmp) {
    SuiteAssertion a{name, measured, limit, cmp, false};
    a.pass = cmp == "<=" ? (measured <= limit) : (measured >= limit);
    pass = pass && a.pass;
    assertions.push_back(std::move(a));
  }
};

inline nlohmann::json verify_report_json(const VerifyReport& r) {
  nlohmann::json j;
  j["report"] = "verify";
  j["suite"] = r.suite;
  j["config"] = r.config;
  if (!r.details.empty()) j["details"] = r.details;
  nlohmann::json as = nlohmann::json::array();
  for (const auto& a : r.assertions)
    as.push_back({{"name", a.name},
                  {"measured", a.measured},
                  {"limit", a.limit},
                  {"cmp", a.cmp},
                  {"pass", a.pass}});
  j["assertions"] = as;
  j["pass"] = r.pass;
  j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

inline void write_plot_csv(std::ostream& os, const VerifyReport& r) {
  for (std::size_t c = 0; c < r.plot_header.size(); ++c)
    os << (c ? "," : "") << r.plot_header[c];
  os << "\n";
  for (const auto& row : r.plot_rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
    os << "\n";
  }
}

namespace detail {

inline std::vector<std::string> suite_model_names(const VerifyConfig& cfg,
                                                  std::vector<std::string> defaults) {
  if (cfg.model.empty()) {
    if (!cfg.params.empty())
      throw ParseError("verify: --param requires --model (the default runs several models)");
    return defaults;
  }
  return {cfg.model};
}

inline std::uint64_t suite_seed(std::uint64_t master, std::size_t model_idx, std::size_t n) {
  return splitmix64(master ^ (0x9e3779b97f4a7c15ULL * (model_idx + 1) + n));
}

}  // namespace detail

// Exact Doob split, approximate-split remainder envelope, and the conditional
// mean-zero property of the approximate martingale increments.
inline VerifyReport suite_doob(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "doob";
  const std::vector<std::size_t> ns = cfg.n ? std::vector<std::size_t>{cfg.n}
                                            : std::vector<std::size_t>{10, 100, 1000};
  const std::size_t seeds = cfg.reps ? cfg.reps : 100;
  const auto names = detail::suite_model_names(cfg, catalogue_names());
  r.config = {{"models", names}, {"ns", ns}, {"seeds", seeds}, {"seed", cfg.seed}};
  r.plot_header = {"model", "n", "worst_identity_deviation", "worst_remainder_deviation",
                   "remainder_bound"};

  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    const GenerativeModel m = make_model(names[mi], cfg.params);
    for (std::size_t n : ns) {
      double worst_dev = 0.0, worst_rem = 0.0, bound = 0.0;
      for (std::size_t k = 0; k < seeds; ++k) {
        const auto p = build_path(m, n, detail::replicate_seed(detail::suite_seed(cfg.seed, mi, n), k));
        worst_dev = std::max(worst_dev, doob_identity_deviation(p));
        worst_rem = std::max(worst_rem, std::abs(p.r_approx[n] + 0.5 * p.phi_gap_sq));
        bound = 8.0 * p.f_sup * p.f_sup;
      }
      r.add("doob-identity/" + names[mi] + "/n=" + std::to_string(n), worst_dev, 1e-10 * static_cast<double>(n), "<=");
      r.add("remainder-envelope/" + names[mi] + "/n=" + std::to_string(n), worst_rem, bound, "<=");
      r.plot_rows.push_back({names[mi], std::to_string(n), format_g17(worst_dev),
                             format_g17(worst_rem), format_g17(bound)});
    }
  }

  // Approximate martingale increments have conditional mean zero: spot-check a
  // few steps by refreshing the step noise.
  const std::string probe_name = cfg.model.empty() ? "linear_uniform" : cfg.model;
  const GenerativeModel pm = make_model(probe_name, cfg.params);
  const std::size_t pn = 200, preps = 4000;
  const auto check = martingale_property_check(pm, pn, preps, cfg.seed ^ 0xabcdef12u,
                                               {1, 2, pn / 2, pn - 1, pn});
  std::size_t passing = 0;
  for (const auto& row : check.rows) passing += row.pass ? 1 : 0;
  r.add("martingale-increment-mean/" + probe_name,
        static_cast<double>(passing) / static_cast<double>(check.rows.size()), 1.0, ">=");
  return r;
}

// Seed-averaged normalized predictable bracket against the quadrature Sigma1.
inline VerifyReport suite_bracket(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "bracket";
  const std::size_t n = cfg.n ? cfg.n : 10000;
  const std::size_t seeds = cfg.reps ? cfg.reps : 50;
  const auto names = detail::suite_model_names(cfg, {"linear_uniform", "trig_bounded"});
  r.config = {{"models", names}, {"n", n}, {"seeds", seeds}, {"seed", cfg.seed}};
  r.plot_header = {"model", "row", "col", "bracket_avg", "sigma1", "rel_err"};

  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    const GenerativeModel m = make_model(names[mi], cfg.params);
    Mat3 avg = Mat3::Zero();
    for (std::size_t k = 0; k < seeds; ++k)
      avg += bracket_path(m, n, detail::replicate_seed(detail::suite_seed(cfg.seed, mi, n), k))
                 .normalized_final;
    avg /= static_cast<double>(seeds);
    const Mat3 target = sigma1(m, m, cfg.spec);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double rel = std::abs(target(i, j)) > 1e-3
                               ? std::abs(avg(i, j) - target(i, j)) / std::abs(target(i, j))
                               : 0.0;
        worst = std::max(worst, rel);
        r.plot_rows.push_back({names[mi], std::to_string(i), std::to_string(j),
                               format_g17(avg(i, j)), format_g17(target(i, j)), format_g17(rel)});
      }
    r.add("bracket-vs-sigma1/" + names[mi], worst, 0.05, "<=");
    r.details[names[mi]] = {{"bracket_avg", mat3_json(avg)}, {"sigma1", mat3_json(target)}};
  }
  return r;
}

namespace detail {

inline void clt_plot(VerifyReport& r, const CltReport& rep) {
  r.plot_header = {"replicate", "estimate", "z"};
  for (std::size_t k = 0; k < rep.estimates.size(); ++k)
    r.plot_rows.push_back({std::to_string(k), format_g17(rep.estimates[k]),
                           format_g17(rep.standardized[k])});
}

inline nlohmann::json clt_details(const CltReport& rep) {
  return {{"rho_true", rep.rho_true},
          {"sigma2_formula", rep.sigma2_formula},
          {"scaled_sample_var", rep.scaled_sample_var},
          {"delta_value", rep.delta_value},
          {"shift", rep.shift},
          {"center", rep.center},
          {"mean_z", rep.mean_z},
          {"var_z", rep.var_z},
          {"ks_statistic", rep.ks_statistic},
          {"ks_critical_1pct", rep.ks_critical_1pct},
          {"skewness", rep.skewness},
          {"excess_kurtosis", rep.excess_kurtosis},
          {"sign_diagnosis", rep.sign_diagnosis}};
}

}  // namespace detail

// Gaussian fluctuations of the variance-ratio estimator, bias-corrected center.
inline VerifyReport suite_clt_sobol(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "clt-sobol";
  const std::string name = cfg.model.empty() ? "linear_uniform" : cfg.model;
  const std::size_t n = cfg.n ? cfg.n : 4000;
  const std::size_t reps = cfg.reps ? cfg.reps : 2000;
  r.config = {{"model", name}, {"n", n}, {"reps", reps}, {"seed", cfg.seed}};
  const GenerativeModel m = make_model(name, cfg.params);
  const CltReport rep = run_clt_experiment(m, IndexKind::sobol, n, reps, cfg.seed,
                                           Centering::delta_corrected, cfg.spec);
  r.add("clt-sobol/var-z-lower", rep.var_z, 0.9, ">=");
  r.add("clt-sobol/var-z-upper", rep.var_z, 1.1, "<=");
  r.add("clt-sobol/ks", rep.ks_statistic, 1.5 * rep.ks_critical_1pct, "<=");
  r.details = detail::clt_details(rep);
  detail::clt_plot(r, rep);
  return r;
}

// Gaussian fluctuations of the rank-based Cramer-von Mises estimator, plus the
// agreement of the quadrature variance with the empirical one.
inline VerifyReport suite_clt_cvm(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "clt-cvm";
  const std::string name = cfg.model.empty() ? "pure_noise" : cfg.model;
  const std::size_t n = cfg.n ? cfg.n : 4000;
  const std::size_t reps = cfg.reps ? cfg.reps : 2000;
  r.config = {{"model", name}, {"n", n}, {"reps", reps}, {"seed", cfg.seed}};
  const GenerativeModel m = make_model(name, cfg.params);
  const CltReport rep = run_clt_experiment(m, IndexKind::cvm, n, reps, cfg.seed,
                                           Centering::delta_corrected, cfg.spec);
  r.add("clt-cvm/var-z-lower", rep.var_z, 0.9, ">=");
  r.add("clt-cvm/var-z-upper", rep.var_z, 1.1, "<=");
  r.add("clt-cvm/sigma2-vs-empirical",
        std::abs(rep.scaled_sample_var - rep.sigma2_formula) / rep.sigma2_formula, 0.10, "<=");
  r.details = detail::clt_details(rep);
  detail::clt_plot(r, rep);
  return r;
}

// sqrt(n) * Delta_n small at n = 1e4 and decreasing in n (up to MC noise).
inline VerifyReport suite_delta(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "delta";
  const std::vector<std::size_t> ns = cfg.n ? std::vector<std::size_t>{cfg.n}
                                            : std::vector<std::size_t>{100, 1000, 10000};
  const std::size_t budget = cfg.reps ? cfg.reps : 400000;
  const auto names = detail::suite_model_names(cfg, catalogue_names());
  r.config = {{"models", names}, {"ns", ns}, {"budget", budget}, {"seed", cfg.seed},
              {"index", to_string(cfg.index)}};
  r.plot_header = {"model", "n", "delta", "std_error", "sqrt_n_delta"};

  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    const GenerativeModel m = make_model(names[mi], cfg.params);
    const auto rows = delta_scaling_study(m, cfg.index, ns, budget,
                                          detail::suite_seed(cfg.seed, mi, 0));
    for (const auto& row : rows)
      r.plot_rows.push_back({names[mi], std::to_string(row.n), format_g17(row.delta),
                             format_g17(row.std_error), format_g17(row.sqrt_n_delta)});
    r.add("sqrt-n-delta/" + names[mi] + "/n=" + std::to_string(rows.back().n),
          rows.back().sqrt_n_delta, 0.02, "<=");
    if (rows.size() >= 2) {
      double worst = -1.0;
      for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
        const double s0 = rows[k].sqrt_n_delta, s1 = rows[k + 1].sqrt_n_delta;
        const double slack = 2.0 * (std::sqrt(static_cast<double>(rows[k].n)) * rows[k].std_error +
                                    std::sqrt(static_cast<double>(rows[k + 1].n)) * rows[k + 1].std_error);
        worst = std::max(worst, s1 - s0 - slack);
      }
      r.add("sqrt-n-delta-monotone/" + names[mi], worst, 0.0, "<=");
    }
  }
  return r;
}

// Median estimation error at large n against the formula-variance yardstick.
inline VerifyReport suite_consistency(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "consistency";
  const std::size_t n = cfg.n ? cfg.n : 10000;
  const std::size_t reps = cfg.reps ? cfg.reps : 50;
  const auto names = detail::suite_model_names(cfg, catalogue_names());
  r.config = {{"models", names}, {"n", n}, {"reps", reps}, {"seed", cfg.seed}};
  r.plot_header = {"model", "index", "n", "median_abs_error", "threshold"};

  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    const GenerativeModel m = make_model(names[mi], cfg.params);
    for (IndexKind kind : {IndexKind::sobol, IndexKind::cvm}) {
      const double sigma2 = kind == IndexKind::sobol
                                ? sobol_asymptotic_variance(m, cfg.spec).total
                                : cvm_asymptotic_variance(m, cfg.spec).total;
      const double threshold =
          sigma2 > 1e-10 ? 2.0 * std::sqrt(sigma2 / static_cast<double>(n)) : 0.01;
      const auto rows = consistency_sweep(m, kind, {n}, reps,
                                          detail::suite_seed(cfg.seed, mi, kind == IndexKind::sobol),
                                          cfg.spec);
      r.add(std::string("consistency/") + names[mi] + "/" + to_string(kind),
            rows[0].median_abs_error, threshold, "<=");
      r.plot_rows.push_back({names[mi], to_string(kind), std::to_string(n),
                             format_g17(rows[0].median_abs_error), format_g17(threshold)});
    }
  }
  return r;
}

// Covariance-kernel identities, frozen closed forms, and PSD structure.
inline VerifyReport suite_kernels(const VerifyConfig& cfg) {
  VerifyReport r;
  r.suite = "kernels";
  r.config = {{"seed", cfg.seed}};

  // Independence reductions: with Y independent of X the kernels collapse to
  // closed forms in (t, s) expressed through the uniform output CDF.
  const GenerativeModel pn = make_pure_noise();
  const std::array<double, 3> grid = {0.15, 0.5, 0.85};
  double worst_xx = 0.0, worst_xy = 0.0, worst_yy = 0.0;
  for (double t : grid)
    for (double s : grid) {
      const auto ev = cvm_kernels(pn, t, s);
      const double mn = std::min(t, s);
      worst_xx = std::max(worst_xx, std::abs(ev.c_xx - (mn + 3 * t * s) * (mn - t * s)));
      worst_xy = std::max(worst_xy, std::abs(ev.c_xy - 2 * s * (mn - t * s)));
      worst_yy = std::max(worst_yy, std::abs(ev.c_yy - (mn - t * s)));
    }
  r.add("kernel-independence/c_xx", worst_xx, 1e-6, "<=");
  r.add("kernel-independence/c_xy", worst_xy, 1e-6, "<=");
  r.add("kernel-independence/c_yy", worst_yy, 1e-6, "<=");

  // Frozen closed-form variance values.
  const auto bd_pn = cvm_asymptotic_variance(pn, cfg.spec);
  r.add("cvm-sigma2/pure_noise/term_input", std::abs(bd_pn.term_input - 0.1), 1e-5, "<=");
  r.add("cvm-sigma2/pure_noise/term_output", std::abs(bd_pn.term_output - 4.0 / 45.0), 1e-5, "<=");
  r.add("cvm-sigma2/pure_noise/term_cross", std::abs(bd_pn.term_cross - 4.0 / 45.0), 1e-5, "<=");
  r.add("cvm-sigma2/pure_noise/total", std::abs(bd_pn.total - 0.4), 1e-4, "<=");
  const auto bd_det = cvm_asymptotic_variance(make_deterministic_monotone(), cfg.spec);
  r.add("cvm-sigma2/deterministic_monotone/total", bd_det.total, 1e-12, "<=");
  r.add("sobol-sigma2/linear_uniform",
        std::abs(sobol_asymptotic_variance(make_model("linear_uniform"), cfg.spec).total - 0.6),
        1e-9, "<=");
  r.add("sobol-sigma2/pure_noise",
        std::abs(sobol_asymptotic_variance(pn, cfg.spec).total - 1.0), 1e-9, "<=");

  // PSD structure and nonnegative variances across the catalogue. The PSD
  // margin gets an absolute floor matching the quadrature abs_tol: degenerate
  // models make Sigma an exact zero matrix, known only to ~1e-12 entrywise.
  const double psd_abs = 1e-12;
  double worst_psd0 = std::numeric_limits<double>::infinity();
  double worst_psd1 = std::numeric_limits<double>::infinity();
  double min_sigma2 = std::numeric_limits<double>::infinity();
  r.plot_header = {"model", "sigma2_sobol", "sigma2_cvm", "min_eig_sigma0", "min_eig_sigma1"};
  for (const auto& name : catalogue_names()) {
    const GenerativeModel m = make_model(name);
    const auto sb = sobol_asymptotic_variance(m, cfg.spec);
    const auto cb = cvm_asymptotic_variance(m, cfg.spec);
    const double e0 = min_eigenvalue(sb.sigma0) + 1e-9 * sb.sigma0.trace() + psd_abs;
    const double e1 = min_eigenvalue(sb.sigma1) + 1e-9 * sb.sigma1.trace() + psd_abs;
    worst_psd0 = std::min(worst_psd0, e0);
    worst_psd1 = std::min(worst_psd1, e1);
    min_sigma2 = std::min({min_sigma2, sb.total, cb.total});
    r.plot_rows.push_back({name, format_g17(sb.total), format_g17(cb.total),
                           format_g17(min_eigenvalue(sb.sigma0)),
                           format_g17(min_eigenvalue(sb.sigma1))});
  }
  const Eigen::MatrixXd gamma = gamma_matrix(make_pair_linear_noise(), cfg.spec);
  r.add("psd/sigma0", worst_psd0, 0.0, ">=");
  r.add("psd/sigma1", worst_psd1, 0.0, ">=");
  r.add("psd/gamma", min_eigenvalue(gamma) + 1e-9 * gamma.trace() + psd_abs, 0.0, ">=");
  r.add("sigma2-nonnegative", min_sigma2, 0.0, ">=");
  return r;
}

inline std::vector<std::string> verify_suite_names() {
  return {"doob", "bracket", "clt-sobol", "clt-cvm", "delta", "consistency", "kernels"};
}

inline VerifyReport run_verify_suite(const std::string& suite, const VerifyConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  VerifyReport r;
  if (suite == "doob") r = suite_doob(cfg);
  else if (suite == "bracket") r = suite_bracket(cfg);
  else if (suite == "clt-sobol") r = suite_clt_sobol(cfg);
  else if (suite == "clt-cvm") r = suite_clt_cvm(cfg);
  else if (suite == "delta") r = suite_delta(cfg);
  else if (suite == "consistency") r = suite_consistency(cfg);
  else if (suite == "kernels") r = suite_kernels(cfg);
  else throw UnknownModel("unknown verification suite '" + suite + "'");
  const auto t1 = std::chrono::steady_clock::now();
  r.runtime_seconds = std::chrono::duration<double>(t1 - t0).count();
  return r;
}

}  // namespace sensindex
