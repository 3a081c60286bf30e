// Command-line frontend: array decomposition, joint diagonalization, mixture
// and hidden-chain fitting, data generation, and the Monte Carlo experiments.
//
// Conventions shared by every subcommand:
//   - axes, variables, and pivot indices are 1-based on the command line and
//     in help text; files and JSON payloads use the library's 0-based indices;
//   - outputs are written to a temporary file and renamed into place, so a
//     failed run never leaves a partial file behind;
//   - --config reads defaults from a JSON file whose top-level sections are
//     subcommand names; explicit flags override the file, the file overrides
//     built-in defaults, and unknown keys are rejected;
//   - --seed falls back to the TRIAD_SEED environment variable when neither
//     the flag nor the config provides one;
//   - exit status: 0 success, 1 usage/parse/I-O errors, 2 numerical failures
//     (rank deficiency, singularity, non-convergence).

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "triad/serialize.hpp"
#include "triad/version.hpp"

namespace {

using triad::Index;
using triad::json;

// --- small I/O helpers ---------------------------------------------------------

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw triad::ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw triad::ParseError(path + ": " + e.what());
  }
}

// Write-to-temp plus rename: the destination appears only on success.
void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw triad::ParseError("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out.flush()) {
      std::remove(tmp.c_str());
      throw triad::ParseError("failed writing '" + tmp + "'");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw triad::ParseError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

void write_json_atomic(const std::string& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

Eigen::MatrixXd read_sample_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw triad::ParseError("cannot open '" + path + "'");
  return triad::read_sample_csv(in);
}

// --- JSON config files -----------------------------------------------------------

// Adapter so --config accepts a JSON object; nested objects name subcommand
// sections ("fit-hmm": {...}), arrays supply multi-value options.
class JsonConfig : public CLI::Config {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override {
    json j;
    try {
      j = json::parse(is, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return dump_app(app, default_also).dump(2) + "\n";
  }

 private:
  static std::string scalar_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void walk(const json& j, std::vector<std::string> parents,
                   std::vector<CLI::ConfigItem>& items) {
    if (!j.is_object()) throw CLI::ConfigError("config must be a JSON object");
    for (const auto& item : j.items()) {
      const json& v = item.value();
      if (v.is_object()) {
        auto nested = parents;
        nested.push_back(item.key());
        walk(v, std::move(nested), items);
        continue;
      }
      CLI::ConfigItem out;
      out.parents = parents;
      out.name = item.key();
      if (v.is_array()) {
        for (const auto& elem : v) out.inputs.push_back(scalar_to_string(elem));
      } else {
        out.inputs.push_back(scalar_to_string(v));
      }
      items.push_back(std::move(out));
    }
  }

  static json dump_app(const CLI::App* app, bool default_also) {
    json out = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (!opt->get_configurable()) continue;
      const std::string name = opt->get_single_name();
      if (name.empty()) continue;
      if (opt->count() > 0) {
        out[name] = opt->results().size() == 1 ? json(opt->results().front())
                                               : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      json nested = dump_app(sub, default_also);
      if (!nested.empty()) out[sub->get_name()] = std::move(nested);
    }
    return out;
  }
};

// --- shared option bundles ---------------------------------------------------------

// Options shared by every estimator-running subcommand.
struct EstimatorFlags {
  std::vector<Index> kappas;  // per-variable basis sizes; empty = 10 each
  std::string basis = "hermite";
  Index cv_budget = 10;
  Index fixed_kappa = 0;  // 0 = cross-validate
  double jd_tol = 1e-12;
  int jd_sweeps = 200;
  int jd_restarts = 5;

  void attach_jd(CLI::App* cmd) {
    cmd->add_option("--jd-tol", jd_tol, "Joint diagonalization relative tolerance")
        ->capture_default_str();
    cmd->add_option("--jd-sweeps", jd_sweeps, "Joint diagonalization sweep budget")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--jd-restarts", jd_restarts, "Random restarts for the diagonalizer")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  }

  void attach_series(CLI::App* cmd) {
    cmd->add_option("--kappas", kappas,
                    "Per-variable basis truncations (default: 10 for each variable)")
        ->delimiter(',');
    cmd->add_option("--basis", basis, "Basis family for continuous data")
        ->check(CLI::IsMember({"hermite", "legendre"}))
        ->capture_default_str();
    cmd->add_option("--cv-budget", cv_budget,
                    "Largest series truncation tried by cross-validation")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--fixed-kappa", fixed_kappa,
                    "Skip cross-validation and use this many series terms (0 = cross-validate)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  }

  triad::ContinuousMixtureOptions continuous(std::uint64_t seed) const {
    triad::ContinuousMixtureOptions opts;
    opts.cv_budget = cv_budget;
    opts.fixed_kappa = fixed_kappa;
    opts.jd.rel_tol = jd_tol;
    opts.jd.max_sweeps = jd_sweeps;
    opts.jd.restarts = jd_restarts;
    opts.jd.seed = seed;
    return opts;
  }
};

// Seed resolution: flag/config beats the TRIAD_SEED environment variable,
// which beats the built-in default.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t value, std::uint64_t fallback) {
  if (opt->count() > 0) return value;
  if (const char* env = std::getenv("TRIAD_SEED")) {
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw triad::ParseError("TRIAD_SEED is not an unsigned integer");
    return parsed;
  }
  return fallback;
}

// --- design sourcing ---------------------------------------------------------------

triad::Design load_design(const std::string& design_path, const std::string& kind, double pi1) {
  if (!design_path.empty()) return triad::design_from_json(read_json_file(design_path));
  if (kind == "gaussian-mixture") return triad::Design::gaussian(pi1);
  if (kind == "t-mixture") return triad::Design::student_t(pi1);
  if (kind == "hmm-skew-normal") return triad::Design::hidden_chain();
  throw triad::ParseError("unknown design kind '" + kind + "'");
}

// --- grid emission -----------------------------------------------------------------

struct GridSpec {
  double lo = 0, hi = 0;
  Index count = 0;
  bool given() const { return count > 0; }
};

// Parses "lo:hi:count".
GridSpec parse_grid(const std::string& text) {
  GridSpec g;
  if (text.empty()) return g;
  double lo, hi;
  long count;
  char extra;
  if (std::sscanf(text.c_str(), "%lf:%lf:%ld%c", &lo, &hi, &count, &extra) != 3 || count < 2 ||
      hi <= lo)
    throw triad::ParseError("--grid expects lo:hi:count with hi > lo and count >= 2");
  g.lo = lo;
  g.hi = hi;
  g.count = count;
  return g;
}

// One row per (variable, component, grid point): the estimate with its
// pointwise standard error (sigma-hat/sqrt(n)) and confidence band.
std::string density_grid_csv(const std::vector<triad::ClassificationWeights>& weights,
                             const std::vector<std::vector<triad::SeriesDensityEstimate>>& dens,
                             const Eigen::MatrixXd& sample, const GridSpec& grid, double level) {
  std::ostringstream os;
  os << "# triad-csv v1 density-grid\n";
  os << "variable,component,y,fhat,se,lo,hi\n";
  char buf[192];
  const double n = static_cast<double>(sample.rows());
  for (std::size_t i = 0; i < dens.size(); ++i) {
    for (const auto& d : dens[i]) {
      for (Index t = 0; t < grid.count; ++t) {
        const double y =
            grid.lo + (grid.hi - grid.lo) * static_cast<double>(t) / (grid.count - 1);
        const auto band = triad::confidence_interval(weights[i], sample, d, y, level);
        std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long>(d.variable), static_cast<long>(d.component), y, band.fhat,
                      band.se / std::sqrt(n), band.lo, band.hi);
        os << buf;
      }
    }
  }
  return os.str();
}

// --- subcommand bodies ---------------------------------------------------------------

struct GenArgs {
  std::string design_path, kind = "gaussian-mixture", out, labels_out;
  double pi1 = 0.5;
  Index n = 0;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

void run_gen(const GenArgs& a) {
  triad::Design d = load_design(a.design_path, a.kind, a.pi1);
  const Index n = a.n > 0 ? a.n : d.n;
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, d.seed);
  std::ostringstream sample, labels;
  if (d.kind == triad::DesignKind::hmm_skew_normal) {
    const auto draw = triad::draw_hmm(d, n, seed);
    triad::write_sample_csv(sample, draw.y);
    labels << "# triad-csv v1 labels\n";
    for (Index m = 0; m < n; ++m)
      labels << draw.path(m, 0) << ',' << draw.path(m, 1) << ',' << draw.path(m, 2) << '\n';
  } else {
    const auto draw = triad::draw_mixture(d, n, seed);
    triad::write_sample_csv(sample, draw.y);
    labels << "# triad-csv v1 labels\n";
    for (int z : draw.labels) labels << z << '\n';
  }
  write_file_atomic(a.out, sample.str());
  if (!a.labels_out.empty()) write_file_atomic(a.labels_out, labels.str());
}

struct DecomposeArgs {
  std::string in, out;
  Index r = 0;
  Index pivot = 1;  // 1-based
  std::vector<Index> part1, part2;  // 1-based
  double rank_tol = 1e-10, split_tol = 1e-2;
  EstimatorFlags est;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

void run_decompose(const DecomposeArgs& a) {
  const auto x = triad::array_from_json(read_json_file(a.in));
  triad::DecomposeOptions opts;
  if (a.pivot < 1 || a.pivot > x.order())
    throw triad::ParseError("--pivot must name an axis between 1 and " +
                            std::to_string(x.order()));
  opts.pivot = a.pivot - 1;
  for (Index v : a.part1) opts.part1.push_back(v - 1);
  for (Index v : a.part2) opts.part2.push_back(v - 1);
  opts.rank_rel_tol = a.rank_tol;
  opts.split_rank_one_tol = a.split_tol;
  opts.jd.rel_tol = a.est.jd_tol;
  opts.jd.max_sweeps = a.est.jd_sweeps;
  opts.jd.restarts = a.est.jd_restarts;
  opts.jd.seed = resolve_seed(a.seed_opt, a.seed, 1);
  const auto report = triad::recover_all_factors(x, a.r, opts);
  write_json_atomic(a.out, triad::decompose_report_to_json(report));
}

struct JadiagArgs {
  std::string in, out;
  double tol = 1e-12;
  int sweeps = 200, restarts = 5;
  double norm_cap = 1e6;
  bool require_convergence = false;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

void run_jadiag(const JadiagArgs& a) {
  const auto problem = triad::jd_problem_from_json(read_json_file(a.in));
  triad::JointDiagOptions opts;
  opts.rel_tol = a.tol;
  opts.max_sweeps = a.sweeps;
  opts.restarts = a.restarts;
  opts.column_norm_cap = a.norm_cap;
  opts.require_convergence = a.require_convergence;
  opts.seed = resolve_seed(a.seed_opt, a.seed, 1);
  const auto result = triad::joint_diagonalize(problem, opts);
  write_json_atomic(a.out, triad::jd_result_to_json(result));
}

struct FitArgs {
  std::string sample_path, table_path, out, grid_out;
  std::string grid_text;
  Index r = 0;
  double level = 0.95;
  double clip_warn = 0.05;
  EstimatorFlags est;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

void run_fit_mixture(const FitArgs& a) {
  if (a.sample_path.empty() && a.table_path.empty())
    throw triad::ParseError("either --in (sample CSV) or --table (count JSON) is required");
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, 1);
  const GridSpec grid = parse_grid(a.grid_text);
  if (!a.table_path.empty()) {
    if (grid.given()) throw triad::ParseError("--grid applies to continuous samples only");
    const auto table = triad::array_from_json(read_json_file(a.table_path));
    triad::DiscreteMixtureOptions opts;
    opts.clip_warn_bound = a.clip_warn;
    opts.decompose.jd.rel_tol = a.est.jd_tol;
    opts.decompose.jd.max_sweeps = a.est.jd_sweeps;
    opts.decompose.jd.restarts = a.est.jd_restarts;
    opts.decompose.jd.seed = seed;
    auto fit = triad::fit_discrete_mixture(table, a.r, opts);
    fit = triad::align_labels(fit);
    write_json_atomic(a.out, triad::mixture_to_json(fit));
    return;
  }
  const auto y = read_sample_file(a.sample_path);
  auto kappas = a.est.kappas;
  if (kappas.empty()) kappas.assign(static_cast<std::size_t>(y.cols()), 10);
  const auto basis = triad::make_basis(triad::basis_from_name(a.est.basis));
  auto fit = triad::fit_continuous_mixture(y, a.r, basis, kappas, a.est.continuous(seed));
  fit = triad::align_labels(fit);
  write_json_atomic(a.out, triad::mixture_to_json(fit));
  if (grid.given())
    write_file_atomic(a.grid_out, density_grid_csv(fit.weights, fit.densities, y, grid, a.level));
}

void run_fit_hmm(const FitArgs& a) {
  if (a.sample_path.empty() && a.table_path.empty())
    throw triad::ParseError("either --in (sample CSV) or --table (count JSON) is required");
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, 1);
  const GridSpec grid = parse_grid(a.grid_text);
  triad::HmmOptions opts;
  opts.discrete.clip_warn_bound = a.clip_warn;
  opts.discrete.decompose.jd.rel_tol = a.est.jd_tol;
  opts.discrete.decompose.jd.max_sweeps = a.est.jd_sweeps;
  opts.discrete.decompose.jd.restarts = a.est.jd_restarts;
  opts.discrete.decompose.jd.seed = seed;
  opts.continuous = a.est.continuous(seed);
  if (!a.table_path.empty()) {
    if (grid.given()) throw triad::ParseError("--grid applies to continuous samples only");
    const auto table = triad::array_from_json(read_json_file(a.table_path));
    auto fit = triad::fit_hmm(table, a.r, opts);
    fit = triad::align_labels(fit);
    write_json_atomic(a.out, triad::hmm_to_json(fit));
    return;
  }
  const auto y = read_sample_file(a.sample_path);
  auto kappas = a.est.kappas;
  if (kappas.empty()) kappas.assign(3, 10);
  const auto basis = triad::make_basis(triad::basis_from_name(a.est.basis));
  auto fit = triad::fit_hmm(y, a.r, basis, kappas, opts);
  fit = triad::align_labels(fit);
  write_json_atomic(a.out, triad::hmm_to_json(fit));
  if (grid.given()) {
    std::vector<triad::ClassificationWeights> w{fit.emission_weights};
    std::vector<std::vector<triad::SeriesDensityEstimate>> dens{fit.emissions};
    write_file_atomic(a.grid_out, density_grid_csv(w, dens, y, grid, a.level));
  }
}

struct ExperimentArgs {
  std::string design_path, kind = "gaussian-mixture", out, csv_out;
  std::vector<double> pi1_grid{0.2, 0.3, 0.4, 0.5};
  Index reps = 0, n = 0;
  Index quad_nodes = 200;
  Index jobs = 0;
  double level = 0.95;
  EstimatorFlags est;
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
};

triad::HarnessOptions harness_options(const ExperimentArgs& a, std::uint64_t seed) {
  triad::HarnessOptions opts;
  opts.mixture = a.est.continuous(seed);
  opts.kappas = a.est.kappas;
  opts.quad_nodes = a.quad_nodes;
  opts.level = a.level;
  opts.jobs = a.jobs > 0
                  ? a.jobs
                  : static_cast<Index>(std::max(1u, std::thread::hardware_concurrency()));
  return opts;
}

void run_experiment_rmise(const ExperimentArgs& a) {
  triad::Design base = load_design(a.design_path, a.kind, 0.5);
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, base.seed);
  const Index reps = a.reps > 0 ? a.reps : 100;
  const Index n = a.n > 0 ? a.n : base.n;
  const auto report = triad::run_rmise(base, a.pi1_grid, reps, n, seed, harness_options(a, seed));
  write_json_atomic(a.out, triad::harness_report_to_json(report));
  if (!a.csv_out.empty()) {
    std::ostringstream os;
    triad::write_rmise_csv(os, report);
    write_file_atomic(a.csv_out, os.str());
  }
  if (report.failures > 0)
    std::cerr << "note: " << report.failures << " of " << reps * a.pi1_grid.size()
              << " replications failed; see failure_messages in the report\n";
}

void run_experiment_coverage(const ExperimentArgs& a) {
  triad::Design chain = a.design_path.empty()
                            ? triad::Design::hidden_chain()
                            : triad::design_from_json(read_json_file(a.design_path));
  const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, chain.seed);
  const Index reps = a.reps > 0 ? a.reps : 200;
  const Index n = a.n > 0 ? a.n : 5000;
  const auto report = triad::run_coverage(chain, reps, n, seed, harness_options(a, seed));
  write_json_atomic(a.out, triad::harness_report_to_json(report));
  if (!a.csv_out.empty()) {
    std::ostringstream os;
    triad::write_coverage_csv(os, report);
    write_file_atomic(a.csv_out, os.str());
  }
  if (report.failures > 0)
    std::cerr << "note: " << report.failures << " of " << reps
              << " replications failed; see failure_messages in the report\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Canonical polyadic decomposition and nonparametric latent-structure estimation"};
  app.set_version_flag("--version", std::string("triad ") + triad::version());
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "Read option defaults from a JSON file")
      ->check(CLI::ExistingFile);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  // gen
  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen", "Draw a sample from a benchmark design");
  auto* gen_design = cmd_gen->add_option("--design", gen.design_path,
                                         "Design JSON file (overrides --kind/--pi1)")
                         ->check(CLI::ExistingFile);
  cmd_gen->add_option("--kind", gen.kind, "Design preset")
      ->check(CLI::IsMember({"gaussian-mixture", "t-mixture", "hmm-skew-normal"}))
      ->capture_default_str()
      ->excludes(gen_design);
  cmd_gen->add_option("--pi1", gen.pi1, "First-component proportion (mixture presets)")
      ->check(CLI::Range(1e-9, 1.0))
      ->capture_default_str();
  cmd_gen->add_option("--n", gen.n, "Sample size (default: the design's)")
      ->check(CLI::PositiveNumber);
  gen.seed_opt = cmd_gen->add_option("--seed", gen.seed, "Master seed (fallback: TRIAD_SEED)");
  cmd_gen->add_option("--out", gen.out, "Output sample CSV")->required();
  cmd_gen->add_option("--labels-out", gen.labels_out, "Also write latent labels (diagnostics)");
  cmd_gen->callback([&gen]() { run_gen(gen); });

  // decompose
  DecomposeArgs dec;
  auto* cmd_dec = app.add_subcommand("decompose", "Canonical polyadic decomposition of an array");
  cmd_dec->add_option("--in", dec.in, "Input array JSON {dims, values}")->required();
  cmd_dec->add_option("--out", dec.out, "Output report JSON")->required();
  cmd_dec->add_option("--r", dec.r, "Decomposition rank")->required()->check(CLI::PositiveNumber);
  cmd_dec->add_option("--pivot", dec.pivot, "1-based axis placed on the middle mode")
      ->capture_default_str();
  cmd_dec->add_option("--part1", dec.part1, "1-based axes merged into the first mode")
      ->delimiter(',');
  cmd_dec->add_option("--part2", dec.part2, "1-based axes merged into the last mode")
      ->delimiter(',');
  cmd_dec->add_option("--rank-tol", dec.rank_tol, "Relative singular-value cutoff for rank checks")
      ->capture_default_str();
  cmd_dec->add_option("--split-tol", dec.split_tol,
                      "Warn when a merged factor column deviates from rank one by more than this")
      ->capture_default_str();
  dec.est.attach_jd(cmd_dec);
  dec.seed_opt = cmd_dec->add_option("--seed", dec.seed, "Restart seed (fallback: TRIAD_SEED)");
  cmd_dec->callback([&dec]() { run_decompose(dec); });

  // jadiag
  JadiagArgs jd;
  auto* cmd_jd = app.add_subcommand("jadiag", "Joint approximate diagonalization of a matrix stack");
  cmd_jd->add_option("--in", jd.in, "Problem JSON {matrices: [...]}")->required();
  cmd_jd->add_option("--out", jd.out, "Result JSON")->required();
  cmd_jd->add_option("--tol", jd.tol, "Relative criterion tolerance")->capture_default_str();
  cmd_jd->add_option("--sweeps", jd.sweeps, "Sweep budget")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_jd->add_option("--restarts", jd.restarts, "Random restarts")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd_jd->add_option("--norm-cap", jd.norm_cap, "Reject iterates whose column norm exceeds this")
      ->capture_default_str();
  cmd_jd->add_flag("--require-convergence", jd.require_convergence,
                   "Fail (exit 2) when the sweep budget is exhausted");
  jd.seed_opt = cmd_jd->add_option("--seed", jd.seed, "Restart seed (fallback: TRIAD_SEED)");
  cmd_jd->callback([&jd]() { run_jadiag(jd); });

  // fit-mixture / fit-hmm share their surface
  FitArgs fmix, fhmm;
  auto add_fit = [](CLI::App* cmd, FitArgs& a, const char* what) {
    auto* in = cmd->add_option("--in", a.sample_path,
                               std::string("Sample CSV (n rows, ") + what + ")");
    cmd->add_option("--table", a.table_path, "Count-table JSON {dims, values} (discrete data)")
        ->excludes(in);
    cmd->add_option("--out", a.out, "Output estimate JSON")->required();
    cmd->add_option("--r", a.r, "Number of latent classes/states")
        ->required()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--level", a.level, "Confidence level for --grid bands")
        ->check(CLI::Range(1e-9, 1.0 - 1e-9))
        ->capture_default_str();
    cmd->add_option("--clip-warn", a.clip_warn,
                    "Warn when clipping removes more than this fraction of a column's mass")
        ->capture_default_str();
    a.est.attach_series(cmd);
    a.est.attach_jd(cmd);
    auto* grid = cmd->add_option("--grid", a.grid_text,
                                 "Evaluate densities on lo:hi:count (continuous only)");
    cmd->add_option("--grid-out", a.grid_out, "Density-grid CSV path (requires --grid)")
        ->needs(grid);
    a.seed_opt = cmd->add_option("--seed", a.seed, "Diagonalizer seed (fallback: TRIAD_SEED)");
  };
  auto* cmd_fmix = app.add_subcommand("fit-mixture", "Fit a finite mixture to a sample or table");
  add_fit(cmd_fmix, fmix, "one column per variable");
  cmd_fmix->callback([&fmix]() { run_fit_mixture(fmix); });
  auto* cmd_fhmm =
      app.add_subcommand("fit-hmm", "Fit a two-state-step hidden Markov model from triples");
  add_fit(cmd_fhmm, fhmm, "3 consecutive outcomes");
  cmd_fhmm->callback([&fhmm]() { run_fit_hmm(fhmm); });

  // experiment rmise|coverage
  ExperimentArgs exr, exc;
  auto* cmd_ex = app.add_subcommand("experiment", "Monte Carlo experiments");
  cmd_ex->require_subcommand(1);
  auto add_experiment_common = [](CLI::App* cmd, ExperimentArgs& a) {
    cmd->add_option("--quad-nodes", a.quad_nodes, "Quadrature nodes for integrated errors")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--jobs", a.jobs, "Worker threads (default: available cores)")
        ->check(CLI::NonNegativeNumber);
    a.est.attach_series(cmd);
    a.est.attach_jd(cmd);
    cmd->add_option("--out", a.out, "Report JSON")->required();
    cmd->add_option("--csv-out", a.csv_out, "Tidy per-cell CSV for plotting");
    a.seed_opt = cmd->add_option("--seed", a.seed, "Master seed (fallback: TRIAD_SEED)");
  };
  auto* cmd_rmise =
      cmd_ex->add_subcommand("rmise", "Integrated-error curves over a proportion grid");
  {
    auto* d = cmd_rmise->add_option("--design", exr.design_path, "Design JSON (mixture kinds)")
                  ->check(CLI::ExistingFile);
    cmd_rmise->add_option("--kind", exr.kind, "Design preset")
        ->check(CLI::IsMember({"gaussian-mixture", "t-mixture"}))
        ->capture_default_str()
        ->excludes(d);
    cmd_rmise->add_option("--pi1-grid", exr.pi1_grid, "First-component proportions to sweep")
        ->delimiter(',');
    cmd_rmise->add_option("--reps", exr.reps, "Replications (default 100)")
        ->check(CLI::PositiveNumber);
    cmd_rmise->add_option("--n", exr.n, "Sample size per replication (default: the design's)")
        ->check(CLI::PositiveNumber);
    add_experiment_common(cmd_rmise, exr);
  }
  cmd_rmise->callback([&exr]() { run_experiment_rmise(exr); });
  auto* cmd_cov = cmd_ex->add_subcommand("coverage", "Interval coverage at emission deciles");
  {
    cmd_cov->add_option("--design", exc.design_path, "Design JSON (hidden-chain kind)")
        ->check(CLI::ExistingFile);
    cmd_cov->add_option("--reps", exc.reps, "Replications (default 200)")
        ->check(CLI::PositiveNumber);
    cmd_cov->add_option("--n", exc.n, "Sample size per replication (default 5000)")
        ->check(CLI::PositiveNumber);
    cmd_cov->add_option("--level", exc.level, "Interval level")
        ->check(CLI::Range(1e-9, 1.0 - 1e-9))
        ->capture_default_str();
    add_experiment_common(cmd_cov, exc);
  }
  cmd_cov->callback([&exc]() { run_experiment_coverage(exc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic
    return 1;
  } catch (const triad::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const triad::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const triad::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const triad::DeficientRankError& e) {
    std::cerr << "error (deficient rank): " << e.what() << '\n';
    return 2;
  } catch (const triad::ConvergenceError& e) {
    std::cerr << "error (no convergence): " << e.what() << '\n';
    return 2;
  } catch (const triad::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
