#include "triad/serialize.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace triad {

namespace {

double number_from(const json& j, const std::string& what) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw ParseError(what + ": expected a number");
  return j.get<double>();
}

// Fetch j[key] with a readable error when absent.
const json& at(const json& j, const char* key, const std::string& what) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(what + ": missing key '" + key + "'");
  return *it;
}

// %.17g renders doubles so that strtod reads the same bits back.
void print_number(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

json index_vector_to_json(const std::vector<std::uint64_t>& v) {
  json out = json::array();
  for (auto x : v) out.push_back(x);
  return out;
}

}  // namespace

json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ParseError(what + ": expected a non-empty array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (!j[0].is_array() || j[0].empty())
    throw ParseError(what + ": rows must be non-empty arrays");
  const Index cols = static_cast<Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ParseError(what + ": ragged rows");
    for (Index k = 0; k < cols; ++k)
      m(i, k) = number_from(row[static_cast<std::size_t>(k)], what);
  }
  return m;
}

json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i)
    v(i) = number_from(j[static_cast<std::size_t>(i)], what);
  return v;
}

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& what) {
  if (!j.is_object()) throw ParseError(what + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) throw ParseError(what + ": unknown key '" + item.key() + "'");
  }
}

// --- multiway arrays ------------------------------------------------------------

json array_to_json(const MultiwayArrayXd& x) {
  json dims = json::array();
  for (Index d : x.dims()) dims.push_back(d);
  json values = json::array();
  for (Index t = 0; t < x.size(); ++t) values.push_back(x.values()[static_cast<std::size_t>(t)]);
  return json{{"dims", std::move(dims)}, {"values", std::move(values)}};
}

MultiwayArrayXd array_from_json(const json& j) {
  require_keys(j, {"dims", "values"}, "array");
  const auto& jd = at(j, "dims", "array");
  if (!jd.is_array() || jd.empty()) throw ParseError("array: dims must be a non-empty array");
  std::vector<Index> dims;
  for (const auto& d : jd) {
    if (!d.is_number_integer() || d.get<long long>() <= 0)
      throw ParseError("array: dims must be positive integers");
    dims.push_back(static_cast<Index>(d.get<long long>()));
  }
  const auto& jv = at(j, "values", "array");
  if (!jv.is_array()) throw ParseError("array: values must be an array");
  Eigen::VectorXd values(static_cast<Index>(jv.size()));
  for (Index t = 0; t < values.size(); ++t)
    values(t) = number_from(jv[static_cast<std::size_t>(t)], "array values");
  return MultiwayArrayXd(dims, std::move(values));
}

// --- joint diagonalization ------------------------------------------------------

json jd_problem_to_json(const JointDiagProblemXd& p) {
  json ms = json::array();
  for (const auto& m : p.matrices) ms.push_back(matrix_to_json(m));
  return json{{"matrices", std::move(ms)}};
}

JointDiagProblemXd jd_problem_from_json(const json& j) {
  require_keys(j, {"matrices"}, "diagonalization problem");
  const auto& jm = at(j, "matrices", "diagonalization problem");
  if (!jm.is_array() || jm.empty())
    throw ParseError("diagonalization problem: matrices must be a non-empty array");
  JointDiagProblemXd p;
  for (const auto& m : jm) p.matrices.push_back(matrix_from_json(m, "matrix"));
  p.validate();
  return p;
}

json jd_result_to_json(const JointDiagResultXd& r) {
  json eigs = json::array();
  for (const auto& e : r.eigenvalues) eigs.push_back(vector_to_json(e));
  json trace = json::array();
  for (double t : r.trace) trace.push_back(t);
  return json{{"q", matrix_to_json(r.Q)},          {"eigenvalues", std::move(eigs)},
              {"criterion", r.criterion},          {"sweeps", r.sweeps},
              {"converged", r.converged},          {"degenerate", r.degenerate},
              {"trace", std::move(trace)}};
}

// --- decomposition ----------------------------------------------------------------

json decompose_report_to_json(const DecomposeReportXd& rep) {
  json factors = json::array();
  for (const auto& f : rep.decomposition.factors) factors.push_back(matrix_to_json(f));
  return json{{"weights", vector_to_json(rep.decomposition.weights)},
              {"factors", std::move(factors)},
              {"criterion", rep.criterion},
              {"residual", rep.residual},
              {"singular_values", vector_to_json(rep.singular_values)},
              {"rank_gap", rep.rank_gap},
              {"jd_converged", rep.jd_converged},
              {"degenerate", rep.degenerate},
              {"warnings", rep.warnings}};
}

// --- density estimates ------------------------------------------------------------

std::string basis_name(BasisKind kind) {
  return kind == BasisKind::hermite_function ? "hermite" : "legendre";
}

BasisKind basis_from_name(const std::string& name) {
  if (name == "hermite") return BasisKind::hermite_function;
  if (name == "legendre") return BasisKind::legendre;
  throw ParseError("unknown basis '" + name + "' (expected hermite or legendre)");
}

json density_to_json(const SeriesDensityEstimate& e) {
  return json{{"i", e.variable},
              {"j", e.component},
              {"kappa", e.kappa},
              {"coefficients", vector_to_json(e.coefficients)},
              {"basis", basis_name(e.basis)}};
}

SeriesDensityEstimate density_from_json(const json& j) {
  require_keys(j, {"i", "j", "kappa", "coefficients", "basis"}, "density estimate");
  SeriesDensityEstimate e;
  e.variable = at(j, "i", "density estimate").get<Index>();
  e.component = at(j, "j", "density estimate").get<Index>();
  e.kappa = at(j, "kappa", "density estimate").get<Index>();
  e.coefficients = vector_from_json(at(j, "coefficients", "density estimate"), "coefficients");
  e.basis = basis_from_name(at(j, "basis", "density estimate").get<std::string>());
  if (e.coefficients.size() != e.kappa)
    throw ParseError("density estimate: kappa does not match the coefficient count");
  return e;
}

// --- model estimates --------------------------------------------------------------

json mixture_to_json(const DiscreteMixtureEstimate& e) {
  json factors = json::array();
  for (const auto& f : e.p) factors.push_back(matrix_to_json(f));
  return json{{"model", "discrete-mixture"},
              {"pi", vector_to_json(e.pi)},
              {"factors", std::move(factors)},
              {"label_keys", vector_to_json(e.label_keys)},
              {"residual", e.residual},
              {"rank_gap", e.rank_gap},
              {"clipped_mass", e.clipped_mass},
              {"warnings", e.warnings}};
}

json mixture_to_json(const ContinuousMixtureEstimate& e) {
  json densities = json::array();
  for (const auto& per_direction : e.densities)
    for (const auto& d : per_direction) densities.push_back(density_to_json(d));
  json factors = json::array();
  for (const auto& f : e.coefficient_factors) factors.push_back(matrix_to_json(f));
  return json{{"model", "continuous-mixture"},
              {"pi", vector_to_json(e.pi)},
              {"densities", std::move(densities)},
              {"coefficient_factors", std::move(factors)},
              {"label_keys", vector_to_json(e.label_keys)},
              {"warnings", e.warnings}};
}

json hmm_to_json(const HmmEstimate& e) {
  json out{{"model", "hmm"},
           {"transition", matrix_to_json(e.k)},
           {"pi", vector_to_json(e.pi)},
           {"a", matrix_to_json(e.a)},
           {"p", matrix_to_json(e.p)},
           {"b", matrix_to_json(e.b)},
           {"route_gap", e.route_gap},
           {"stationarity_gap", e.stationarity_gap},
           {"residual", e.residual},
           {"rank_gap", e.rank_gap},
           {"clipped_mass", e.clipped_mass},
           {"label_keys", vector_to_json(e.label_keys)},
           {"warnings", e.warnings}};
  if (!e.emissions.empty()) {
    json densities = json::array();
    for (const auto& d : e.emissions) densities.push_back(density_to_json(d));
    out["emissions"] = std::move(densities);
  }
  return out;
}

// --- simulation designs and reports -----------------------------------------------

std::string design_kind_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::gaussian_mixture: return "gaussian-mixture";
    case DesignKind::t_mixture: return "t-mixture";
    case DesignKind::hmm_skew_normal: return "hmm-skew-normal";
  }
  throw DomainError("design_kind_name: unknown kind");
}

json design_to_json(const Design& d) {
  json out{{"kind", design_kind_name(d.kind)}, {"q", d.q},       {"r", d.r},
           {"n", d.n},                         {"seed", d.seed}, {"pi", vector_to_json(d.pi)}};
  switch (d.kind) {
    case DesignKind::gaussian_mixture:
      out["means"] = matrix_to_json(d.means);
      break;
    case DesignKind::t_mixture:
      out["means"] = matrix_to_json(d.means);
      out["t_dof"] = d.t_dof;
      break;
    case DesignKind::hmm_skew_normal:
      out["transition"] = matrix_to_json(d.transition);
      out["skew_mu"] = vector_to_json(d.skew_mu);
      out["skew_alpha"] = vector_to_json(d.skew_alpha);
      break;
  }
  return out;
}

Design design_from_json(const json& j) {
  require_keys(j,
               {"kind", "q", "r", "n", "seed", "means", "pi", "t_dof", "transition", "skew_mu",
                "skew_alpha"},
               "design");
  const std::string kind = at(j, "kind", "design").get<std::string>();
  Design d;
  if (kind == "gaussian-mixture") {
    d = Design::gaussian();
  } else if (kind == "t-mixture") {
    d = Design::student_t();
  } else if (kind == "hmm-skew-normal") {
    d = Design::hidden_chain();
  } else {
    throw ParseError("design: unknown kind '" + kind +
                     "' (expected gaussian-mixture, t-mixture, or hmm-skew-normal; custom "
                     "parameters are given by overriding a family's fields)");
  }
  if (j.contains("q")) d.q = j["q"].get<Index>();
  if (j.contains("r")) d.r = j["r"].get<Index>();
  if (j.contains("n")) d.n = j["n"].get<Index>();
  if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("means")) d.means = matrix_from_json(j["means"], "design means");
  if (j.contains("pi")) d.pi = vector_from_json(j["pi"], "design pi");
  if (j.contains("t_dof")) d.t_dof = j["t_dof"].get<double>();
  if (j.contains("transition")) d.transition = matrix_from_json(j["transition"], "design transition");
  if (j.contains("skew_mu")) d.skew_mu = vector_from_json(j["skew_mu"], "design skew_mu");
  if (j.contains("skew_alpha"))
    d.skew_alpha = vector_from_json(j["skew_alpha"], "design skew_alpha");
  validate(d);
  return d;
}

json harness_report_to_json(const HarnessReport& rep) {
  json out{{"kind", rep.kind},
           {"design", design_to_json(rep.design)},
           {"reps", rep.reps},
           {"n", rep.n},
           {"master_seed", rep.master_seed},
           {"rep_seeds", index_vector_to_json(rep.rep_seeds)},
           {"failures", rep.failures},
           {"failure_messages", rep.failure_messages}};
  json cells = json::array();
  if (rep.kind == "rmise") {
    for (const auto& c : rep.rmise_cells)
      cells.push_back(json{{"pi1", c.pi1},
                           {"variable", c.variable},
                           {"component", c.component},
                           {"rmise", c.rmise},
                           {"mc_se", c.mc_se},
                           {"reps_ok", c.reps_ok}});
  } else {
    for (const auto& c : rep.coverage_cells)
      cells.push_back(json{{"component", c.component},
                           {"percentile", c.percentile},
                           {"y", c.y},
                           {"truth", c.truth},
                           {"coverage", c.coverage},
                           {"coverage_oracle", c.coverage_oracle},
                           {"mean_se", c.mean_se},
                           {"sd_point", c.sd_point},
                           {"mean_fhat", c.mean_fhat},
                           {"mean_infeasible", c.mean_infeasible},
                           {"reps_ok", c.reps_ok}});
  }
  out["cells"] = std::move(cells);
  return out;
}

// --- CSV ---------------------------------------------------------------------------

void write_sample_csv(std::ostream& os, const Eigen::Ref<const Eigen::MatrixXd>& y) {
  os << "# triad-csv v1 sample\n";
  for (Index m = 0; m < y.rows(); ++m) {
    for (Index i = 0; i < y.cols(); ++i) {
      if (i) os << ',';
      print_number(os, y(m, i));
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_sample_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t cols = 0;
  while (std::getline(is, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      while (end && *end == ' ') ++end;
      if (end == field.c_str() || (end && *end != '\0' && *end != '\r'))
        throw ParseError("sample csv: bad number '" + field + "'");
      row.push_back(v);
    }
    if (row.empty()) throw ParseError("sample csv: empty data line");
    if (cols == 0) cols = row.size();
    if (row.size() != cols) throw ParseError("sample csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("sample csv: no data rows");
  Eigen::MatrixXd y(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (Index m = 0; m < y.rows(); ++m)
    for (Index i = 0; i < y.cols(); ++i)
      y(m, i) = rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
  return y;
}

void write_rmise_csv(std::ostream& os, const HarnessReport& rep) {
  os << "# triad-csv v1 rmise\n";
  os << "pi1,variable,component,rmise,mc_se,reps_ok\n";
  for (const auto& c : rep.rmise_cells) {
    print_number(os, c.pi1);
    os << ',' << c.variable << ',' << c.component << ',';
    print_number(os, c.rmise);
    os << ',';
    print_number(os, c.mc_se);
    os << ',' << c.reps_ok << '\n';
  }
}

void write_coverage_csv(std::ostream& os, const HarnessReport& rep) {
  os << "# triad-csv v1 coverage\n";
  os << "component,percentile,y,truth,coverage,coverage_oracle,mean_se,sd_point,mean_fhat,"
        "mean_infeasible,reps_ok\n";
  for (const auto& c : rep.coverage_cells) {
    os << c.component << ',';
    print_number(os, c.percentile);
    os << ',';
    print_number(os, c.y);
    os << ',';
    print_number(os, c.truth);
    os << ',';
    print_number(os, c.coverage);
    os << ',';
    print_number(os, c.coverage_oracle);
    os << ',';
    print_number(os, c.mean_se);
    os << ',';
    print_number(os, c.sd_point);
    os << ',';
    print_number(os, c.mean_fhat);
    os << ',';
    print_number(os, c.mean_infeasible);
    os << ',' << c.reps_ok << '\n';
  }
}

}  // namespace triad
