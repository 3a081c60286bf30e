#pragma once

// JSON and CSV adapters for the library's value types.
//
// Conventions: multiway arrays are {dims, values} with values in storage
// (axis-major) order; matrices are nested arrays, row-major; non-finite
// numbers serialize to JSON null and read back as NaN.  CSV files carry a
// versioned "# triad-csv v1 <schema>" comment as their first line, '#' lines
// and blank lines are ignored on input, and numbers are written with 17
// significant digits so a read-back is exact.

#include <iosfwd>
#include <json.hpp>
#include <string>

#include "triad/decompose.hpp"
#include "triad/density.hpp"
#include "triad/jointdiag.hpp"
#include "triad/models.hpp"
#include "triad/multiway.hpp"
#include "triad/simulate.hpp"

namespace triad {

using json = nlohmann::json;

// --- building blocks ----------------------------------------------------------

json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what);
json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v);
Eigen::VectorXd vector_from_json(const json& j, const std::string& what);

// Throws ParseError if `j` is not an object or holds a key outside `allowed`.
void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& what);

// --- multiway arrays ------------------------------------------------------------

json array_to_json(const MultiwayArrayXd& x);
MultiwayArrayXd array_from_json(const json& j);

// --- joint diagonalization ------------------------------------------------------

json jd_problem_to_json(const JointDiagProblemXd& p);
JointDiagProblemXd jd_problem_from_json(const json& j);
json jd_result_to_json(const JointDiagResultXd& r);

// --- decomposition ----------------------------------------------------------------

json decompose_report_to_json(const DecomposeReportXd& rep);

// --- density estimates ------------------------------------------------------------

std::string basis_name(BasisKind kind);
BasisKind basis_from_name(const std::string& name);
json density_to_json(const SeriesDensityEstimate& e);
SeriesDensityEstimate density_from_json(const json& j);

// --- model estimates --------------------------------------------------------------

json mixture_to_json(const DiscreteMixtureEstimate& e);
json mixture_to_json(const ContinuousMixtureEstimate& e);
json hmm_to_json(const HmmEstimate& e);

// --- simulation designs and reports -----------------------------------------------

std::string design_kind_name(DesignKind kind);
json design_to_json(const Design& d);
// Starts from the named preset and overrides any parameter present in `j`;
// the result is validated.
Design design_from_json(const json& j);

json harness_report_to_json(const HarnessReport& rep);

// --- CSV ---------------------------------------------------------------------------

void write_sample_csv(std::ostream& os, const Eigen::Ref<const Eigen::MatrixXd>& y);
Eigen::MatrixXd read_sample_csv(std::istream& is);

void write_rmise_csv(std::ostream& os, const HarnessReport& rep);
void write_coverage_csv(std::ostream& os, const HarnessReport& rep);

}  // namespace triad
