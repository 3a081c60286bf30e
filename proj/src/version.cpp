#include "triad/version.hpp"

namespace triad {

const char* version() { return "0.1.0"; }
const char* csv_format_tag() { return "triad-csv v1"; }

}  // namespace triad
