#pragma once

namespace triad {

// Library and file-format version strings.  The CSV format tag is written as
// a comment on the first line of every CSV the tools emit, so downstream
// readers can detect schema changes.
const char* version();
const char* csv_format_tag();

}  // namespace triad
