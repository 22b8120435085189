#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kinship::cli {

/// Runs the `kinship` command line. `args` excludes the program name.
/// Returns 0 on success, 1 on a runtime error (reported on `err` as one
/// line "error: <kind>: <message>") and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kinship::cli
