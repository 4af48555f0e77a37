#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace egmsynth::cli {

/// Parses and runs one subcommand. Returns 0 on success, 1 on runtime errors
/// and 2 on usage errors; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace egmsynth::cli
