#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace neptune::cli {

// Stable exit codes for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point shared by the executable and the tests. args[0] is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Levenshtein distance, used to suggest labels.
std::size_t edit_distance(const std::string& a, const std::string& b);

}  // namespace neptune::cli
