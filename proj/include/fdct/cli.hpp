#pragma once

#include <string>
#include <vector>

namespace fdct::cli {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kRunManifest = "run_manifest.json";

/// Runs one command line; args[0] is the program name. Returns 0 on success,
/// 2 on usage errors and 1 on runtime failures.
int run(const std::vector<std::string>& args);

}  // namespace fdct::cli
