#pragma once

#include <string>
#include <vector>

namespace shear::cli {

// The whole command-line surface behind a callable seam: `args` excludes
// the program name. Returns the process exit status (0 ok, 1 runtime
// failure, 2 usage error). Tests drive subcommands through this directly.
int run_cli(const std::vector<std::string>& args);

}  // namespace shear::cli
