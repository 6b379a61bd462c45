#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace talforge {

/// Entry point of the `talforge` tool. args excludes the program name.
/// Returns 0 on success, 1 on a runtime or validation failure and 2 on a
/// usage error (unknown subcommand or flag).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string cli_usage();

}  // namespace talforge
