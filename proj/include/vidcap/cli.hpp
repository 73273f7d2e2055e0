#pragma once

#include <string>
#include <vector>

namespace vidcap {

/// Entry point of the `vidcap` tool. Returns 0 on success, 1 on a runtime or
/// data error, 2 on a usage error. args[0] is the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace vidcap
