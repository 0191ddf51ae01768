#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace orseq {

/// Entry point of the `orseq` tool. Returns the process exit code; messages
/// go to `out` / `err` rather than the process streams so tests can call it.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace orseq
