#pragma once

#include <string>
#include <vector>

namespace synernet {

// Subcommands: synth, train, eval, ablate, gradcheck, report.
// Exit codes: 0 success, 2 usage error, 3 failed invariant, 1 other error.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, char** argv);

}  // namespace synernet
