#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aastereo::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInternalFailure = 1,
  kUsageError = 2,
  kEmptyEvaluation = 3,
};

// Runs one command line (without the program name). Verbs: train, infer,
// eval, gradcheck, complexity, solve-xscale, gen-data. `--from-manifest FILE`
// replays the argument list recorded in a run manifest.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aastereo::cli
