#pragma once

namespace fqeval::cli {

/// Full command-line frontend. Exit codes: 0 success, 1 usage, 2 malformed
/// config, 3 missing file, 4 solver/numeric failure, 5 study/inference
/// failure.
int run(int argc, const char* const* argv);

}  // namespace fqeval::cli
