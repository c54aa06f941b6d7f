// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

#include "macaw/error.hpp"

namespace macaw::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kRuntime = 4 };

/// Exit code for an error raised by the library.
int exit_code_for(Errc code) noexcept;

/// Runs one subcommand. Reports go to `out`, diagnostics to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace macaw::cli
