#pragma once

#include <iosfwd>

namespace dla {

// Parses argv and runs one subcommand (gradcheck | bench | fit).
// Returns the process exit code: 0 on success, 1 when a numeric check or a
// fit fails, 2 on usage or input errors.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace dla
