#pragma once

namespace pirsurf {

// Subcommand dispatch for the pirsurf binary. Exit codes: 0 success,
// 1 runtime failure, 2 usage error.
int dispatch(int argc, const char* const* argv);

}  // namespace pirsurf
