#pragma once

#include <iosfwd>

namespace dacrs {

/// Entry point behind the `dacrs` tool. Returns 0 on success, 1 on a usage
/// error and 2 on a runtime error.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dacrs
