#pragma once

#include <iosfwd>

namespace lgc3d {

// Full command-line surface; returns the process exit code (0 success,
// 2 usage, 1 runtime failure). Streams are injectable for in-process tests.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lgc3d
