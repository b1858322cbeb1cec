#pragma once

#include <ostream>

namespace batlas {

// Exit codes: 0 success, 1 usage error, 2 data or format error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace batlas
