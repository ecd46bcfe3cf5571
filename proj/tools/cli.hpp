// cli.hpp - the chainprof command-line surface as a callable function.
//
// Exit codes: 0 ok, 1 spec or semantic error, 2 I/O error, 3 backend failure.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace chainprof::cli {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chainprof::cli
