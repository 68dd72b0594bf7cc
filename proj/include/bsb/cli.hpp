#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bsb::cli {

// Exit codes: 0 success, 1 data error, 2 usage error. JSON results go to out,
// structured errors to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

} // namespace bsb::cli
