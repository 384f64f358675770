#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmfa::cli {

/// Runs one command line (args[0] is the program name). Returns 0 on success,
/// 2 on usage errors and 1 on runtime failures.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

int run(int argc, char **argv);

} // namespace dmfa::cli
