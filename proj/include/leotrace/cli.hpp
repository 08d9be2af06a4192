#ifndef LEOTRACE_CLI_HPP
#define LEOTRACE_CLI_HPP

namespace leotrace::cli {

// Parses argv and runs one workflow stage. Returns the process exit code:
// 0 success, 2 configuration error, 3 validation failure, 4 runtime error.
int run(int argc, char** argv);

} // namespace leotrace::cli

#endif
