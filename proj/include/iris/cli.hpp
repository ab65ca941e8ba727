#ifndef IRIS_CLI_HPP_
#define IRIS_CLI_HPP_

#include <string>
#include <vector>

namespace iris {

// Entry point of the command-line tool. Returns 0 on success, 1 on usage
// errors, 2 on runtime failures.
int cli_run(int argc, const char* const* argv);
int cli_run(const std::vector<std::string>& args);  // without argv[0]

}  // namespace iris

#endif  // IRIS_CLI_HPP_
