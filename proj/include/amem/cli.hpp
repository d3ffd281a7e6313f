#ifndef AMEM_CLI_HPP
#define AMEM_CLI_HPP

namespace amem::cli {

enum ExitCode : int {
  ok = 0,
  usage = 1,
  infeasible = 2,
  non_convergence = 3,
  config_error = 4,
};

/// Entry point of the `amem` tool; returns the process exit code.
int run(int argc, char** argv);

}  // namespace amem::cli

#endif  // AMEM_CLI_HPP
