#ifndef PMFS_CLI_HPP
#define PMFS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace pmfs::cli {

/// Runs one command (args exclude the program name). Subcommands: gen-rd,
/// ingest-air, train, predict, evaluate. Returns 0 on success, 1 on runtime
/// failure (single-line cause on err), 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace pmfs::cli

#endif
