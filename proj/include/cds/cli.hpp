#ifndef CDS_CLI_HPP
#define CDS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace cds {

/// Runs the command line `args` (without the program name). Returns 0 on
/// success, 1 on usage, validation or format errors, 2 on internal errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cds

#endif  // CDS_CLI_HPP
