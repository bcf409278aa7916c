#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fkdiff::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,  ///< bad flags, unreadable file, bad identification config
    kParse = 2,  ///< malformed or structurally invalid URDF / configuration file
    kChain = 3,  ///< unknown link, end not below base, target not on chain
    kShape = 4,  ///< configuration width mismatch or non-finite values
    kBudget = 5, ///< identification ran out of steps (document still written)
};

/// Configurations from CSV (one per line, optional header) or a JSON array of
/// arrays. Returns them flattened, configuration-major; `count` receives the
/// number of rows. Throws ParseError on malformed text, ShapeError on a row
/// whose width is not `m`, NumericError on non-finite values.
std::vector<double> parse_configs(std::string_view text, bool json, std::size_t m, std::size_t& count);

/// Entry point of the fkdiff tool. Documents go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience for tests: argv[0] is supplied.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fkdiff::cli
