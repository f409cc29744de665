#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace covshare::cli {

enum ExitCode : int { ok = 0, usage = 2, data_error = 3, numerical_error = 4 };

/// Runs one command line (args excludes the program name). Messages go to
/// `out` / `err`; all artifacts go under the command's --out directory.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace covshare::cli
