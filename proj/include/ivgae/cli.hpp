#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ivgae {

inline constexpr const char* kVersion = "0.1.0";

/// Parses "1000..1009" (inclusive) or a comma list "3,5,8".
std::vector<std::uint64_t> parse_range(const std::string& text);

/// 64-bit FNV-1a over the bytes of the given files, in order.
std::uint64_t fingerprint_files(const std::vector<std::string>& paths);

/// Entry point of the ivgae tool. `args` excludes the program name. Returns
/// 0 on success, 2 on usage errors, 1 on runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ivgae
