#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cubesim {

/// Relative path -> FNV-1a 64 hash of the file contents, for every regular file under `dir`.
std::map<std::string, std::uint64_t> session_digest(const std::filesystem::path& dir);

/// Relative paths that differ between two session directories (missing on either side counts).
std::vector<std::string> session_diff(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace cubesim
