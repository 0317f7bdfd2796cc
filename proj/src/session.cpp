#include <fstream>
#include <iterator>
#include <stdexcept>

#include "cubesim/session.hpp"

namespace cubesim {

namespace fs = std::filesystem;

namespace {
std::uint64_t fnv1a(std::istream& in) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}
}  // namespace

std::map<std::string, std::uint64_t> session_digest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).generic_string()] = fnv1a(in);
  }
  return out;
}

std::vector<std::string> session_diff(const fs::path& a, const fs::path& b) {
  const auto da = session_digest(a);
  const auto db = session_digest(b);
  std::vector<std::string> out;
  for (const auto& [k, v] : da) {
    const auto it = db.find(k);
    if (it == db.end() || it->second != v) out.push_back(k);
  }
  for (const auto& [k, v] : db)
    if (!da.count(k)) out.push_back(k);
  return out;
}

}  // namespace cubesim
