#pragma once

#include <string>
#include <string_view>

namespace reclaim {

// SHA-256 hex digest of a byte string (translation cache keys, provenance).
std::string sha256_hex(std::string_view data);

// SHA-256 hex digest of a file's contents. Throws DataError if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace reclaim
