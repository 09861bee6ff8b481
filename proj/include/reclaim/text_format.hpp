#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace reclaim {

// Shortest round-trip decimal form of a double; keeps emitted TSV/CSV/JSON
// byte-stable and exactly re-parseable.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, bool& ok) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    ok = (res.ec == std::errc()) && res.ptr == s.data() + s.size();
    return v;
}

}  // namespace reclaim
