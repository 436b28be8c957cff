#pragma once

// Internal text helpers shared by the csv/line-record writers. Not part of
// the public headers.

#include <charconv>
#include <string>
#include <system_error>

namespace bodyfit::detail {

// Shortest decimal form that parses back to the same double.
inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    const auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

}  // namespace bodyfit::detail
