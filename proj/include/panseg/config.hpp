#ifndef PANSEG_CONFIG_HPP
#define PANSEG_CONFIG_HPP

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "panseg/common.hpp"

namespace panseg {

/// Flat configuration: dotted keys to string values, kept sorted so the
/// serialized form is canonical.
using KvMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(uint8_t(s[a]))) ++a;
    while (b > a && std::isspace(uint8_t(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

/// Parse `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; later occurrences of a key override earlier ones.
inline KvMap parse_kv_text(const std::string& text, const std::string& what = "config") {
    KvMap kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        require(eq != std::string::npos, ErrorKind::format, what, ":", lineno,
                ": expected \"key = value\", got \"", t, "\"");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string val = detail::trim(t.substr(eq + 1));
        require(!key.empty(), ErrorKind::format, what, ":", lineno, ": empty key");
        kv[key] = val;
    }
    return kv;
}

inline KvMap load_kv_file(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), ErrorKind::io, "cannot open config file ", path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str(), path);
}

/// Canonical serialization: sorted keys, one `key = value` per line.
inline std::string kv_text(const KvMap& kv) {
    std::ostringstream out;
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
    return out.str();
}

// ---- typed accessors -----------------------------------------------------------

inline bool kv_has(const KvMap& kv, const std::string& key) { return kv.count(key) != 0; }

inline std::string kv_get(const KvMap& kv, const std::string& key, const std::string& dflt) {
    const auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
}

inline int64_t kv_get_int(const KvMap& kv, const std::string& key, int64_t dflt) {
    const auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
        size_t used = 0;
        const int64_t v = std::stoll(it->second, &used);
        require(used == it->second.size(), ErrorKind::format, "");
        return v;
    } catch (...) {
        fail(ErrorKind::format, "config key ", key, ": \"", it->second, "\" is not an integer");
    }
}

inline uint64_t kv_get_u64(const KvMap& kv, const std::string& key, uint64_t dflt) {
    const auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
        size_t used = 0;
        const uint64_t v = std::stoull(it->second, &used);
        require(used == it->second.size(), ErrorKind::format, "");
        return v;
    } catch (...) {
        fail(ErrorKind::format, "config key ", key, ": \"", it->second,
             "\" is not a non-negative integer");
    }
}

inline double kv_get_double(const KvMap& kv, const std::string& key, double dflt) {
    const auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
        size_t used = 0;
        const double v = std::stod(it->second, &used);
        require(used == it->second.size(), ErrorKind::format, "");
        return v;
    } catch (...) {
        fail(ErrorKind::format, "config key ", key, ": \"", it->second, "\" is not a number");
    }
}

inline bool kv_get_bool(const KvMap& kv, const std::string& key, bool dflt) {
    const auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    fail(ErrorKind::format, "config key ", key, ": \"", it->second,
         "\" is not a boolean (use true/false)");
}

inline std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace panseg

#endif  // PANSEG_CONFIG_HPP
