#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ppseg/errors.hpp"

namespace ppseg {

// Flat UTF-8 key=value config with section prefixes (proj., sa1., fp1.,
// train., model.). '#' starts a comment; blank lines are skipped.
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const; // throws ConfigError
    std::string get_or(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int_or(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    std::vector<int64_t> get_int_list(const std::string& key) const; // comma-separated

    void set(const std::string& key, const std::string& value);
    // Keys in lexicographic order, one "key=value" per line.
    std::string serialize() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    // Keys never read through a getter; used to reject typos.
    std::vector<std::string> unused_keys() const;

private:
    std::map<std::string, std::string> entries_;
    mutable std::map<std::string, bool> touched_;
};

} // namespace ppseg
