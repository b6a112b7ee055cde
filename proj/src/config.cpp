#include "ppseg/config.hpp"

#include <fstream>
#include <sstream>

namespace ppseg {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
    ConfigFile cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        cfg.entries_[key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return parse_string(os.str());
}

bool ConfigFile::has(const std::string& key) const { return entries_.count(key) > 0; }

const std::string& ConfigFile::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("config: missing key '" + key + "'");
    touched_[key] = true;
    return it->second;
}

std::string ConfigFile::get_or(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    return get(key);
}

int64_t ConfigFile::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: '" + v + "'");
    }
}

int64_t ConfigFile::get_int_or(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double ConfigFile::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: '" + v + "'");
    }
}

double ConfigFile::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::vector<int64_t> ConfigFile::get_int_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<int64_t> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        try {
            out.push_back(std::stoll(t));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has a non-integer item '" + t + "'");
        }
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
}

void ConfigFile::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string ConfigFile::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << "=" << v << "\n";
    return os.str();
}

std::vector<std::string> ConfigFile::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) {
        (void)v;
        if (!touched_.count(k)) out.push_back(k);
    }
    return out;
}

} // namespace ppseg
