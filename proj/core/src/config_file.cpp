#include "agg/config_file.hpp"

#include "agg/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace agg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        raise(ErrorKind::Config, "config key '" + key + "': cannot parse number '" + s + "'");
    }
}

std::int64_t to_int(const std::string& key, const std::string& s) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::int64_t>(v);
    } catch (const std::exception&) {
        raise(ErrorKind::Config, "config key '" + key + "': cannot parse integer '" + s + "'");
    }
}

} // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string s = trim(line);
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            raise(ErrorKind::Config, "config line " + std::to_string(lineno) + " is not key=value: " + s);
        cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
}

void KeyValueConfig::set_double(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, buf);
}

void KeyValueConfig::set_int(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValueConfig::take_string(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    values_.erase(it);
    order_.erase(std::remove(order_.begin(), order_.end(), key), order_.end());
    return v;
}

double KeyValueConfig::take_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return to_double(key, take_string(key, ""));
}

std::int64_t KeyValueConfig::take_int(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    return to_int(key, take_string(key, ""));
}

std::uint64_t KeyValueConfig::take_uint(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    return static_cast<std::uint64_t>(to_int(key, take_string(key, "")));
}

std::vector<double> KeyValueConfig::take_double_list(const std::string& key, const std::vector<double>& fallback) {
    if (!has(key)) return fallback;
    std::string raw = take_string(key, "");
    std::vector<double> out;
    std::string cur;
    for (char c : raw + ",") {
        if (c == ',') {
            std::string item = trim(cur);
            if (!item.empty()) out.push_back(to_double(key, item));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

std::vector<std::int64_t> KeyValueConfig::take_int_list(const std::string& key,
                                                        const std::vector<std::int64_t>& fallback) {
    if (!has(key)) return fallback;
    std::string raw = take_string(key, "");
    std::vector<std::int64_t> out;
    std::string cur;
    for (char c : raw + ",") {
        if (c == ',') {
            std::string item = trim(cur);
            if (!item.empty()) out.push_back(to_int(key, item));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}

void KeyValueConfig::reject_unknown() const {
    if (values_.empty()) return;
    std::string keys;
    for (const auto& [k, v] : values_) keys += (keys.empty() ? "" : ", ") + k;
    raise(ErrorKind::Config, "unknown config keys: " + keys);
}

std::string KeyValueConfig::serialize() const {
    std::ostringstream os;
    for (const auto& k : order_) os << k << " = " << values_.at(k) << '\n';
    return os.str();
}

} // namespace agg
