#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace agg {

/// Flat key=value configuration ('#' starts a comment). Keys keep their
/// insertion order for reproducible serialization; consumers must drain
/// every key (take_* removes it) and then call reject_unknown(), so a typo
/// in a config file fails loudly instead of silently using a default.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, std::int64_t value);

    bool has(const std::string& key) const;

    std::string take_string(const std::string& key, const std::string& fallback);
    double take_double(const std::string& key, double fallback);
    std::int64_t take_int(const std::string& key, std::int64_t fallback);
    std::uint64_t take_uint(const std::string& key, std::uint64_t fallback);
    /// Comma-separated list of numbers.
    std::vector<double> take_double_list(const std::string& key, const std::vector<double>& fallback);
    std::vector<std::int64_t> take_int_list(const std::string& key, const std::vector<std::int64_t>& fallback);

    /// Raises a config error naming every unconsumed key.
    void reject_unknown() const;

    std::string serialize() const;

private:
    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
};

} // namespace agg
