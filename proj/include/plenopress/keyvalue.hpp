#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace plenopress {

/// Flat `key = value` text file. Blank lines and `#` comments are ignored.
/// Keys keep insertion order on write so emitted files diff cleanly.
class KeyValueFile {
public:
    static KeyValueFile load(const std::filesystem::path& path);
    static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");

    void save(const std::filesystem::path& path) const;
    std::string to_string() const;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long long value);

    /// Entries in insertion order.
    std::vector<std::pair<std::string, std::string>> entries() const;

    bool contains(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    long long get_int_or(const std::string& key, long long fallback) const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
    std::map<std::string, std::size_t> order_;
};

}  // namespace plenopress
