#include "plenopress/keyvalue.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "plenopress/error.hpp"

namespace plenopress {

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
    KeyValueFile kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        auto key = trim(line.substr(0, eq));
        if (key.empty())
            throw ContractError(origin + ":" + std::to_string(line_no) + ": empty key");
        kv.set(key, trim(line.substr(eq + 1)));
    }
    return kv;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file: " + path.string());
    out << to_string();
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::pair<std::string, std::string>> KeyValueFile::entries() const {
    std::vector<std::pair<std::size_t, std::string>> keys;
    keys.reserve(order_.size());
    for (const auto& [key, index] : order_) keys.emplace_back(index, key);
    std::sort(keys.begin(), keys.end());
    std::vector<std::pair<std::string, std::string>> result;
    result.reserve(keys.size());
    for (const auto& [index, key] : keys) result.emplace_back(key, values_.at(key));
    return result;
}

std::string KeyValueFile::to_string() const {
    std::ostringstream out;
    for (const auto& [key, value] : entries()) out << key << " = " << value << '\n';
    return out.str();
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
    if (!order_.count(key)) order_[key] = order_.size();
    values_[key] = value;
}

void KeyValueFile::set(const std::string& key, double value) {
    std::ostringstream s;
    s << std::setprecision(17) << value;
    set(key, s.str());
}

void KeyValueFile::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool KeyValueFile::contains(const std::string& key) const { return values_.count(key) != 0; }

std::optional<std::string> KeyValueFile::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueFile::get_string(const std::string& key) const {
    auto value = find(key);
    if (!value) throw ContractError(origin_ + ": missing key '" + key + "'");
    return *value;
}

double KeyValueFile::get_double(const std::string& key) const {
    auto text = get_string(key);
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size())
        throw ContractError(origin_ + ": key '" + key + "' is not a number: " + text);
    return value;
}

long long KeyValueFile::get_int(const std::string& key) const {
    auto text = get_string(key);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ContractError(origin_ + ": key '" + key + "' is not an integer: " + text);
    return value;
}

double KeyValueFile::get_double_or(const std::string& key, double fallback) const {
    return contains(key) ? get_double(key) : fallback;
}

long long KeyValueFile::get_int_or(const std::string& key, long long fallback) const {
    return contains(key) ? get_int(key) : fallback;
}

}  // namespace plenopress
