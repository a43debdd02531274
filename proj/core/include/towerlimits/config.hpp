#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace towerlimits {

// Flat key = value text with [section] headers and '#' comments. Keys are addressed as
// "section.key" ("key" before the first header). Values keep their position for error messages.
class Config {
public:
    struct Entry {
        std::string value;
        int line = 0;
        int column = 0;  // column of the value
    };

    static Config parse(std::string_view text);
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::string text(const std::string& key) const;
    std::string text(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key) const;
    double number(const std::string& key, double fallback) const;
    long integer(const std::string& key) const;
    long integer(const std::string& key, long fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    // Comma-separated numbers, "lo:hi:count" (evenly spaced, inclusive) or "pow2:a:b" (2^a .. 2^b).
    std::vector<double> numbers(const std::string& key) const;

    // Throws ParseError at the first key outside `allowed`.
    void require_known(const std::set<std::string>& allowed) const;

    // Hash of the canonical key=value listing (sorted keys, trimmed values), so comments and
    // layout do not change it.
    std::uint64_t hash() const;
    std::string hash_hex() const;

    void set(const std::string& key, std::string value);

private:
    const Entry& entry(const std::string& key) const;
    std::map<std::string, Entry> entries_;
};

}  // namespace towerlimits
