#include "towerlimits/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "towerlimits/errors.hpp"
#include "towerlimits/numerics.hpp"

namespace towerlimits {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

template <class T>
T to_number(const Config::Entry& e, std::string_view text, const std::string& key) {
    T v{};
    const auto t = trim(text);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size())
        throw ParseError("'" + key + "': expected a number, got '" + std::string(t) + "'", e.line, e.column);
    return v;
}

}  // namespace

Config Config::parse(std::string_view text) {
    Config cfg;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string_view::npos) raw = raw.substr(0, hash);
        const auto line = trim(raw);
        if (line.empty()) continue;
        const int indent = static_cast<int>(raw.find_first_not_of(" \t")) + 1;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("section header must end with ']'", line_no, indent);
            const auto name = trim(line.substr(1, line.size() - 2));
            if (!valid_name(name)) throw ParseError("bad section name '" + std::string(name) + "'", line_no, indent + 1);
            section = std::string(name);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no, indent);
        const auto key = trim(line.substr(0, eq));
        if (!valid_name(key)) throw ParseError("bad key '" + std::string(key) + "'", line_no, indent);
        const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
        if (cfg.entries_.count(full)) throw ParseError("duplicate key '" + full + "'", line_no, indent);
        const auto value = trim(line.substr(eq + 1));
        auto vstart = raw.find('=') + 1;
        while (vstart < raw.size() && (raw[vstart] == ' ' || raw[vstart] == '\t')) ++vstart;
        const int col = static_cast<int>(vstart) + 1;
        cfg.entries_[full] = Entry{std::string(value), line_no, col};
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const Config::Entry& Config::entry(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ParseError("missing required key '" + key + "'");
    return it->second;
}

std::string Config::text(const std::string& key) const { return entry(key).value; }

std::string Config::text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
}

double Config::number(const std::string& key) const {
    const auto& e = entry(key);
    return to_number<double>(e, e.value, key);
}

double Config::number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

long Config::integer(const std::string& key) const {
    const auto& e = entry(key);
    return to_number<long>(e, e.value, key);
}

long Config::integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }

bool Config::flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& e = entry(key);
    if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
    if (e.value == "false" || e.value == "no" || e.value == "0") return false;
    throw ParseError("'" + key + "': expected true or false, got '" + e.value + "'", e.line, e.column);
}

std::vector<double> Config::numbers(const std::string& key) const {
    const auto& e = entry(key);
    std::vector<std::string_view> parts;
    const std::string_view v = e.value;
    const char sep = v.find(',') != std::string_view::npos ? ',' : ':';
    for (std::size_t p = 0;;) {
        const auto q = v.find(sep, p);
        parts.push_back(trim(v.substr(p, q == std::string_view::npos ? std::string_view::npos : q - p)));
        if (q == std::string_view::npos) break;
        p = q + 1;
    }
    std::vector<double> out;
    if (sep == ',' || parts.size() == 1) {
        for (auto p : parts) out.push_back(to_number<double>(e, p, key));
        return out;
    }
    if (parts.size() == 3 && parts[0] == "pow2") {
        const long a = to_number<long>(e, parts[1], key), b = to_number<long>(e, parts[2], key);
        if (a < 0 || b < a || b > 62) throw ParseError("'" + key + "': bad pow2 range", e.line, e.column);
        for (long k = a; k <= b; ++k) out.push_back(std::ldexp(1.0, static_cast<int>(k)));
        return out;
    }
    if (parts.size() == 3) {
        const double lo = to_number<double>(e, parts[0], key), hi = to_number<double>(e, parts[1], key);
        const long count = to_number<long>(e, parts[2], key);
        if (count < 1 || (count == 1 && lo != hi)) throw ParseError("'" + key + "': bad range count", e.line, e.column);
        for (long k = 0; k < count; ++k) out.push_back(count == 1 ? lo : lo + (hi - lo) * k / (count - 1));
        return out;
    }
    throw ParseError("'" + key + "': expected a list, lo:hi:count or pow2:a:b", e.line, e.column);
}

void Config::require_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, e] : entries_)
        if (!allowed.count(key)) throw ParseError("unknown key '" + key + "'", e.line, 1);
}

std::uint64_t Config::hash() const {
    std::string canon;
    for (const auto& [key, e] : entries_) canon += key + "=" + e.value + "\n";
    return fnv1a64(canon);
}

std::string Config::hash_hex() const { return hex64(hash()); }

void Config::set(const std::string& key, std::string value) { entries_[key] = Entry{std::move(value), 0, 0}; }

}  // namespace towerlimits
