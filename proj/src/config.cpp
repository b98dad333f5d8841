#include "hypertrain/config.hpp"

#include "hypertrain/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hypertrain {

namespace {

std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos)
        return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool valid_key(const std::string& key)
{
    if (key.empty() || key.front() == '.' || key.back() == '.')
        return false;
    return std::all_of(key.begin(), key.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

} // namespace

Config Config::parse(const std::string& text, const std::string& origin)
{
    Config out;
    out.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string where = origin + ":" + std::to_string(number);
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(where + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!section.empty() && !valid_key(section))
                throw ConfigError(where + ": invalid section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        if (!valid_key(key))
            throw ConfigError(where + ": invalid key '" + key + "'");
        if (!section.empty())
            key = section + "." + key;
        if (out.entries_.count(key))
            throw ConfigError(where + ": duplicate key '" + key + "' (first set at " + out.entries_[key].where + ")");
        out.entries_[key] = Entry{trim(line.substr(eq + 1)), where};
    }
    return out;
}

Config Config::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream text;
    text << in.rdbuf();
    Config out = parse(text.str(), path);
    out.base_dir_ = std::filesystem::path(path).parent_path().string();
    return out;
}

void Config::set(const std::string& key, const std::string& value)
{
    if (!valid_key(key))
        throw ConfigError("invalid key '" + key + "'");
    entries_[key] = Entry{value, "override"};
}

bool Config::has(const std::string& key) const { return entries_.count(key) != 0; }

const Config::Entry* Config::find(const std::string& key) const
{
    const auto it = entries_.find(key);
    if (it == entries_.end())
        return nullptr;
    it->second.used = true;
    return &it->second;
}

void Config::bad_value(const std::string& key, const Entry& e, const std::string& expected) const
{
    throw ConfigError(e.where + ": " + key + " = '" + e.value + "' is not " + expected);
}

std::optional<std::string> Config::raw(const std::string& key) const
{
    if (const Entry* e = find(key))
        return e->value;
    return std::nullopt;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    const Entry* e = find(key);
    return e ? e->value : fallback;
}

double Config::get_double(const std::string& key, double fallback) const
{
    const Entry* e = find(key);
    if (!e)
        return fallback;
    // strtod accepts the exponent forms from_chars rejects on some libraries
    const char* begin = e->value.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (e->value.empty() || end != begin + e->value.size() || errno == ERANGE || !std::isfinite(v))
        bad_value(key, *e, "a finite number");
    return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const
{
    const Entry* e = find(key);
    if (!e)
        return fallback;
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (ec != std::errc() || ptr != e->value.data() + e->value.size() || e->value.empty())
        bad_value(key, *e, "a non-negative integer");
    return v;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const
{
    return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const
{
    const Entry* e = find(key);
    if (!e)
        return fallback;
    if (e->value == "true" || e->value == "1" || e->value == "yes")
        return true;
    if (e->value == "false" || e->value == "0" || e->value == "no")
        return false;
    bad_value(key, *e, "a boolean (true/false)");
}

std::vector<std::size_t> Config::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const
{
    const Entry* e = find(key);
    if (!e)
        return fallback;
    std::vector<std::size_t> out;
    if (e->value.empty())
        return out;
    std::stringstream in(e->value);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
            bad_value(key, *e, "a comma-separated list of non-negative integers");
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> Config::unused() const
{
    std::vector<std::string> out;
    for (const auto& [key, e] : entries_)
        if (!e.used)
            out.push_back(key);
    return out;
}

void Config::reject_unused() const
{
    const auto keys = unused();
    if (keys.empty())
        return;
    std::string msg = "unknown config key";
    msg += keys.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < keys.size(); ++i)
        msg += (i ? ", " : "") + keys[i] + " (" + entries_.at(keys[i]).where + ")";
    throw ConfigError(msg);
}

std::string Config::resolve_path(const std::string& path) const
{
    if (path.empty() || std::filesystem::path(path).is_absolute() || base_dir_.empty())
        return path;
    return (std::filesystem::path(base_dir_) / path).lexically_normal().string();
}

} // namespace hypertrain
