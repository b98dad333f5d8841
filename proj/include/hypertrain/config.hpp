#pragma once

// Flat key-value configuration text.
//
//   # comment                 (also after a value)
//   seed = 3
//   [hypernet]                later keys are read as hypernet.<key>
//   arch = mlp
//   optim.alpha = 1e-4        dotted keys work in any section context
//
// Keys are unique. Lookups mark keys as used so callers can reject typos.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hypertrain {

class Config {
public:
    Config() = default;

    /// Throws ConfigError naming `origin` and the line on malformed input.
    static Config parse(const std::string& text, const std::string& origin = "<config>");
    static Config load(const std::string& path);

    /// Adds or replaces a key, e.g. from a command-line override.
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::optional<std::string> raw(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma-separated sizes; an empty value gives an empty list.
    std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

    /// Keys never looked up, in sorted order.
    std::vector<std::string> unused() const;
    /// Throws ConfigError listing unused keys.
    void reject_unused() const;

    const std::string& origin() const { return origin_; }
    /// Directory of the loaded file ("" for parsed text); relative paths resolve against it.
    const std::string& base_dir() const { return base_dir_; }
    std::string resolve_path(const std::string& path) const;

private:
    struct Entry {
        std::string value;
        std::string where; ///< "origin:line" or "override"
        mutable bool used = false;
    };

    const Entry* find(const std::string& key) const;
    [[noreturn]] void bad_value(const std::string& key, const Entry& e, const std::string& expected) const;

    std::map<std::string, Entry> entries_;
    std::string origin_ = "<config>";
    std::string base_dir_;
};

} // namespace hypertrain
