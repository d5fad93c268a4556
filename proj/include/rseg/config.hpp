#pragma once

#include <map>
#include <string>

namespace rseg {

// Plain-text configuration: [section] headers, key = value lines, # comments.
class IniConfig {
public:
    static IniConfig parse(const std::string& text);
    static IniConfig load(const std::string& path);
    void save(const std::string& path) const;
    std::string serialize() const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace rseg
