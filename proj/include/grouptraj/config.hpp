#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouptraj/text_io.hpp"

namespace grouptraj {

// key=value config files ('#' comments) and the resolved-config record every
// command echoes and persists next to its outputs. Precedence is handled by
// the CLI: flags > config file > built-in defaults.

class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& path) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::string trimmed;
            for (char c : line)
                if (c != '\r') trimmed.push_back(c);
            const auto first = trimmed.find_first_not_of(" \t");
            if (first == std::string::npos) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                            ": expected key=value");
            auto strip = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string key = strip(trimmed.substr(0, eq));
            const std::string value = strip(trimmed.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        return parse(read_text_file(path), path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::invalid_argument("config: missing key '" + key + "'");
        return it->second;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    void reject_unknown_keys(const std::set<std::string>& allowed, const std::string& path) const {
        for (const auto& [key, value] : values_) {
            if (!allowed.count(key))
                throw std::invalid_argument(path + ": unknown config key '" + key + "'");
        }
    }

private:
    std::map<std::string, std::string> values_;
};

// The fully resolved configuration of one command run: defaults filled,
// sorted, echoed to the log and persisted for provenance.
class ResolvedConfig {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set(const std::string& key, double value) { values_[key] = format_double(value); }
    void set(const std::string& key, long value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }

    std::string render() const {
        std::string out;
        for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
        return out;
    }

    void persist(const std::filesystem::path& out_dir) const {
        write_text_file((out_dir / "run_config.txt").string(), render());
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace grouptraj
