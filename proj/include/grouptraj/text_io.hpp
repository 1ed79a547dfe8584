#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace grouptraj {

// Locale-independent float round-tripping built on std::to_chars /
// std::from_chars. to_chars emits the shortest decimal string that parses
// back to the identical bits, which is what makes checkpoint and trajectory
// files canonical and byte-stable.

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, bool& ok) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    ok = res.ec == std::errc{} && res.ptr == s.data() + s.size();
    return v;
}

// Whitespace tokenizer; '#' starts a comment that runs to end of line.
inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == '#') break;
        if (ch == ' ' || ch == '\t' || ch == '\r') {
            if (!cur.empty()) {
                fields.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) fields.push_back(cur);
    return fields;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace grouptraj
