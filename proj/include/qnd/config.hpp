#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qnd/errors.hpp"

namespace qnd {

// Flat "key = value" documents with # comments. Keys are namespaced by
// module (potential.mu, kernel.delta_a, ...). Duplicates are rejected.
struct ConfigDoc {
    std::map<std::string, std::string> values;
    std::string raw_text;

    static std::string trim(const std::string& s) {
        size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    static ConfigDoc parse(const std::string& text) {
        ConfigDoc doc;
        doc.raw_text = text;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string stripped = trim(line);
            if (stripped.empty()) continue;
            const size_t eq = stripped.find('=');
            if (eq == std::string::npos)
                throw invalid_input("config line " + std::to_string(lineno) +
                                    ": expected key = value, got '" + stripped + "'");
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (key.empty())
                throw invalid_input("config line " + std::to_string(lineno) + ": empty key");
            if (doc.values.count(key))
                throw invalid_input("config: duplicate key '" + key + "'");
            doc.values[key] = value;
        }
        return doc;
    }
};

// Typed view over a ConfigDoc. Every key read is marked consumed;
// finish() rejects anything left over, naming the offending key.
class ConfigReader {
public:
    explicit ConfigReader(const ConfigDoc& doc) : doc_(doc) {}

    bool has(const std::string& key) const { return doc_.values.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        auto it = doc_.values.find(key);
        return it == doc_.values.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) {
        consumed_.insert(key);
        auto it = doc_.values.find(key);
        if (it == doc_.values.end()) return fallback;
        return parse_double(key, it->second);
    }

    long get_long(const std::string& key, long fallback) {
        consumed_.insert(key);
        auto it = doc_.values.find(key);
        if (it == doc_.values.end()) return fallback;
        long v{};
        const auto* s = it->second.c_str();
        const auto res = std::from_chars(s, s + it->second.size(), v);
        if (res.ec != std::errc() || res.ptr != s + it->second.size())
            throw invalid_input("config: " + key + ": expected an integer, got '" + it->second + "'");
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        consumed_.insert(key);
        auto it = doc_.values.find(key);
        if (it == doc_.values.end()) return fallback;
        std::uint64_t v{};
        const auto* s = it->second.c_str();
        const auto res = std::from_chars(s, s + it->second.size(), v);
        if (res.ec != std::errc() || res.ptr != s + it->second.size())
            throw invalid_input("config: " + key + ": expected an unsigned integer, got '" +
                                it->second + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) {
        consumed_.insert(key);
        auto it = doc_.values.find(key);
        if (it == doc_.values.end()) return fallback;
        if (it->second == "true") return true;
        if (it->second == "false") return false;
        throw invalid_input("config: " + key + ": expected true or false, got '" + it->second + "'");
    }

    std::vector<double> get_double_list(const std::string& key) {
        consumed_.insert(key);
        auto it = doc_.values.find(key);
        std::vector<double> out;
        if (it == doc_.values.end()) return out;
        std::istringstream in(it->second);
        std::string tok;
        while (std::getline(in, tok, ',')) out.push_back(parse_double(key, ConfigDoc::trim(tok)));
        return out;
    }

    // constraint helpers that name the field
    double require_positive(const std::string& key, double v) const {
        if (!(v > 0.0))
            throw invalid_input("config: " + key + " = " + std::to_string(v) +
                                " violates the constraint " + key + " > 0");
        return v;
    }

    long require_at_least(const std::string& key, long v, long bound) const {
        if (v < bound)
            throw invalid_input("config: " + key + " = " + std::to_string(v) +
                                " violates the constraint " + key + " >= " + std::to_string(bound));
        return v;
    }

    void finish() const {
        for (const auto& [key, value] : doc_.values)
            if (!consumed_.count(key))
                throw invalid_input("config: unknown key '" + key + "' for this experiment");
    }

private:
    static double parse_double(const std::string& key, const std::string& text) {
        try {
            size_t pos = 0;
            const double v = std::stod(text, &pos);
            if (pos != text.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw invalid_input("config: " + key + ": expected a number, got '" + text + "'");
        }
    }

    const ConfigDoc& doc_;
    std::set<std::string> consumed_;
};

}  // namespace qnd
