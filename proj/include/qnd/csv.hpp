#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qnd/errors.hpp"

namespace qnd {

// 17 significant digits: doubles survive a text round trip bit-exactly,
// and equal runs produce byte-identical files.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != header.size())
            throw invalid_input("CsvTable: row width does not match the header");
        rows.push_back(std::move(row));
    }

    std::string body() const {
        std::string out;
        for (size_t i = 0; i < header.size(); ++i) {
            out += header[i];
            out += (i + 1 < header.size()) ? ',' : '\n';
        }
        for (const auto& row : rows)
            for (size_t i = 0; i < row.size(); ++i) {
                out += row[i];
                out += (i + 1 < row.size()) ? ',' : '\n';
            }
        return out;
    }
};

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw invalid_input("cannot open " + tmp.string() + " for writing");
        f << content;
    }
    std::filesystem::rename(tmp, path);
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    write_text_atomic(path, table.body());
}

// FNV-1a over the raw configuration text; recorded in the manifest so every
// output row is attributable to its exact inputs.
inline std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace qnd
