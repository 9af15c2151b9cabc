#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edfield/error.hpp"

namespace edfield {

/// 17 significant digits, '.' decimal point whatever the locale.
inline std::string format_number(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

using CsvCell = std::variant<std::string, double, std::int64_t>;

/// RFC-4180 table: CRLF line ends, quoted fields only when needed.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
        if (header_.empty()) throw ValidationError("csv.header", "must be nonempty");
    }

    void add_row(std::vector<CsvCell> cells) {
        if (cells.size() != header_.size())
            throw ValidationError("csv.row", "has " + std::to_string(cells.size()) + " cells, header has " +
                                                 std::to_string(header_.size()));
        rows_.push_back(std::move(cells));
    }

    std::size_t rows() const noexcept { return rows_.size(); }

    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (i) out += ',';
            out += escape(header_[i]);
        }
        out += "\r\n";
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out += ',';
                out += cell_text(row[i]);
            }
            out += "\r\n";
        }
        return out;
    }

    static std::string escape(std::string_view field) {
        if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
        std::string out = "\"";
        for (char c : field) {
            if (c == '"') out += '"';
            out += c;
        }
        out += '"';
        return out;
    }

private:
    static std::string cell_text(const CsvCell& c) {
        if (const auto* s = std::get_if<std::string>(&c)) return escape(*s);
        if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
        return std::to_string(std::get<std::int64_t>(c));
    }

    std::vector<std::string> header_;
    std::vector<std::vector<CsvCell>> rows_;
};

/// FNV-1a, 64 bit. An identity tag for manifests, not a cryptographic digest.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("config", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace edfield
