#include "exmort/csv.hpp"

#include "exmort/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace exmort::csv {

Table::Table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows,
             std::string source)
    : header_{std::move(header)}, rows_{std::move(rows)}, source_{std::move(source)} {}

bool Table::has_column(std::string_view name) const {
    for (const auto &h : header_) {
        if (h == name) {
            return true;
        }
    }
    return false;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (header_[i] == name) {
            return i;
        }
    }
    throw DataError(source_ + ": missing column '" + std::string(name) + "'");
}

int Table::as_int(std::size_t row, std::size_t col) const {
    const auto &s = rows_[row][col];
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError(source_ + ": row " + std::to_string(row + 2) + ", column '" +
                        header_[col] + "': expected integer, got '" + s + "'");
    }
    return value;
}

double Table::as_double(std::size_t row, std::size_t col) const {
    const auto &s = rows_[row][col];
    double value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
        throw DataError(source_ + ": row " + std::to_string(row + 2) + ", column '" +
                        header_[col] + "': expected number, got '" + s + "'");
    }
    return value;
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

Table parse(std::istream &in, std::string source) {
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line.front() == '#') {
            continue;
        }
        auto fields = split_line(line);
        if (header.empty()) {
            header = std::move(fields);
            continue;
        }
        if (fields.size() != header.size()) {
            throw DataError(source + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        }
        rows.push_back(std::move(fields));
    }
    if (header.empty()) {
        throw DataError(source + ": empty CSV file");
    }
    return Table{std::move(header), std::move(rows), std::move(source)};
}

Table read(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return parse(in, path.string());
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string format_double(double value) {
    if (std::isnan(value)) {
        return "NA";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::string format_sig(double value, int digits) {
    if (std::isnan(value)) {
        return "NA";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return buf;
}

} // namespace exmort::csv
