#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace exmort::csv {

/// A parsed CSV file with a header row. Lines starting with '#' are skipped.
class Table {
  public:
    Table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows,
          std::string source);

    const std::vector<std::string> &header() const { return header_; }
    std::size_t size() const { return rows_.size(); }

    /// Column position; throws DataError naming the file if absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;

    const std::string &at(std::size_t row, std::size_t col) const { return rows_[row][col]; }

    int as_int(std::size_t row, std::size_t col) const;
    double as_double(std::size_t row, std::size_t col) const;

    const std::string &source() const { return source_; }

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
    std::string source_;
};

Table read(const std::filesystem::path &path);
Table parse(std::istream &in, std::string source);

std::vector<std::string> split_line(std::string_view line);

/// Quotes a field only when it contains a separator, quote or newline.
std::string escape(std::string_view field);

/// Shortest decimal that round-trips; "NA" for NaN.
std::string format_double(double value);

/// Fixed number of significant digits (printf %.*g); "NA" for NaN.
std::string format_sig(double value, int digits);

} // namespace exmort::csv
