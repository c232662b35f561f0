#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "costly_obs/errors.hpp"

namespace costly_obs {

// Floating-point formatting used in CSV outputs (9 significant digits) and in
// model files (17 significant digits, enough for an exact double round-trip).
std::string format_g9(double v);
std::string format_g17(double v);

double parse_double(std::string_view s, long line, const char* what);
long parse_long(std::string_view s, long line, const char* what);

// Streaming reader for comma-separated files with a header row.
class CsvReader {
  public:
    explicit CsvReader(const std::string& path);

    // Column index for a header name; throws ParseError if absent.
    int col(const std::string& name) const;

    // Advances to the next data row; returns false at end of file.
    // Field views stay valid until the next call.
    bool next(std::vector<std::string_view>& fields);

    long line() const { return line_no_; }
    const std::vector<std::string>& header() const { return header_; }

  private:
    std::ifstream in_;
    std::string path_;
    std::string line_buf_;
    std::vector<std::string> header_;
    long line_no_ = 0;
};

}  // namespace costly_obs
