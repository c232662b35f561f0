#include "costly_obs/csv.hpp"

#include <charconv>
#include <cstdio>

namespace costly_obs {

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string format_g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, long line, const char* what) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(std::string("bad numeric field '") + std::string(s) + "' for " + what, line);
    return v;
}

long parse_long(std::string_view s, long line, const char* what) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(std::string("bad integer field '") + std::string(s) + "' for " + what, line);
    return v;
}

namespace {

void split_fields(const std::string& line, std::vector<std::string_view>& out) {
    out.clear();
    const char* begin = line.data();
    const char* end = begin + line.size();
    const char* field = begin;
    for (const char* p = begin; p != end; ++p) {
        if (*p == ',') {
            out.emplace_back(field, static_cast<std::size_t>(p - field));
            field = p + 1;
        }
    }
    out.emplace_back(field, static_cast<std::size_t>(end - field));
}

}  // namespace

CsvReader::CsvReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw DataError("cannot open CSV file: " + path);
    if (!std::getline(in_, line_buf_)) throw ParseError("empty CSV file: " + path, 0);
    line_no_ = 1;
    if (!line_buf_.empty() && line_buf_.back() == '\r') line_buf_.pop_back();
    std::vector<std::string_view> fields;
    split_fields(line_buf_, fields);
    header_.assign(fields.begin(), fields.end());
}

int CsvReader::col(const std::string& name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return static_cast<int>(i);
    throw ParseError("missing column '" + name + "' in " + path_, 1);
}

bool CsvReader::next(std::vector<std::string_view>& fields) {
    if (!std::getline(in_, line_buf_)) return false;
    ++line_no_;
    if (!line_buf_.empty() && line_buf_.back() == '\r') line_buf_.pop_back();
    split_fields(line_buf_, fields);
    if (fields.size() != header_.size())
        throw ParseError("expected " + std::to_string(header_.size()) + " fields, got " +
                             std::to_string(fields.size()),
                         line_no_);
    return true;
}

}  // namespace costly_obs
