#include "costly_obs/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "costly_obs/csv.hpp"
#include "costly_obs/errors.hpp"

namespace costly_obs::svg {

namespace {

constexpr double kWidth = 880, kHeight = 540;
constexpr double kLeft = 72, kRight = 24, kTop = 48, kBottom = 64;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

const char* kColors[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377",
                         "#bbbbbb"};
constexpr int kColorCount = 7;

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = 0, hi = 1;
    double span() const { return hi - lo; }
};

Range nice_range(double lo, double hi, bool include_zero) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, 1};
    if (include_zero) {
        lo = std::min(lo, 0.0);
        hi = std::max(hi, 0.0);
    }
    if (hi <= lo) hi = lo + 1;
    const double pad = (hi - lo) * 0.05;
    return {lo == 0 && include_zero ? 0 : lo - pad, hi + pad};
}

std::vector<double> ticks(const Range& r, int target = 6) {
    const double raw_step = r.span() / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
    double step = mag;
    for (double mult : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (mag * mult >= raw_step) {
            step = mag * mult;
            break;
        }
    }
    std::vector<double> out;
    for (double t = std::ceil(r.lo / step) * step; t <= r.hi + step * 1e-9; t += step)
        out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
    return out;
}

std::string fmt_tick(double v) {
    std::string s = format_g9(v);
    return s;
}

void open_chart(std::ofstream& out, const std::string& title, const std::string& x_label,
                const std::string& y_label) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"26\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"17\">"
        << esc(title) << "</text>\n"
        << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << esc(x_label)
        << "</text>\n"
        << "<text x=\"18\" y=\"" << kTop + kPlotH / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 "
        << kTop + kPlotH / 2 << ")\">" << esc(y_label) << "</text>\n";
}

void axes(std::ofstream& out, const Range& xr, const Range& yr) {
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (double t : ticks(xr)) {
        const double px = kLeft + (t - xr.lo) / xr.span() * kPlotW;
        out << "<line x1=\"" << px << "\" y1=\"" << kTop << "\" x2=\"" << px << "\" y2=\""
            << kTop + kPlotH << "\" stroke=\"#e5e5e5\"/>\n"
            << "<text x=\"" << px << "\" y=\"" << kTop + kPlotH + 16
            << "\" text-anchor=\"middle\">" << fmt_tick(t) << "</text>\n";
    }
    for (double t : ticks(yr)) {
        const double py = kTop + kPlotH - (t - yr.lo) / yr.span() * kPlotH;
        out << "<line x1=\"" << kLeft << "\" y1=\"" << py << "\" x2=\"" << kLeft + kPlotW
            << "\" y2=\"" << py << "\" stroke=\"#e5e5e5\"/>\n"
            << "<text x=\"" << kLeft - 6 << "\" y=\"" << py + 4
            << "\" text-anchor=\"end\">" << fmt_tick(t) << "</text>\n";
    }
    out << "</g>\n<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW
        << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"#333\"/>\n";
}

void legend(std::ofstream& out, const std::vector<std::string>& labels) {
    if (labels.size() < 2) return;
    double y = kTop + 10;
    out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double x = kLeft + kPlotW - 180;
        out << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"14\" height=\"4\" fill=\""
            << kColors[i % kColorCount] << "\"/>\n"
            << "<text x=\"" << x + 20 << "\" y=\"" << y - 3 << "\">" << esc(labels[i])
            << "</text>\n";
        y += 18;
    }
    out << "</g>\n";
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    if (series.empty()) throw DataError("line chart needs at least one series");
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& s : series) {
        if (s.xs.size() != s.ys.size()) throw ShapeError("series x/y length mismatch");
        for (double v : s.xs) {
            x_lo = std::min(x_lo, v);
            x_hi = std::max(x_hi, v);
        }
        for (double v : s.ys) {
            y_lo = std::min(y_lo, v);
            y_hi = std::max(y_hi, v);
        }
    }
    const Range xr = nice_range(x_lo, x_hi, false);
    const Range yr = nice_range(y_lo, y_hi, true);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    open_chart(out, title, x_label, y_label);
    axes(out, xr, yr);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        if (s.xs.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"" << kColors[i % kColorCount]
            << "\" stroke-width=\"1.6\" points=\"";
        for (std::size_t k = 0; k < s.xs.size(); ++k) {
            const double px = kLeft + (s.xs[k] - xr.lo) / xr.span() * kPlotW;
            const double py = kTop + kPlotH - (s.ys[k] - yr.lo) / yr.span() * kPlotH;
            out << px << ',' << py << ' ';
        }
        out << "\"/>\n";
    }
    std::vector<std::string> labels;
    for (const auto& s : series) labels.push_back(s.label);
    legend(out, labels);
    out << "</svg>\n";
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<std::string>& categories,
                     const std::vector<BarSeries>& series) {
    if (series.empty() || categories.empty()) throw DataError("bar chart needs data");
    for (const auto& s : series)
        if (s.values.size() != categories.size())
            throw ShapeError("bar series length does not match categories");
    double y_hi = 0;
    for (const auto& s : series)
        for (double v : s.values) y_hi = std::max(y_hi, v);
    const Range yr = nice_range(0, y_hi, true);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    open_chart(out, title, x_label, y_label);
    // y grid only; categories label the x axis directly
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (double t : ticks(yr)) {
        const double py = kTop + kPlotH - (t - yr.lo) / yr.span() * kPlotH;
        out << "<line x1=\"" << kLeft << "\" y1=\"" << py << "\" x2=\"" << kLeft + kPlotW
            << "\" y2=\"" << py << "\" stroke=\"#e5e5e5\"/>\n"
            << "<text x=\"" << kLeft - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
            << fmt_tick(t) << "</text>\n";
    }
    const double slot = kPlotW / categories.size();
    const double group_w = slot * 0.8;
    const double bar_w = group_w / series.size();
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const double gx = kLeft + slot * c + slot * 0.1;
        for (std::size_t s = 0; s < series.size(); ++s) {
            const double v = series[s].values[c];
            const double h = (v - yr.lo) / yr.span() * kPlotH;
            out << "<rect x=\"" << gx + s * bar_w << "\" y=\"" << kTop + kPlotH - h
                << "\" width=\"" << bar_w * 0.92 << "\" height=\"" << h << "\" fill=\""
                << kColors[s % kColorCount] << "\"/>\n";
        }
        out << "<text x=\"" << kLeft + slot * c + slot / 2 << "\" y=\"" << kTop + kPlotH + 16
            << "\" text-anchor=\"middle\">" << esc(categories[c]) << "</text>\n";
    }
    out << "</g>\n<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW
        << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"#333\"/>\n";
    std::vector<std::string> labels;
    for (const auto& s : series) labels.push_back(s.label);
    legend(out, labels);
    out << "</svg>\n";
}

}  // namespace costly_obs::svg
