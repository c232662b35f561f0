#pragma once

#include <string>
#include <vector>

namespace costly_obs::svg {

struct Series {
    std::string label;
    std::vector<double> xs, ys;
};

struct BarSeries {
    std::string label;
    std::vector<double> values;  // one per category
};

// Static single-file charts, no external dependencies.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<std::string>& categories,
                     const std::vector<BarSeries>& series);

}  // namespace costly_obs::svg
