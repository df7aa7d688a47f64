#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace bdlm::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal SVG line chart (one polyline per series, legend, axis ticks).
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, bool log_x = false);

struct BarGroup {
    std::string label;                 // x-axis group (e.g. variant name)
    std::vector<double> values;        // one bar per series
};

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<std::string>& series_names,
                     const std::vector<BarGroup>& groups);

}  // namespace bdlm::plot
