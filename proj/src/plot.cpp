#include "bdlm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bdlm/error.hpp"
#include "bdlm/io.hpp"

namespace bdlm::plot {

namespace {

constexpr int kW = 640, kH = 420;
constexpr int kL = 70, kR = 150, kT = 40, kB = 50;  // margins

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                         "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else if (c == '&')
            out += "&amp;";
        else
            out += c;
    }
    return out;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, bool log_x) {
    require(!series.empty(), "line chart needs at least one series");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto tx = [&](double x) { return log_x ? std::log10(std::max(x, 1e-12)) : x; };
    for (const auto& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    double ypad = 0.08 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) {
        return kL + (tx(x) - xmin) / (xmax - xmin) * (kW - kL - kR);
    };
    auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kT - kB); };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' font-size='15'>" << esc(title)
        << "</text>\n";
    svg << "<line x1='" << kL << "' y1='" << kH - kB << "' x2='" << kW - kR << "' y2='" << kH - kB
        << "' stroke='black'/>\n";
    svg << "<line x1='" << kL << "' y1='" << kT << "' x2='" << kL << "' y2='" << kH - kB
        << "' stroke='black'/>\n";
    for (int t = 0; t <= 4; ++t) {
        double yv = ymin + (ymax - ymin) * t / 4.0;
        svg << "<text x='" << kL - 6 << "' y='" << py(yv) + 4
            << "' text-anchor='end' font-size='10'>" << fmt(yv) << "</text>\n";
        svg << "<line x1='" << kL << "' y1='" << py(yv) << "' x2='" << kW - kR << "' y2='" << py(yv)
            << "' stroke='#dddddd'/>\n";
    }
    for (int t = 0; t <= 4; ++t) {
        double xv = xmin + (xmax - xmin) * t / 4.0;
        double shown = log_x ? std::pow(10.0, xv) : xv;
        svg << "<text x='" << kL + (kW - kL - kR) * t / 4.0 << "' y='" << kH - kB + 16
            << "' text-anchor='middle' font-size='10'>" << fmt(shown) << "</text>\n";
    }
    svg << "<text x='" << (kL + kW - kR) / 2 << "' y='" << kH - 12
        << "' text-anchor='middle' font-size='12'>" << esc(x_label) << "</text>\n";
    svg << "<text x='16' y='" << (kT + kH - kB) / 2
        << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
        << (kT + kH - kB) / 2 << ")'>" << esc(y_label) << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % 8];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < series[s].x.size(); ++i)
            svg << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
        svg << "'/>\n";
        for (size_t i = 0; i < series[s].x.size(); ++i)
            svg << "<circle cx='" << px(series[s].x[i]) << "' cy='" << py(series[s].y[i])
                << "' r='2.5' fill='" << color << "'/>\n";
        int ly = kT + 14 + static_cast<int>(s) * 16;
        svg << "<rect x='" << kW - kR + 10 << "' y='" << ly - 9
            << "' width='10' height='10' fill='" << color << "'/>\n";
        svg << "<text x='" << kW - kR + 24 << "' y='" << ly << "' font-size='11'>"
            << esc(series[s].name) << "</text>\n";
    }
    svg << "</svg>\n";
    io::write_text(path, svg.str());
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<std::string>& series_names,
                     const std::vector<BarGroup>& groups) {
    require(!groups.empty() && !series_names.empty(), "bar chart needs data");
    double ymax = 0.0;
    for (const auto& g : groups)
        for (double v : g.values) ymax = std::max(ymax, v);
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;

    double plot_w = kW - kL - kR;
    double group_w = plot_w / static_cast<double>(groups.size());
    double bar_w = group_w * 0.8 / static_cast<double>(series_names.size());
    auto py = [&](double y) { return kH - kB - y / ymax * (kH - kT - kB); };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' font-size='15'>" << esc(title)
        << "</text>\n";
    svg << "<line x1='" << kL << "' y1='" << kH - kB << "' x2='" << kW - kR << "' y2='" << kH - kB
        << "' stroke='black'/>\n";
    svg << "<line x1='" << kL << "' y1='" << kT << "' x2='" << kL << "' y2='" << kH - kB
        << "' stroke='black'/>\n";
    for (int t = 0; t <= 4; ++t) {
        double yv = ymax * t / 4.0;
        svg << "<text x='" << kL - 6 << "' y='" << py(yv) + 4
            << "' text-anchor='end' font-size='10'>" << fmt(yv) << "</text>\n";
    }
    svg << "<text x='16' y='" << (kT + kH - kB) / 2
        << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
        << (kT + kH - kB) / 2 << ")'>" << esc(y_label) << "</text>\n";

    for (size_t g = 0; g < groups.size(); ++g) {
        double gx = kL + group_w * (static_cast<double>(g) + 0.1);
        for (size_t s = 0; s < groups[g].values.size() && s < series_names.size(); ++s) {
            double v = groups[g].values[s];
            svg << "<rect x='" << gx + bar_w * static_cast<double>(s) << "' y='" << py(v)
                << "' width='" << bar_w * 0.9 << "' height='" << (kH - kB) - py(v) << "' fill='"
                << kColors[s % 8] << "'/>\n";
        }
        svg << "<text x='" << gx + group_w * 0.4 << "' y='" << kH - kB + 16
            << "' text-anchor='middle' font-size='10'>" << esc(groups[g].label) << "</text>\n";
    }
    for (size_t s = 0; s < series_names.size(); ++s) {
        int ly = kT + 14 + static_cast<int>(s) * 16;
        svg << "<rect x='" << kW - kR + 10 << "' y='" << ly - 9 << "' width='10' height='10' fill='"
            << kColors[s % 8] << "'/>\n";
        svg << "<text x='" << kW - kR + 24 << "' y='" << ly << "' font-size='11'>"
            << esc(series_names[s]) << "</text>\n";
    }
    svg << "</svg>\n";
    io::write_text(path, svg.str());
}

}  // namespace bdlm::plot
