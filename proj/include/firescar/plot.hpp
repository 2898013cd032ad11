#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace firescar::plot {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool line = true;  // false draws markers only
};

struct Figure {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    int width = 640;
    int height = 420;
};

/// Standalone SVG document; non-finite points are skipped.
std::string render_svg(const Figure& figure);
void write_svg(const std::filesystem::path& path, const Figure& figure);

}  // namespace firescar::plot
