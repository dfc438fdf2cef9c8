#pragma once

// Metrics-CSV reading and static SVG learning-curve rendering: one mean
// curve per variant with a shaded min-max band across runs.

#include <filesystem>
#include <string>
#include <vector>

namespace ldd {

struct RunSeries {
    std::string variant;
    uint64_t seed = 0;
    std::vector<double> frames;
    std::vector<double> y;
};

RunSeries read_metrics_series(const std::filesystem::path& csv_path, const std::string& column);

std::string render_curves_svg(const std::vector<RunSeries>& runs, const std::string& y_label,
                              const std::string& title);

void plot_metrics(const std::vector<std::filesystem::path>& csvs, const std::string& column,
                  const std::filesystem::path& out_svg);

}  // namespace ldd
