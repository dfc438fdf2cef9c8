#include "ldd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ldd/common.hpp"

namespace ldd {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= line.size()) {
        size_t next = line.find(',', pos);
        out.push_back(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

}  // namespace

RunSeries read_metrics_series(const std::filesystem::path& csv_path, const std::string& column) {
    std::ifstream in(csv_path);
    if (!in) throw IoError(IoError::Code::truncated, "cannot open " + csv_path.string());
    std::string header;
    if (!std::getline(in, header)) throw IoError(IoError::Code::malformed, "empty metrics file " + csv_path.string());
    std::vector<std::string> cols = split_csv_line(header);
    int col_idx = -1, frames_idx = -1, variant_idx = -1, seed_idx = -1;
    for (size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] == column) col_idx = static_cast<int>(i);
        if (cols[i] == "frames") frames_idx = static_cast<int>(i);
        if (cols[i] == "variant") variant_idx = static_cast<int>(i);
        if (cols[i] == "seed") seed_idx = static_cast<int>(i);
    }
    if (col_idx < 0) throw ConfigError("metrics file has no column '" + column + "'");
    if (frames_idx < 0 || variant_idx < 0 || seed_idx < 0)
        throw IoError(IoError::Code::malformed, "metrics file missing frames/variant/seed columns");

    RunSeries s;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f = split_csv_line(line);
        s.variant = f[static_cast<size_t>(variant_idx)];
        s.seed = std::stoull(f[static_cast<size_t>(seed_idx)]);
        s.frames.push_back(std::stod(f[static_cast<size_t>(frames_idx)]));
        s.y.push_back(std::stod(f[static_cast<size_t>(col_idx)]));
    }
    if (s.frames.empty()) throw IoError(IoError::Code::malformed, "metrics file has no rows: " + csv_path.string());
    return s;
}

std::string render_curves_svg(const std::vector<RunSeries>& runs, const std::string& y_label,
                              const std::string& title) {
    if (runs.empty()) throw ConfigError("plot: no series");

    // group runs by variant; align on the shortest series within a group
    std::map<std::string, std::vector<const RunSeries*>> groups;
    for (const auto& r : runs) groups[r.variant].push_back(&r);

    double x_max = 1.0, y_min = 0.0, y_max = 0.0;
    for (const auto& r : runs) {
        for (double f : r.frames) x_max = std::max(x_max, f);
        for (double v : r.y) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
        }
    }
    if (y_max <= y_min) y_max = y_min + 1.0;
    double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double w = 860, h = 520, ml = 70, mr = 170, mt = 50, mb = 55;
    double pw = w - ml - mr, ph = h - mt - mb;
    auto px = [&](double f) { return ml + pw * (f / x_max); };
    auto py = [&](double v) { return mt + ph * (1.0 - (v - y_min) / (y_max - y_min)); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"26\" text-anchor=\"middle\" font-size=\"17\" font-family=\"sans-serif\">" << title << "</text>\n";

    // axes and ticks
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fx = x_max * i / 5.0;
        double vy = y_min + (y_max - y_min) * i / 5.0;
        os << "<line x1=\"" << px(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(fx) << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 20 << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << format_double(fx) << "</text>\n";
        os << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(vy) << "\" x2=\"" << ml << "\" y2=\"" << py(vy) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << ml - 9 << "\" y=\"" << py(vy) + 4 << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << format_double(std::round(vy * 1000) / 1000) << "</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 14 << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">frames</text>\n";
    os << "<text x=\"20\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 20 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";

    int color_idx = 0;
    double legend_y = mt + 10;
    for (const auto& [variant, series] : groups) {
        const char* color = kPalette[color_idx % 7];
        ++color_idx;
        size_t n = series[0]->frames.size();
        for (const auto* s : series) n = std::min(n, s->frames.size());

        std::vector<double> mean(n), lo(n), hi(n);
        for (size_t i = 0; i < n; ++i) {
            double sum = 0, mn = 1e300, mx = -1e300;
            for (const auto* s : series) {
                sum += s->y[i];
                mn = std::min(mn, s->y[i]);
                mx = std::max(mx, s->y[i]);
            }
            mean[i] = sum / static_cast<double>(series.size());
            lo[i] = mn;
            hi[i] = mx;
        }

        // min-max band
        os << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (size_t i = 0; i < n; ++i) os << px(series[0]->frames[i]) << "," << py(hi[i]) << " ";
        for (size_t i = n; i-- > 0;) os << px(series[0]->frames[i]) << "," << py(lo[i]) << " ";
        os << "\"/>\n";
        // mean curve
        os << "<polyline class=\"mean\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < n; ++i) os << px(series[0]->frames[i]) << "," << py(mean[i]) << " ";
        os << "\"/>\n";

        os << "<rect x=\"" << ml + pw + 14 << "\" y=\"" << legend_y - 9 << "\" width=\"18\" height=\"4\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << ml + pw + 38 << "\" y=\"" << legend_y - 3 << "\" font-size=\"12\" font-family=\"sans-serif\">" << variant
           << " (" << series.size() << " run" << (series.size() == 1 ? "" : "s") << ")</text>\n";
        legend_y += 20;
    }
    os << "</svg>\n";
    return os.str();
}

void plot_metrics(const std::vector<std::filesystem::path>& csvs, const std::string& column,
                  const std::filesystem::path& out_svg) {
    std::vector<RunSeries> runs;
    for (const auto& p : csvs) runs.push_back(read_metrics_series(p, column));
    write_file_atomic(out_svg, render_curves_svg(runs, column, column + " by variant"));
}

}  // namespace ldd
