#include "rseg/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rseg {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
constexpr int kPaletteSize = 10;
constexpr const char* kNoiseColor = "#c0c0c0";

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// One marker per class: circle, square, up-triangle, diamond, down-triangle.
void emit_marker(std::ostringstream& os, int class_id, double x, double y, double s,
                 const std::string& color) {
    switch (class_id % kNumClasses) {
        case 0:
            os << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"" << fmt(s)
               << "\" fill=\"" << color << "\"/>\n";
            break;
        case 1:
            os << "<rect x=\"" << fmt(x - s) << "\" y=\"" << fmt(y - s) << "\" width=\""
               << fmt(2 * s) << "\" height=\"" << fmt(2 * s) << "\" fill=\"" << color << "\"/>\n";
            break;
        case 2:
            os << "<polygon points=\"" << fmt(x) << ',' << fmt(y - s) << ' ' << fmt(x - s) << ','
               << fmt(y + s) << ' ' << fmt(x + s) << ',' << fmt(y + s) << "\" fill=\"" << color
               << "\"/>\n";
            break;
        case 3:
            os << "<polygon points=\"" << fmt(x) << ',' << fmt(y - s) << ' ' << fmt(x + s) << ','
               << fmt(y) << ' ' << fmt(x) << ',' << fmt(y + s) << ' ' << fmt(x - s) << ','
               << fmt(y) << "\" fill=\"" << color << "\"/>\n";
            break;
        default:
            os << "<polygon points=\"" << fmt(x - s) << ',' << fmt(y - s) << ' ' << fmt(x + s)
               << ',' << fmt(y - s) << ' ' << fmt(x) << ',' << fmt(y + s) << "\" fill=\"" << color
               << "\"/>\n";
            break;
    }
}

}  // namespace

std::string render_frame_svg(const RadarFrame& frame, const std::vector<int>& class_ids,
                             const std::vector<int>& instance_ids, const PlotConfig& config) {
    const size_t n = frame.points.size();
    if (class_ids.size() != n || instance_ids.size() != n)
        throw std::invalid_argument("render_frame_svg: per-point vector size mismatch");

    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (n > 0) {
        xmin = xmax = frame.points[0].x;
        ymin = ymax = frame.points[0].y;
        for (const RadarPoint& p : frame.points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
        if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
    }
    const double sx = (config.width - 2.0 * config.margin) / (xmax - xmin);
    const double sy = (config.height - 2.0 * config.margin) / (ymax - ymin);
    auto px = [&](double x) { return config.margin + (x - xmin) * sx; };
    // SVG y grows downward; flip so +y in scene coordinates points up.
    auto py = [&](double y) { return config.height - config.margin - (y - ymin) * sy; };

    // Stable instance -> palette slot assignment per class, ordered by id.
    std::map<std::pair<int, int>, int> slot;
    for (size_t i = 0; i < n; ++i) {
        if (instance_ids[i] < 0) continue;
        const auto key = std::make_pair(class_ids[i], instance_ids[i]);
        if (!slot.count(key)) slot.emplace(key, 0);
    }
    {
        std::map<int, int> next_per_class;
        for (auto& [key, s] : slot) s = next_per_class[key.first]++ % kPaletteSize;
    }

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << config.width << "\" height=\""
       << config.height << "\" viewBox=\"0 0 " << config.width << ' ' << config.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (size_t i = 0; i < n; ++i) {
        const std::string color =
            instance_ids[i] < 0 ? kNoiseColor
                                : kPalette[slot.at({class_ids[i], instance_ids[i]})];
        emit_marker(os, class_ids[i], px(frame.points[i].x), py(frame.points[i].y),
                    config.marker_size, color);
    }

    if (config.legend) {
        for (int c = 0; c < kNumClasses; ++c) {
            const double lx = 12.0, ly = 16.0 + 18.0 * c;
            emit_marker(os, c, lx, ly, config.marker_size, "#303030");
            os << "<text x=\"" << fmt(lx + 10.0) << "\" y=\"" << fmt(ly + 4.0)
               << "\" font-family=\"sans-serif\" font-size=\"12\">" << class_name(c)
               << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string render_ground_truth_svg(const RadarFrame& frame, const PlotConfig& config) {
    if (!frame.labeled()) throw std::invalid_argument("render_ground_truth_svg: unlabeled frame");
    return render_frame_svg(frame, frame.labels, frame.instances, config);
}

void save_svg(const std::string& svg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << svg;
}

}  // namespace rseg
