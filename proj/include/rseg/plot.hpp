#pragma once

#include <string>
#include <vector>

#include "rseg/data.hpp"

namespace rseg {

struct PlotConfig {
    int width = 800;
    int height = 800;
    double margin = 60.0;       // px around the data box
    double marker_size = 5.0;   // px radius / half-extent
    bool legend = true;
};

// Deterministic SVG scatter plot of one frame: marker shape encodes the class,
// fill color cycles per instance within the class, noise points (instance < 0)
// are gray. Returns the SVG document text.
std::string render_frame_svg(const RadarFrame& frame, const std::vector<int>& class_ids,
                             const std::vector<int>& instance_ids,
                             const PlotConfig& config = {});

// Renders the frame's own ground truth.
std::string render_ground_truth_svg(const RadarFrame& frame, const PlotConfig& config = {});

void save_svg(const std::string& svg, const std::string& path);

}  // namespace rseg
