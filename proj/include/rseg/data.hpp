#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rseg {

constexpr int kNumClasses = 5;

// Merged road-user classes.
enum class ObjectClass : int {
    Car = 0,
    Pedestrian = 1,
    PedestrianGroup = 2,
    LargeVehicle = 3,
    TwoWheeler = 4,
};

const char* class_name(int class_id);

struct RadarPoint {
    double x = 0.0;    // m
    double y = 0.0;    // m
    double v_r = 0.0;  // radial velocity, m/s
    double rcs = 0.0;  // dBsm
};

constexpr int kPointFeatures = 4;  // x, y, v_r, rcs

// One time-stamped set of detection points with optional ground truth.
// labels/instances are both present (labeled frame) or both absent.
struct RadarFrame {
    int64_t id = 0;
    std::vector<RadarPoint> points;
    std::vector<int> labels;     // class id per point; empty when unlabeled
    std::vector<int> instances;  // instance id per point; empty when unlabeled

    bool labeled() const { return !labels.empty(); }
    int size() const { return static_cast<int>(points.size()); }
};

using FrameList = std::vector<RadarFrame>;

// JSONL interchange: one frame per line, fields id, labeled, points
// [[x, y, v_r, rcs, class|null, instance|null], ...].
void save_frames_jsonl(const FrameList& frames, const std::string& path);
FrameList load_frames_jsonl(const std::string& path);

}  // namespace rseg
