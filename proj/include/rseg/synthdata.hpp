#pragma once

#include <cstdint>
#include <random>

#include "rseg/data.hpp"

namespace rseg {

// Per-class generation knobs for one object category.
struct ClassProfile {
    int min_instances = 0;
    int max_instances = 1;
    int min_points = 2;
    int max_points = 8;
    double extent = 1.0;      // isotropic spread around the instance center, m
    double min_speed = 0.0;   // m/s
    double max_speed = 10.0;
    double rcs_mean = 0.0;    // dBsm
    double rcs_spread = 2.0;
};

struct SceneConfig {
    std::array<ClassProfile, kNumClasses> classes;
    double fov_x_min = 5.0, fov_x_max = 80.0;
    double fov_y_min = -40.0, fov_y_max = 40.0;
    double velocity_jitter = 0.25;  // per-point spread around the instance base v_r
    bool clutterless = true;

    void validate() const;  // throws on empty ranges / nonpositive extents

    // Desk-scale default: sparse frames; classes are separable from point
    // features plus set context (RCS bands, speed and spread profiles).
    static SceneConfig defaults();
};

// Fully ground-truthed frame; instances placed uniformly in the field of view,
// points spread isotropically, one base radial velocity per instance.
RadarFrame generate_frame(const SceneConfig& config, int64_t frame_id, std::mt19937_64& rng);

// Frame generation with per-frame derived seeds, deterministic per (config, seed).
FrameList generate_corpus(const SceneConfig& config, int frame_count, uint64_t seed);

struct DatasetSplit {
    FrameList train;
    FrameList validation;
    FrameList test;
};

// Shuffled 8:1:1 split; sizes within one frame of the exact ratio.
DatasetSplit split_dataset(FrameList frames, uint64_t seed);

// Keeps labels on exactly round(p * count) frames, strips them elsewhere.
FrameList mask_labels(FrameList train, double labeled_fraction, uint64_t seed);

}  // namespace rseg
