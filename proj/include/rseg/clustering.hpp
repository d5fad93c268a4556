#pragma once

#include <array>
#include <vector>

#include "rseg/array.hpp"
#include "rseg/data.hpp"
#include "rseg/metrics.hpp"

namespace rseg {

struct DbscanParams {
    double eps = 1.0;           // neighborhood radius in the scaled space
    int min_pts = 2;            // core-point density, self included
    double velocity_weight = 0.0;  // weight of v_r in the clustering distance

    void validate() const;
};

using ParamsPerClass = std::array<DbscanParams, kNumClasses>;

constexpr int kNoise = -1;

// Canonical deterministic DBSCAN over a generic point matrix [n x d]:
// clusters are density-connected components of core points, border points go
// to the cluster of the lowest-index core point reaching them, cluster ids are
// renumbered 0..k-1 by smallest member index. Non-reachable points get kNoise.
std::vector<int> dbscan(const Array& points, const DbscanParams& params);

struct InstancePrediction {
    std::vector<int> class_ids;            // per point
    std::vector<int> instance_ids;         // per point, kNoise for noise
    std::vector<int> instance_class;       // per instance id
    std::vector<double> instance_confidence;  // mean class probability

    int instance_count() const { return static_cast<int>(instance_class.size()); }
    std::vector<PredInstance> as_pred_instances() const;
};

// DBSCAN per predicted class over (x, y, velocity_weight * v_r); instance ids
// unique across classes within the frame. class_probs is [n x n_class].
InstancePrediction extract_instances(const std::vector<RadarPoint>& points,
                                     const std::vector<int>& predicted_classes,
                                     const Array& class_probs,
                                     const ParamsPerClass& params_per_class);

// Precomputed semantic output for one evaluation frame.
struct FrameSemantics {
    const RadarFrame* frame = nullptr;  // carries the ground truth
    std::vector<int> predicted_classes;
    Array class_probs;
};

// Evaluates mAP at the threshold for one full candidate parameter map.
double evaluate_map(const std::vector<FrameSemantics>& frames, const ParamsPerClass& params,
                    double iou_threshold = 0.5);

// Returns the mAP-maximizing candidate; ties broken by the lexicographically
// smallest (eps, min_pts, velocity_weight) sequence in class-id order.
std::pair<ParamsPerClass, double> grid_search(const std::vector<ParamsPerClass>& grid,
                                              const std::vector<FrameSemantics>& frames,
                                              double iou_threshold = 0.5);

// Per-class search over the default grid. Per-class AP depends only on that
// class's parameters, so each class is optimized independently.
std::pair<ParamsPerClass, double> grid_search_per_class(const std::vector<FrameSemantics>& frames,
                                                        const std::vector<double>& eps_grid,
                                                        const std::vector<int>& min_pts_grid,
                                                        const std::vector<double>& vw_grid,
                                                        double iou_threshold = 0.5);

std::vector<double> default_eps_grid();      // {0.5, 1, 2, 4} m
std::vector<int> default_min_pts_grid();     // {1, 2, 3}
std::vector<double> default_vw_grid();       // {0, 1}

// Plain-text best-parameter file: one line per class.
void save_params(const ParamsPerClass& params, const std::string& path);
ParamsPerClass load_params(const std::string& path);

}  // namespace rseg
