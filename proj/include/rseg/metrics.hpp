#pragma once

#include <array>
#include <string>
#include <vector>

#include "rseg/data.hpp"

namespace rseg {

struct GtInstance {
    int class_id = 0;
    std::vector<int> point_indices;
};

struct PredInstance {
    int class_id = 0;
    double confidence = 0.0;
    std::vector<int> point_indices;
};

// Ground-truth instances of one labeled frame, ordered by instance id.
std::vector<GtInstance> gt_instances(const RadarFrame& frame);

// |a n b| / |a u b| over point-index sets of one frame.
double instance_iou(const std::vector<int>& a, const std::vector<int>& b);

struct MetricsReport {
    std::array<double, kNumClasses> per_class_coverage{};
    std::array<double, kNumClasses> per_class_ap{};
    std::array<bool, kNumClasses> class_present{};  // has >= 1 ground-truth instance
    double m_cov = 0.0;
    double m_ap = 0.0;
    int frame_count = 0;

    std::string summary() const;  // one line, percentages
    void save(const std::string& path) const;
    static MetricsReport load(const std::string& path);
};

// Coverage: per ground-truth instance the best IoU over same-class predictions,
// pooled over frames per class; mAP at the IoU threshold via confidence-ranked
// greedy matching and all-points interpolation. Classes absent from the ground
// truth are excluded from both class means.
MetricsReport evaluate_instances(const std::vector<std::vector<GtInstance>>& gt_per_frame,
                                 const std::vector<std::vector<PredInstance>>& pred_per_frame,
                                 double iou_threshold = 0.5);

}  // namespace rseg
