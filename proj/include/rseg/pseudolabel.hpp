#pragma once

#include <string>
#include <vector>

#include "rseg/data.hpp"
#include "rseg/model.hpp"

namespace rseg {

struct PseudoLabeledPoint {
    int64_t frame_id = 0;
    int point_index = 0;
    int class_id = 0;
    double confidence = 0.0;  // in (0,1], strictly above the threshold
};

// Confidence-thresholded pseudo-labels over unlabeled frames: a point is
// retained with its argmax class iff the max evaluation-mode class probability
// exceeds T. Output is sorted by frame id then point index.
std::vector<PseudoLabeledPoint> generate_pseudo_labels(Model& model, const FrameList& frames,
                                                       double threshold);

void save_pseudo_labels(const std::vector<PseudoLabeledPoint>& labels, const std::string& path);
std::vector<PseudoLabeledPoint> load_pseudo_labels(const std::string& path);

// Unlabeled frames with pseudo-labels applied; points the model was not
// confident about are dropped from the returned frames. Instance ids are not
// pseudo-labeled (representation learning only needs the class).
FrameList apply_pseudo_labels(const FrameList& unlabeled,
                              const std::vector<PseudoLabeledPoint>& labels);

}  // namespace rseg
