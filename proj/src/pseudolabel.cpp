#include "rseg/pseudolabel.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rseg {

std::vector<PseudoLabeledPoint> generate_pseudo_labels(Model& model, const FrameList& frames,
                                                       double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("generate_pseudo_labels: threshold must be in (0,1)");
    std::vector<PseudoLabeledPoint> out;
    for (const RadarFrame& frame : frames) {
        if (frame.labeled())
            throw std::invalid_argument("generate_pseudo_labels: frame " +
                                        std::to_string(frame.id) + " already carries labels");
        if (frame.size() == 0) continue;
        Array pts(frame.size(), kPointFeatures);
        for (int i = 0; i < frame.size(); ++i) {
            const RadarPoint& p = frame.points[static_cast<size_t>(i)];
            pts.at(i, 0) = p.x;
            pts.at(i, 1) = p.y;
            pts.at(i, 2) = p.v_r;
            pts.at(i, 3) = p.rcs;
        }
        const Array probs = model.class_probabilities(pts);
        for (int i = 0; i < frame.size(); ++i) {
            int best = 0;
            for (int c = 1; c < probs.cols; ++c)
                if (probs.at(i, c) > probs.at(i, best)) best = c;
            const double conf = probs.at(i, best);
            if (conf > threshold)
                out.push_back({frame.id, i, best, conf});
        }
    }
    std::sort(out.begin(), out.end(), [](const PseudoLabeledPoint& a, const PseudoLabeledPoint& b) {
        if (a.frame_id != b.frame_id) return a.frame_id < b.frame_id;
        return a.point_index < b.point_index;
    });
    return out;
}

void save_pseudo_labels(const std::vector<PseudoLabeledPoint>& labels, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.precision(17);
    for (const PseudoLabeledPoint& p : labels)
        os << p.frame_id << ' ' << p.point_index << ' ' << p.class_id << ' ' << p.confidence << '\n';
}

std::vector<PseudoLabeledPoint> load_pseudo_labels(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::vector<PseudoLabeledPoint> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        PseudoLabeledPoint p;
        if (!(ls >> p.frame_id >> p.point_index >> p.class_id >> p.confidence))
            throw std::runtime_error("malformed pseudo-label line: " + line);
        out.push_back(p);
    }
    return out;
}

FrameList apply_pseudo_labels(const FrameList& unlabeled,
                              const std::vector<PseudoLabeledPoint>& labels) {
    std::map<int64_t, std::vector<const PseudoLabeledPoint*>> by_frame;
    for (const PseudoLabeledPoint& p : labels) by_frame[p.frame_id].push_back(&p);

    FrameList out;
    for (const RadarFrame& frame : unlabeled) {
        auto it = by_frame.find(frame.id);
        if (it == by_frame.end()) continue;
        RadarFrame f;
        f.id = frame.id;
        for (const PseudoLabeledPoint* p : it->second) {
            if (p->point_index < 0 || p->point_index >= frame.size())
                throw std::runtime_error("pseudo-label point index out of range in frame " +
                                         std::to_string(frame.id));
            f.points.push_back(frame.points[static_cast<size_t>(p->point_index)]);
            f.labels.push_back(p->class_id);
            // No instance pseudo-labels; every point stands alone.
            f.instances.push_back(static_cast<int>(f.instances.size()));
        }
        if (!f.points.empty()) out.push_back(std::move(f));
    }
    return out;
}

}  // namespace rseg
