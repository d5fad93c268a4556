#include "rseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rseg {

void DbscanParams::validate() const {
    if (eps <= 0.0) throw std::invalid_argument("DbscanParams: eps must be positive");
    if (min_pts < 1) throw std::invalid_argument("DbscanParams: min_pts must be >= 1");
    if (velocity_weight < 0.0)
        throw std::invalid_argument("DbscanParams: velocity_weight must be >= 0");
}

std::vector<int> dbscan(const Array& points, const DbscanParams& params) {
    params.validate();
    const int n = points.rows;
    std::vector<int> labels(static_cast<size_t>(n), kNoise);
    if (n == 0) return labels;

    const double eps2 = params.eps * params.eps;
    std::vector<std::vector<int>> neighbors(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double d2 = 0.0;
            for (int k = 0; k < points.cols; ++k) {
                const double d = points.at(i, k) - points.at(j, k);
                d2 += d * d;
            }
            if (d2 <= eps2) neighbors[static_cast<size_t>(i)].push_back(j);
        }
    }

    std::vector<bool> core(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        core[static_cast<size_t>(i)] = static_cast<int>(neighbors[static_cast<size_t>(i)].size()) >= params.min_pts;

    // Flood-fill density-connected components over core points, lowest index first.
    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (!core[static_cast<size_t>(i)] || labels[static_cast<size_t>(i)] != kNoise) continue;
        const int cluster = next_cluster++;
        std::vector<int> stack = {i};
        labels[static_cast<size_t>(i)] = cluster;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            for (int q : neighbors[static_cast<size_t>(p)]) {
                if (!core[static_cast<size_t>(q)] || labels[static_cast<size_t>(q)] != kNoise) continue;
                labels[static_cast<size_t>(q)] = cluster;
                stack.push_back(q);
            }
        }
    }

    // Border points: cluster of the lowest-index core point that reaches them.
    for (int i = 0; i < n; ++i) {
        if (core[static_cast<size_t>(i)]) continue;
        for (int q : neighbors[static_cast<size_t>(i)]) {
            if (core[static_cast<size_t>(q)]) {
                labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(q)];
                break;  // neighbor lists are index-sorted by construction
            }
        }
    }
    return labels;
}

std::vector<PredInstance> InstancePrediction::as_pred_instances() const {
    std::vector<PredInstance> out(instance_class.size());
    for (size_t k = 0; k < instance_class.size(); ++k) {
        out[k].class_id = instance_class[k];
        out[k].confidence = instance_confidence[k];
    }
    for (size_t i = 0; i < instance_ids.size(); ++i)
        if (instance_ids[i] != kNoise)
            out[static_cast<size_t>(instance_ids[i])].point_indices.push_back(static_cast<int>(i));
    return out;
}

InstancePrediction extract_instances(const std::vector<RadarPoint>& points,
                                     const std::vector<int>& predicted_classes,
                                     const Array& class_probs,
                                     const ParamsPerClass& params_per_class) {
    const int n = static_cast<int>(points.size());
    if (static_cast<int>(predicted_classes.size()) != n || class_probs.rows != n)
        throw std::invalid_argument("extract_instances: per-point inputs disagree");

    InstancePrediction pred;
    pred.class_ids = predicted_classes;
    pred.instance_ids.assign(static_cast<size_t>(n), kNoise);

    for (int cls = 0; cls < kNumClasses; ++cls) {
        const DbscanParams& params = params_per_class[static_cast<size_t>(cls)];
        std::vector<int> member;
        for (int i = 0; i < n; ++i)
            if (predicted_classes[static_cast<size_t>(i)] == cls) member.push_back(i);
        if (member.empty()) continue;

        Array coords(static_cast<int>(member.size()), 3);
        for (size_t r = 0; r < member.size(); ++r) {
            const RadarPoint& p = points[static_cast<size_t>(member[r])];
            coords.at(static_cast<int>(r), 0) = p.x;
            coords.at(static_cast<int>(r), 1) = p.y;
            coords.at(static_cast<int>(r), 2) = params.velocity_weight * p.v_r;
        }
        const std::vector<int> local = dbscan(coords, params);
        const int local_clusters = local.empty() ? 0 : *std::max_element(local.begin(), local.end()) + 1;
        const int base = pred.instance_count();
        for (int c = 0; c < local_clusters; ++c) {
            pred.instance_class.push_back(cls);
            pred.instance_confidence.push_back(0.0);
        }
        std::vector<int> counts(static_cast<size_t>(local_clusters), 0);
        for (size_t r = 0; r < member.size(); ++r) {
            if (local[r] == kNoise) continue;
            const int inst = base + local[r];
            pred.instance_ids[static_cast<size_t>(member[r])] = inst;
            pred.instance_confidence[static_cast<size_t>(inst)] +=
                class_probs.at(member[static_cast<size_t>(r)], cls);
            ++counts[static_cast<size_t>(local[r])];
        }
        for (int c = 0; c < local_clusters; ++c)
            if (counts[static_cast<size_t>(c)] > 0)
                pred.instance_confidence[static_cast<size_t>(base + c)] /= counts[static_cast<size_t>(c)];
    }
    return pred;
}

double evaluate_map(const std::vector<FrameSemantics>& frames, const ParamsPerClass& params,
                    double iou_threshold) {
    std::vector<std::vector<GtInstance>> gt;
    std::vector<std::vector<PredInstance>> pred;
    gt.reserve(frames.size());
    pred.reserve(frames.size());
    for (const FrameSemantics& fs : frames) {
        gt.push_back(gt_instances(*fs.frame));
        pred.push_back(extract_instances(fs.frame->points, fs.predicted_classes, fs.class_probs,
                                         params)
                           .as_pred_instances());
    }
    return evaluate_instances(gt, pred, iou_threshold).m_ap;
}

namespace {
bool lex_less(const ParamsPerClass& a, const ParamsPerClass& b) {
    for (int cls = 0; cls < kNumClasses; ++cls) {
        const DbscanParams& x = a[static_cast<size_t>(cls)];
        const DbscanParams& y = b[static_cast<size_t>(cls)];
        if (x.eps != y.eps) return x.eps < y.eps;
        if (x.min_pts != y.min_pts) return x.min_pts < y.min_pts;
        if (x.velocity_weight != y.velocity_weight) return x.velocity_weight < y.velocity_weight;
    }
    return false;
}
}  // namespace

std::pair<ParamsPerClass, double> grid_search(const std::vector<ParamsPerClass>& grid,
                                              const std::vector<FrameSemantics>& frames,
                                              double iou_threshold) {
    if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
    ParamsPerClass best = grid.front();
    double best_score = -1.0;
    for (const ParamsPerClass& candidate : grid) {
        const double score = evaluate_map(frames, candidate, iou_threshold);
        if (score > best_score || (score == best_score && lex_less(candidate, best))) {
            best = candidate;
            best_score = score;
        }
    }
    return {best, best_score};
}

std::pair<ParamsPerClass, double> grid_search_per_class(const std::vector<FrameSemantics>& frames,
                                                        const std::vector<double>& eps_grid,
                                                        const std::vector<int>& min_pts_grid,
                                                        const std::vector<double>& vw_grid,
                                                        double iou_threshold) {
    if (eps_grid.empty() || min_pts_grid.empty() || vw_grid.empty())
        throw std::invalid_argument("grid_search_per_class: empty grid axis");

    std::vector<std::vector<GtInstance>> gt;
    gt.reserve(frames.size());
    for (const FrameSemantics& fs : frames) gt.push_back(gt_instances(*fs.frame));

    ParamsPerClass best{};
    for (int cls = 0; cls < kNumClasses; ++cls) {
        double best_ap = -1.0;
        DbscanParams best_p;
        bool first = true;
        for (double eps : eps_grid)
            for (int mp : min_pts_grid)
                for (double vw : vw_grid) {
                    ParamsPerClass candidate{};
                    candidate[static_cast<size_t>(cls)] = {eps, mp, vw};
                    std::vector<std::vector<PredInstance>> pred;
                    pred.reserve(frames.size());
                    for (const FrameSemantics& fs : frames)
                        pred.push_back(extract_instances(fs.frame->points, fs.predicted_classes,
                                                         fs.class_probs, candidate)
                                           .as_pred_instances());
                    const double ap =
                        evaluate_instances(gt, pred, iou_threshold).per_class_ap[static_cast<size_t>(cls)];
                    if (first || ap > best_ap) {
                        best_ap = ap;
                        best_p = {eps, mp, vw};
                        first = false;
                    }
                }
        best[static_cast<size_t>(cls)] = best_p;
    }
    return {best, evaluate_map(frames, best, iou_threshold)};
}

std::vector<double> default_eps_grid() { return {0.5, 1.0, 2.0, 4.0}; }
std::vector<int> default_min_pts_grid() { return {1, 2, 3}; }
std::vector<double> default_vw_grid() { return {0.0, 1.0}; }

void save_params(const ParamsPerClass& params, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (int cls = 0; cls < kNumClasses; ++cls) {
        const DbscanParams& p = params[static_cast<size_t>(cls)];
        os << cls << ' ' << p.eps << ' ' << p.min_pts << ' ' << p.velocity_weight << '\n';
    }
}

ParamsPerClass load_params(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    ParamsPerClass params{};
    std::string line;
    int seen = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int cls;
        DbscanParams p;
        if (!(ls >> cls >> p.eps >> p.min_pts >> p.velocity_weight) || cls < 0 || cls >= kNumClasses)
            throw std::runtime_error("malformed clustering-parameter line: " + line);
        params[static_cast<size_t>(cls)] = p;
        ++seen;
    }
    if (seen != kNumClasses) throw std::runtime_error("clustering-parameter file incomplete");
    return params;
}

}  // namespace rseg
