#include "rseg/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rseg {

std::vector<GtInstance> gt_instances(const RadarFrame& frame) {
    if (!frame.labeled()) throw std::runtime_error("gt_instances: frame is unlabeled");
    std::map<int, GtInstance> by_id;
    for (int i = 0; i < frame.size(); ++i) {
        const int inst = frame.instances[static_cast<size_t>(i)];
        auto [it, fresh] = by_id.try_emplace(inst);
        if (fresh) it->second.class_id = frame.labels[static_cast<size_t>(i)];
        else if (it->second.class_id != frame.labels[static_cast<size_t>(i)])
            throw std::runtime_error("gt_instances: instance spans multiple classes");
        it->second.point_indices.push_back(i);
    }
    std::vector<GtInstance> out;
    out.reserve(by_id.size());
    for (auto& [id, inst] : by_id) out.push_back(std::move(inst));
    return out;
}

double instance_iou(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty()) throw std::invalid_argument("instance_iou: empty ground-truth instance");
    std::vector<int> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<int> inter;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
    const size_t uni = sa.size() + sb.size() - inter.size();
    return uni == 0 ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

MetricsReport evaluate_instances(const std::vector<std::vector<GtInstance>>& gt_per_frame,
                                 const std::vector<std::vector<PredInstance>>& pred_per_frame,
                                 double iou_threshold) {
    if (gt_per_frame.size() != pred_per_frame.size())
        throw std::invalid_argument("evaluate_instances: frame count mismatch");
    MetricsReport report;
    report.frame_count = static_cast<int>(gt_per_frame.size());

    for (int cls = 0; cls < kNumClasses; ++cls) {
        // Coverage: best IoU per ground-truth instance, pooled over frames.
        double cov_sum = 0.0;
        int gt_count = 0;
        for (size_t f = 0; f < gt_per_frame.size(); ++f) {
            for (const GtInstance& gt : gt_per_frame[f]) {
                if (gt.class_id != cls) continue;
                ++gt_count;
                double best = 0.0;
                for (const PredInstance& pred : pred_per_frame[f]) {
                    if (pred.class_id != cls) continue;
                    best = std::max(best, instance_iou(gt.point_indices, pred.point_indices));
                }
                cov_sum += best;
            }
        }
        report.class_present[static_cast<size_t>(cls)] = gt_count > 0;
        report.per_class_coverage[static_cast<size_t>(cls)] = gt_count > 0 ? cov_sum / gt_count : 0.0;
        if (gt_count == 0) continue;

        // AP: confidence-ranked greedy matching, all-points interpolation.
        struct Ranked {
            double conf;
            size_t frame;
            size_t pred_idx;
        };
        std::vector<Ranked> ranked;
        for (size_t f = 0; f < pred_per_frame.size(); ++f)
            for (size_t p = 0; p < pred_per_frame[f].size(); ++p)
                if (pred_per_frame[f][p].class_id == cls)
                    ranked.push_back({pred_per_frame[f][p].confidence, f, p});
        std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
            if (a.conf != b.conf) return a.conf > b.conf;
            if (a.frame != b.frame) return a.frame < b.frame;
            return a.pred_idx < b.pred_idx;
        });

        std::vector<std::vector<bool>> gt_matched(gt_per_frame.size());
        for (size_t f = 0; f < gt_per_frame.size(); ++f)
            gt_matched[f].assign(gt_per_frame[f].size(), false);

        std::vector<int> tp_flags;
        tp_flags.reserve(ranked.size());
        for (const Ranked& r : ranked) {
            const PredInstance& pred = pred_per_frame[r.frame][r.pred_idx];
            double best_iou = -1.0;
            int best_gt = -1;
            for (size_t g = 0; g < gt_per_frame[r.frame].size(); ++g) {
                const GtInstance& gt = gt_per_frame[r.frame][g];
                if (gt.class_id != cls || gt_matched[r.frame][g]) continue;
                const double iou = instance_iou(gt.point_indices, pred.point_indices);
                if (iou > best_iou) {
                    best_iou = iou;
                    best_gt = static_cast<int>(g);
                }
            }
            if (best_gt >= 0 && best_iou >= iou_threshold) {
                gt_matched[r.frame][static_cast<size_t>(best_gt)] = true;
                tp_flags.push_back(1);
            } else {
                tp_flags.push_back(0);
            }
        }

        double ap = 0.0;
        if (!tp_flags.empty()) {
            std::vector<double> precision(tp_flags.size()), recall(tp_flags.size());
            int tp = 0;
            for (size_t k = 0; k < tp_flags.size(); ++k) {
                tp += tp_flags[k];
                precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
                recall[k] = static_cast<double>(tp) / gt_count;
            }
            // Monotone precision envelope from the right.
            for (size_t k = precision.size(); k-- > 1;)
                precision[k - 1] = std::max(precision[k - 1], precision[k]);
            double prev_recall = 0.0;
            for (size_t k = 0; k < tp_flags.size(); ++k) {
                ap += (recall[k] - prev_recall) * precision[k];
                prev_recall = recall[k];
            }
        }
        report.per_class_ap[static_cast<size_t>(cls)] = ap;
    }

    int present = 0;
    for (int cls = 0; cls < kNumClasses; ++cls) {
        if (!report.class_present[static_cast<size_t>(cls)]) continue;
        ++present;
        report.m_cov += report.per_class_coverage[static_cast<size_t>(cls)];
        report.m_ap += report.per_class_ap[static_cast<size_t>(cls)];
    }
    if (present > 0) {
        report.m_cov /= present;
        report.m_ap /= present;
    }
    return report;
}

std::string MetricsReport::summary() const {
    std::ostringstream oss;
    oss.setf(std::ios::fixed);
    oss.precision(2);
    oss << "mCov " << 100.0 * m_cov << "%  mAP0.5 " << 100.0 * m_ap << "%  ("
        << frame_count << " frames)";
    return oss.str();
}

void MetricsReport::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    for (int cls = 0; cls < kNumClasses; ++cls) {
        nlohmann::json j;
        j["class"] = class_name(cls);
        j["present"] = class_present[static_cast<size_t>(cls)];
        j["coverage"] = per_class_coverage[static_cast<size_t>(cls)];
        j["ap50"] = per_class_ap[static_cast<size_t>(cls)];
        os << j.dump() << '\n';
    }
    nlohmann::json j;
    j["mCov"] = m_cov;
    j["mAP50"] = m_ap;
    j["frames"] = frame_count;
    os << j.dump() << '\n';
}

MetricsReport MetricsReport::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    MetricsReport r;
    std::string line;
    int cls = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.contains("class")) {
            if (cls >= kNumClasses) throw std::runtime_error("metrics file: too many class rows");
            r.class_present[static_cast<size_t>(cls)] = j.at("present").get<bool>();
            r.per_class_coverage[static_cast<size_t>(cls)] = j.at("coverage").get<double>();
            r.per_class_ap[static_cast<size_t>(cls)] = j.at("ap50").get<double>();
            ++cls;
        } else {
            r.m_cov = j.at("mCov").get<double>();
            r.m_ap = j.at("mAP50").get<double>();
            r.frame_count = j.at("frames").get<int>();
        }
    }
    return r;
}

}  // namespace rseg
