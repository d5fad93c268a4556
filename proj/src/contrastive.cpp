#include "rseg/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rseg {

namespace {
double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
}  // namespace

double info_nce_point(const std::vector<double>& anchor,
                      const std::vector<std::vector<double>>& positives,
                      const std::vector<std::vector<double>>& negatives, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("info_nce_point: tau must be positive");
    if (positives.empty()) throw std::invalid_argument("info_nce_point: no positive samples");
    if (negatives.empty()) throw std::invalid_argument("info_nce_point: no negative samples");

    // Shared log-sum-exp over the negatives, then per positive:
    // -log(e^sp / (e^sp + e^z)) = softplus(z - sp).
    double zmax = -1e300;
    std::vector<double> neg_scores;
    neg_scores.reserve(negatives.size());
    for (const auto& n : negatives) {
        const double s = dot(anchor, n) / tau;
        neg_scores.push_back(s);
        zmax = std::max(zmax, s);
    }
    double zsum = 0.0;
    for (double s : neg_scores) zsum += std::exp(s - zmax);
    const double z = zmax + std::log(zsum);

    double total = 0.0;
    for (const auto& p : positives) {
        const double sp = dot(anchor, p) / tau;
        const double d = z - sp;
        total += std::max(d, 0.0) + std::log1p(std::exp(-std::fabs(d)));
    }
    return total / static_cast<double>(positives.size());
}

double info_nce_batch(const SelectionSet& selection, const Array& features, double tau) {
    const int n = selection.n_point();
    if (features.rows != n) throw std::invalid_argument("info_nce_batch: feature row mismatch");
    auto row = [&features](int i) {
        return std::vector<double>(features.data.begin() + static_cast<size_t>(i) * features.cols,
                                   features.data.begin() + static_cast<size_t>(i + 1) * features.cols);
    };
    double total = 0.0;
    int anchors = 0;
    for (int i = 0; i < n; ++i) {
        if (selection.entries[static_cast<size_t>(i)].provenance != Provenance::Minibatch) continue;
        std::vector<std::vector<double>> pos, neg;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (selection.entries[static_cast<size_t>(j)].class_id ==
                selection.entries[static_cast<size_t>(i)].class_id)
                pos.push_back(row(j));
            else
                neg.push_back(row(j));
        }
        total += info_nce_point(row(i), pos, neg, tau);
        ++anchors;
    }
    if (anchors == 0) throw std::runtime_error("info_nce_batch: selection has no anchor entries");
    return total / anchors;
}

diff::Val info_nce_graph(diff::Tape& tape, diff::Val features, const std::vector<int>& labels,
                         const std::vector<bool>& anchor, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("info_nce_graph: tau must be positive");
    const int n = tape.value(features).rows;
    if (static_cast<int>(labels.size()) != n || static_cast<int>(anchor.size()) != n)
        throw std::invalid_argument("info_nce_graph: labels/anchor size mismatch");

    int n_anchor = 0;
    for (bool a : anchor)
        if (a) ++n_anchor;
    if (n_anchor == 0) throw std::runtime_error("info_nce_graph: no anchors");

    Array neg_mask(n, n), weights(n, n);
    for (int i = 0; i < n; ++i) {
        int pos_count = 0, neg_count = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (labels[static_cast<size_t>(j)] != labels[static_cast<size_t>(i)]) {
                neg_mask.at(i, j) = 1.0;
                ++neg_count;
            } else {
                ++pos_count;
            }
        }
        if (!anchor[static_cast<size_t>(i)]) continue;
        if (pos_count == 0)
            throw std::runtime_error("info_nce_graph: anchor " + std::to_string(i) +
                                     " has no positive samples");
        if (neg_count == 0)
            throw std::runtime_error("info_nce_graph: anchor " + std::to_string(i) +
                                     " has no negative samples");
        const double w = 1.0 / (static_cast<double>(n_anchor) * pos_count);
        for (int j = 0; j < n; ++j)
            if (j != i && labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)])
                weights.at(i, j) = w;
    }

    diff::Val scores = tape.scale(tape.matmul_nt(features, features), 1.0 / tau);
    diff::Val z = tape.logsumexp_rows_masked(scores, tape.constant(std::move(neg_mask)));
    diff::Val gap = tape.sub(tape.broadcast_col(z, n), scores);
    return tape.weighted_sum(tape.softplus(gap), tape.constant(std::move(weights)));
}

LossReport total_loss(double l_nce, double l_ce, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("total_loss: alpha must be nonnegative");
    LossReport r;
    r.l_nce = l_nce;
    r.l_ce = l_ce;
    r.alpha = alpha;
    r.l_total = l_nce + alpha * l_ce;
    if (!std::isfinite(r.l_total))
        throw std::runtime_error("total_loss: non-finite loss components");
    return r;
}

}  // namespace rseg
