#include "rseg/selection.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rseg {

FeatureQueue::FeatureQueue(int n_class, int capacity_per_class)
    : capacity_(capacity_per_class), per_class_(static_cast<size_t>(n_class)) {
    if (n_class < 1 || capacity_per_class < 1)
        throw std::invalid_argument("FeatureQueue: bad dimensions");
}

void FeatureQueue::push(std::vector<double> feature, int class_id, bool) {
    auto& q = per_class_.at(static_cast<size_t>(class_id));
    q.push_back(std::move(feature));
    while (static_cast<int>(q.size()) > capacity_) q.pop_front();
}

int FeatureQueue::count(int class_id) const {
    return static_cast<int>(per_class_.at(static_cast<size_t>(class_id)).size());
}

std::vector<const std::vector<double>*> FeatureQueue::newest(int class_id, int k) const {
    const auto& q = per_class_.at(static_cast<size_t>(class_id));
    std::vector<const std::vector<double>*> out;
    const int n = static_cast<int>(q.size());
    for (int i = 0; i < k && i < n; ++i) out.push_back(&q[static_cast<size_t>(n - 1 - i)]);
    return out;
}

const std::deque<std::vector<double>>& FeatureQueue::entries(int class_id) const {
    return per_class_.at(static_cast<size_t>(class_id));
}

Array SelectionSet::features(const Array& candidate_features) const {
    Array out(n_point(), candidate_features.cols);
    for (int i = 0; i < n_point(); ++i) {
        const SelectionEntry& e = entries[static_cast<size_t>(i)];
        if (e.provenance == Provenance::Minibatch) {
            for (int j = 0; j < out.cols; ++j)
                out.at(i, j) = candidate_features.at(e.candidate_row, j);
        } else {
            if (static_cast<int>(e.queue_feature.size()) != out.cols)
                throw std::runtime_error("SelectionSet: queue feature width mismatch");
            for (int j = 0; j < out.cols; ++j) out.at(i, j) = e.queue_feature[static_cast<size_t>(j)];
        }
    }
    return out;
}

std::vector<int> SelectionSet::labels() const {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const SelectionEntry& e : entries) out.push_back(e.class_id);
    return out;
}

std::vector<int> sample_frame(const RadarFrame& frame, int n_sample, std::mt19937_64& rng) {
    const int n = frame.size();
    if (n < 1) throw std::runtime_error("sample_frame: empty frame " + std::to_string(frame.id));
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n_sample));
    if (n < n_sample) {
        std::uniform_int_distribution<int> u(0, n - 1);
        for (int i = 0; i < n_sample; ++i) out.push_back(u(rng));
    } else {
        std::vector<int> pool(static_cast<size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < n_sample; ++i) {
            std::uniform_int_distribution<int> u(i, n - 1);
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(u(rng))]);
            out.push_back(pool[static_cast<size_t>(i)]);
        }
    }
    return out;
}

std::vector<int> dedup_indices(const std::vector<int>& sampled) {
    std::vector<int> out = sampled;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SelectionSet select_balanced(const std::vector<Candidate>& candidates, const FeatureQueue& queue,
                             int n_per_class, std::mt19937_64& rng) {
    if (n_per_class < 1) throw std::invalid_argument("select_balanced: N must be positive");
    const int n_class = queue.n_class();
    std::vector<std::vector<int>> by_class(static_cast<size_t>(n_class));
    for (size_t i = 0; i < candidates.size(); ++i) {
        const int cls = candidates[i].class_id;
        if (cls < 0 || cls >= n_class)
            throw std::runtime_error("select_balanced: class id out of range");
        by_class[static_cast<size_t>(cls)].push_back(static_cast<int>(i));
    }

    SelectionSet set;
    set.n_per_class = n_per_class;
    for (int cls = 0; cls < n_class; ++cls) {
        auto& pool = by_class[static_cast<size_t>(cls)];
        if (static_cast<int>(pool.size()) > n_per_class) {
            // Seeded uniform subset of the over-represented class.
            for (int i = 0; i < n_per_class; ++i) {
                std::uniform_int_distribution<int> u(i, static_cast<int>(pool.size()) - 1);
                std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(u(rng))]);
            }
            pool.resize(static_cast<size_t>(n_per_class));
            std::sort(pool.begin(), pool.end());
        }
        const int deficit = n_per_class - static_cast<int>(pool.size());
        if (deficit > queue.count(cls))
            throw std::runtime_error(
                "select_balanced: class " + std::string(class_name(cls)) + " has " +
                std::to_string(pool.size()) + " minibatch points and " +
                std::to_string(queue.count(cls)) + " queued, need " + std::to_string(n_per_class));
        for (int i : pool) {
            SelectionEntry e;
            e.class_id = cls;
            e.provenance = Provenance::Minibatch;
            e.candidate_row = candidates[static_cast<size_t>(i)].row;
            set.entries.push_back(std::move(e));
        }
        for (const std::vector<double>* f : queue.newest(cls, deficit)) {
            SelectionEntry e;
            e.class_id = cls;
            e.provenance = Provenance::Queue;
            e.queue_feature = *f;
            set.entries.push_back(std::move(e));
        }
    }
    return set;
}

void queue_update(FeatureQueue& queue, const std::vector<Candidate>& candidates,
                  const Array& candidate_features, bool pseudo_labeled) {
    for (const Candidate& c : candidates) {
        std::vector<double> f(static_cast<size_t>(candidate_features.cols));
        for (int j = 0; j < candidate_features.cols; ++j) f[static_cast<size_t>(j)] = candidate_features.at(c.row, j);
        queue.push(std::move(f), c.class_id, pseudo_labeled);
    }
}

}  // namespace rseg
