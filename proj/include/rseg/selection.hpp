#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "rseg/array.hpp"
#include "rseg/data.hpp"

namespace rseg {

// Per-class FIFO of projected feature snapshots from previous minibatches.
// Entries carry no gradient; they only serve as positives/negatives.
class FeatureQueue {
public:
    explicit FeatureQueue(int n_class = kNumClasses, int capacity_per_class = 1024);

    void push(std::vector<double> feature, int class_id, bool pseudo_labeled = false);
    int count(int class_id) const;
    int capacity() const { return capacity_; }
    int n_class() const { return static_cast<int>(per_class_.size()); }

    // The k most recent features of a class, newest first. Read-only.
    std::vector<const std::vector<double>*> newest(int class_id, int k) const;

    // Insertion-order view (oldest first), for invariant checks.
    const std::deque<std::vector<double>>& entries(int class_id) const;

private:
    struct Entry {
        std::vector<double> feature;
        bool pseudo;
    };
    int capacity_;
    std::vector<std::deque<std::vector<double>>> per_class_;
};

// One labeled candidate from the current minibatch: a row of the projected
// candidate feature matrix plus its (frame, point) origin for dedup checks.
struct Candidate {
    int row = 0;  // row in the minibatch projection matrix
    int class_id = 0;
    int64_t frame_id = 0;
    int point_index = 0;
};

enum class Provenance { Minibatch, Queue };

struct SelectionEntry {
    int class_id = 0;
    Provenance provenance = Provenance::Minibatch;
    int candidate_row = -1;              // valid for minibatch entries
    std::vector<double> queue_feature;   // valid for queue entries
};

// Class-balanced selection: exactly N entries per class.
struct SelectionSet {
    int n_per_class = 0;
    std::vector<SelectionEntry> entries;

    int n_point() const { return static_cast<int>(entries.size()); }
    // Materializes the [n_point x d_proj] feature matrix; minibatch rows are
    // copied out of the supplied candidate projection matrix.
    Array features(const Array& candidate_features) const;
    std::vector<int> labels() const;
};

// Exactly n_sample indices: without replacement when the frame has at least
// n_sample points, uniform with replacement otherwise.
std::vector<int> sample_frame(const RadarFrame& frame, int n_sample, std::mt19937_64& rng);

// Sorted unique subset of sampled indices (with-replacement duplicates removed).
std::vector<int> dedup_indices(const std::vector<int>& sampled);

// Minibatch entries preferred; per-class deficits are drawn newest-first from
// the queue. Over-represented classes keep a seeded uniform subset. Throws when
// a class cannot reach N even with the queue (warm-start violation).
SelectionSet select_balanced(const std::vector<Candidate>& candidates, const FeatureQueue& queue,
                             int n_per_class, std::mt19937_64& rng);

// Appends every candidate's projected feature to its class queue.
void queue_update(FeatureQueue& queue, const std::vector<Candidate>& candidates,
                  const Array& candidate_features, bool pseudo_labeled = false);

}  // namespace rseg
