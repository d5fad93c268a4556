#pragma once

#include <vector>

#include "rseg/array.hpp"
#include "rseg/diff.hpp"
#include "rseg/selection.hpp"

namespace rseg {

struct LossReport {
    double l_nce = 0.0;
    double l_ce = 0.0;
    double alpha = 0.0;
    double l_total = 0.0;
    double tau = 0.0;
};

// Per-point InfoNCE: mean over positives of
// -log( exp(f.p/tau) / (exp(f.p/tau) + sum_n exp(f.n/tau)) ),
// computed with log-sum-exp stabilization. Inputs are unit vectors by contract.
double info_nce_point(const std::vector<double>& anchor,
                      const std::vector<std::vector<double>>& positives,
                      const std::vector<std::vector<double>>& negatives, double tau);

// Minibatch InfoNCE over a materialized selection: mean of the per-point loss
// over anchor entries (minibatch provenance; queue snapshots only serve as
// positives/negatives).
double info_nce_batch(const SelectionSet& selection, const Array& selection_features, double tau);

// Differentiable InfoNCE over a selection feature matrix. labels gives the
// class per row; anchor[i] marks rows that contribute a per-point loss term.
diff::Val info_nce_graph(diff::Tape& tape, diff::Val features, const std::vector<int>& labels,
                         const std::vector<bool>& anchor, double tau);

// Eq-style joint objective: L = L_nce + alpha * L_ce, exact additivity.
LossReport total_loss(double l_nce, double l_ce, double alpha);

}  // namespace rseg
