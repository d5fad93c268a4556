#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "rseg/clustering.hpp"
#include "rseg/config.hpp"
#include "rseg/contrastive.hpp"
#include "rseg/data.hpp"
#include "rseg/metrics.hpp"
#include "rseg/model.hpp"
#include "rseg/synthdata.hpp"

namespace rseg {

enum class Regime { Supervised, NonjointFull, NonjointSemi, JointFull, JointSemi };

Regime parse_regime(const std::string& name);
const char* regime_name(Regime regime);
bool regime_is_semi(Regime regime);

struct TrainConfig {
    Regime regime = Regime::NonjointFull;
    double labeled_fraction = 1.0;
    double tau = 0.1;
    double alpha = 1.0;
    double pseudo_threshold = 0.9;
    int n_point = 250;
    int n_minibatch = 32;
    int n_sample = 100;
    int batch_size = 512;  // cross-entropy points per optimization step
    int queue_capacity = 1024;
    int epochs_representation = 30;
    int epochs_finetune = 15;
    int epochs_joint = 40;
    int epochs_supervised = 40;
    double lr_representation = 1e-2;  // also joint and supervised training
    double lr_finetune = 5e-4;
    double warm_restart_period = 10.0;  // epochs
    double warm_restart_mult = 2.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    ModelConfig model;

    int n_class() const { return model.n_class; }
    int n_per_class() const { return n_point / n_class(); }
    // Batch and minibatch sizes are doubled in the semi-supervised regimes.
    int effective_n_minibatch() const;
    int effective_batch_size() const;

    void validate() const;
    IniConfig to_ini() const;
    static TrainConfig from_ini(const IniConfig& ini);
};

struct LrSchedule {
    double eta_max = 1e-2;
    double eta_min = 0.0;
    double period = 10.0;  // first cycle length, epochs
    double mult = 2.0;     // cycle-length multiplier after each restart
};

// Cosine annealing with warm restarts, t in epoch units.
double lr_schedule(double t, const LrSchedule& schedule);

// Adaptive-moment optimizer with bias correction; skips frozen parameters and
// clears consumed gradients.
class AdamOptimizer {
public:
    AdamOptimizer(ParamStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(double lr);
    int64_t steps_taken() const { return t_; }

private:
    ParamStore* store_;
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Array> m_, v_;
};

// Appends one line-delimited record per optimization step.
class TraceWriter {
public:
    explicit TraceWriter(const std::string& path);
    void append(int64_t step, double l_nce, double l_ce, double l_total, double lr);
    int64_t steps() const { return step_; }

private:
    std::string path_;
    int64_t step_ = 0;
};

struct TraceRecord {
    int64_t step;
    double l_nce, l_ce, l_total, lr;
};
std::vector<TraceRecord> load_trace(const std::string& path);

// [n x 4] point matrix of a frame, optionally restricted to given indices.
Array frame_points(const RadarFrame& frame, const std::vector<int>* indices = nullptr);

// Training phases; each mutates the model in place and logs to the trace.
// Contrastive phases take two frame streams: every minibatch combines
// n_minibatch `labeled` frames with n_minibatch `extra` (pseudo-labeled)
// frames, so the labeled share per batch is constant — the doubled batch of
// the semi-supervised setting. `extra` may be empty (fully supervised case).
// Only `labeled` frames feed the cross-entropy term in joint training.
// `schedule_frames` sizes the steps per epoch (ceil(schedule_frames /
// n_minibatch), floored by the streams actually given): run_regime passes the
// full training-set size so the optimization budget does not shrink with the
// labeled fraction; 0 derives the step count from the frame lists alone.
void train_representation(Model& model, const TrainConfig& config, const FrameList& labeled,
                          const FrameList& extra, TraceWriter* trace, int schedule_frames = 0);
void finetune(Model& model, const TrainConfig& config, const FrameList& labeled,
              TraceWriter* trace, int schedule_frames = 0);
void train_supervised(Model& model, const TrainConfig& config, const FrameList& labeled,
                      TraceWriter* trace, int schedule_frames = 0);
void train_joint(Model& model, const TrainConfig& config, const FrameList& labeled,
                 const FrameList& extra, TraceWriter* trace, int schedule_frames = 0);

// Evaluation-mode semantics over whole frames (no sampling at inference).
std::vector<FrameSemantics> predict_semantics(Model& model, const FrameList& frames);

struct RunArtifacts {
    std::string run_dir;
    std::string config_path;
    std::string final_checkpoint;
    std::string repr_checkpoint;   // non-joint regimes
    std::string pseudo_path;       // semi regimes
    std::string trace_path;
    std::string params_path;
    std::string metrics_path;
    ParamsPerClass best_params{};
    double validation_map = 0.0;
    MetricsReport test_metrics;
};

// Full regime pipeline: phase sequence, clustering grid search on validation,
// metrics on test. dataset.train must already be masked to labeled_fraction.
RunArtifacts run_regime(const TrainConfig& config, const DatasetSplit& dataset,
                        const std::string& run_dir);

}  // namespace rseg
