#include "rseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "rseg/pseudolabel.hpp"
#include "rseg/rng.hpp"
#include "rseg/selection.hpp"

namespace rseg {

namespace fs = std::filesystem;

Regime parse_regime(const std::string& name) {
    if (name == "supervised") return Regime::Supervised;
    if (name == "nonjoint_full") return Regime::NonjointFull;
    if (name == "nonjoint_semi") return Regime::NonjointSemi;
    if (name == "joint_full") return Regime::JointFull;
    if (name == "joint_semi") return Regime::JointSemi;
    throw std::invalid_argument("unknown regime: " + name);
}

const char* regime_name(Regime regime) {
    switch (regime) {
        case Regime::Supervised: return "supervised";
        case Regime::NonjointFull: return "nonjoint_full";
        case Regime::NonjointSemi: return "nonjoint_semi";
        case Regime::JointFull: return "joint_full";
        case Regime::JointSemi: return "joint_semi";
    }
    return "?";
}

bool regime_is_semi(Regime regime) {
    return regime == Regime::NonjointSemi || regime == Regime::JointSemi;
}

int TrainConfig::effective_n_minibatch() const {
    return regime_is_semi(regime) ? 2 * n_minibatch : n_minibatch;
}

int TrainConfig::effective_batch_size() const {
    return regime_is_semi(regime) ? 2 * batch_size : batch_size;
}

void TrainConfig::validate() const {
    if (n_point % n_class() != 0)
        throw std::invalid_argument("TrainConfig: n_point must be divisible by n_class");
    if (n_minibatch < 1 || n_sample < 1 || batch_size < 1 || queue_capacity < 1)
        throw std::invalid_argument("TrainConfig: sizes must be positive");
    if (tau <= 0.0) throw std::invalid_argument("TrainConfig: tau must be positive");
    if (alpha < 0.0) throw std::invalid_argument("TrainConfig: alpha must be nonnegative");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw std::invalid_argument("TrainConfig: labeled_fraction must be in (0,1]");
    if (!(pseudo_threshold > 0.0 && pseudo_threshold < 1.0))
        throw std::invalid_argument("TrainConfig: pseudo threshold must be in (0,1)");
    if (warm_restart_period <= 0.0 || warm_restart_mult < 1.0)
        throw std::invalid_argument("TrainConfig: bad warm-restart schedule");
}

IniConfig TrainConfig::to_ini() const {
    IniConfig ini;
    auto set_d = [&ini](const std::string& s, const std::string& k, double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        ini.set(s, k, buf);
    };
    ini.set("run", "regime", regime_name(regime));
    set_d("run", "labeled_fraction", labeled_fraction);
    ini.set("run", "seed", std::to_string(seed));
    set_d("loss", "tau", tau);
    set_d("loss", "alpha", alpha);
    set_d("loss", "pseudo_threshold", pseudo_threshold);
    ini.set("selection", "n_point", std::to_string(n_point));
    ini.set("selection", "n_minibatch", std::to_string(n_minibatch));
    ini.set("selection", "n_sample", std::to_string(n_sample));
    ini.set("selection", "batch_size", std::to_string(batch_size));
    ini.set("selection", "queue_capacity", std::to_string(queue_capacity));
    ini.set("epochs", "representation", std::to_string(epochs_representation));
    ini.set("epochs", "finetune", std::to_string(epochs_finetune));
    ini.set("epochs", "joint", std::to_string(epochs_joint));
    ini.set("epochs", "supervised", std::to_string(epochs_supervised));
    set_d("optimizer", "lr_representation", lr_representation);
    set_d("optimizer", "lr_finetune", lr_finetune);
    set_d("optimizer", "warm_restart_period", warm_restart_period);
    set_d("optimizer", "warm_restart_mult", warm_restart_mult);
    set_d("optimizer", "adam_beta1", adam_beta1);
    set_d("optimizer", "adam_beta2", adam_beta2);
    set_d("optimizer", "adam_eps", adam_eps);
    ini.set("model", "json", model.to_json());
    return ini;
}

TrainConfig TrainConfig::from_ini(const IniConfig& ini) {
    TrainConfig c;
    c.regime = parse_regime(ini.get("run", "regime", "nonjoint_full"));
    c.labeled_fraction = ini.get_double("run", "labeled_fraction", c.labeled_fraction);
    c.seed = static_cast<uint64_t>(ini.get_int("run", "seed", static_cast<long>(c.seed)));
    c.tau = ini.get_double("loss", "tau", c.tau);
    c.alpha = ini.get_double("loss", "alpha", c.alpha);
    c.pseudo_threshold = ini.get_double("loss", "pseudo_threshold", c.pseudo_threshold);
    c.n_point = static_cast<int>(ini.get_int("selection", "n_point", c.n_point));
    c.n_minibatch = static_cast<int>(ini.get_int("selection", "n_minibatch", c.n_minibatch));
    c.n_sample = static_cast<int>(ini.get_int("selection", "n_sample", c.n_sample));
    c.batch_size = static_cast<int>(ini.get_int("selection", "batch_size", c.batch_size));
    c.queue_capacity = static_cast<int>(ini.get_int("selection", "queue_capacity", c.queue_capacity));
    c.epochs_representation =
        static_cast<int>(ini.get_int("epochs", "representation", c.epochs_representation));
    c.epochs_finetune = static_cast<int>(ini.get_int("epochs", "finetune", c.epochs_finetune));
    c.epochs_joint = static_cast<int>(ini.get_int("epochs", "joint", c.epochs_joint));
    c.epochs_supervised = static_cast<int>(ini.get_int("epochs", "supervised", c.epochs_supervised));
    c.lr_representation = ini.get_double("optimizer", "lr_representation", c.lr_representation);
    c.lr_finetune = ini.get_double("optimizer", "lr_finetune", c.lr_finetune);
    c.warm_restart_period = ini.get_double("optimizer", "warm_restart_period", c.warm_restart_period);
    c.warm_restart_mult = ini.get_double("optimizer", "warm_restart_mult", c.warm_restart_mult);
    c.adam_beta1 = ini.get_double("optimizer", "adam_beta1", c.adam_beta1);
    c.adam_beta2 = ini.get_double("optimizer", "adam_beta2", c.adam_beta2);
    c.adam_eps = ini.get_double("optimizer", "adam_eps", c.adam_eps);
    if (ini.has("model", "json")) c.model = ModelConfig::from_json(ini.get("model", "json"));
    return c;
}

double lr_schedule(double t, const LrSchedule& s) {
    if (t < 0.0) throw std::invalid_argument("lr_schedule: negative step");
    double period = s.period;
    double tcur = t;
    while (tcur >= period) {
        tcur -= period;
        period *= s.mult;
    }
    return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(M_PI * tcur / period));
}

AdamOptimizer::AdamOptimizer(ParamStore& store, double beta1, double beta2, double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param* p : store.all()) {
        m_.emplace_back(p->value.rows, p->value.cols);
        v_.emplace_back(p->value.rows, p->value.cols);
    }
}

void AdamOptimizer::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto params = store_->all();
    for (size_t k = 0; k < params.size(); ++k) {
        Param* p = params[k];
        if (!p->trainable) continue;
        if (p->frozen) {
            p->zero_grad();
            continue;
        }
        if (!p->grad.all_finite())
            throw std::runtime_error("optimizer_step: non-finite gradient for " + p->name);
        Array& m = m_[k];
        Array& v = v_[k];
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
        p->zero_grad();
    }
}

TraceWriter::TraceWriter(const std::string& path) : path_(path) {
    std::ofstream os(path_, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open trace file: " + path_);
}

void TraceWriter::append(int64_t step, double l_nce, double l_ce, double l_total, double lr) {
    std::ofstream os(path_, std::ios::app);
    nlohmann::json j;
    j["step"] = step;
    j["l_nce"] = l_nce;
    j["l_ce"] = l_ce;
    j["l_total"] = l_total;
    j["lr"] = lr;
    os << j.dump() << '\n';
    step_ = step + 1;
}

std::vector<TraceRecord> load_trace(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open trace: " + path);
    std::vector<TraceRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        out.push_back({j.at("step").get<int64_t>(), j.at("l_nce").get<double>(),
                       j.at("l_ce").get<double>(), j.at("l_total").get<double>(),
                       j.at("lr").get<double>()});
    }
    return out;
}

Array frame_points(const RadarFrame& frame, const std::vector<int>* indices) {
    const int n = indices ? static_cast<int>(indices->size()) : frame.size();
    Array pts(n, kPointFeatures);
    for (int r = 0; r < n; ++r) {
        const RadarPoint& p =
            frame.points[static_cast<size_t>(indices ? (*indices)[static_cast<size_t>(r)] : r)];
        pts.at(r, 0) = p.x;
        pts.at(r, 1) = p.y;
        pts.at(r, 2) = p.v_r;
        pts.at(r, 3) = p.rcs;
    }
    return pts;
}

namespace {

std::vector<const RadarFrame*> frame_ptrs(const FrameList& frames) {
    std::vector<const RadarFrame*> out;
    out.reserve(frames.size());
    for (const RadarFrame& f : frames) out.push_back(&f);
    return out;
}

// Seeded subsample: keeps at most cap labels, masking the rest to -1.
void cap_labels(std::vector<int>& labels, int cap, std::mt19937_64& rng) {
    std::vector<int> rows;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) rows.push_back(static_cast<int>(i));
    if (static_cast<int>(rows.size()) <= cap) return;
    std::shuffle(rows.begin(), rows.end(), rng);
    for (size_t i = static_cast<size_t>(cap); i < rows.size(); ++i)
        labels[static_cast<size_t>(rows[i])] = -1;
}

struct StepLoss {
    double l_nce = 0.0;
    double l_ce = 0.0;
    double l_total = 0.0;
};

// One representation / joint optimization step over a combined minibatch:
// `labeled` frames feed the cross-entropy term, `extra` frames (pseudo-labeled)
// only shape the contrastive positives/negatives.
StepLoss contrastive_step(Model& model, const TrainConfig& config,
                          const std::vector<const RadarFrame*>& labeled,
                          const std::vector<const RadarFrame*>& extra, bool include_ce,
                          FeatureQueue& queue, AdamOptimizer& opt, double lr,
                          std::mt19937_64& rng) {
    diff::Tape tape(diff::Mode::Training, rng());

    std::vector<diff::Val> frame_feats;
    std::vector<Candidate> candidates;
    std::vector<int> ce_labels;
    std::vector<bool> pseudo_rows;
    int row = 0;
    auto add_frames = [&](const std::vector<const RadarFrame*>& frames, bool genuine) {
        for (const RadarFrame* frame : frames) {
            std::vector<int> idx = dedup_indices(sample_frame(*frame, config.n_sample, rng));
            frame_feats.push_back(model.features(tape, tape.input(frame_points(*frame, &idx))));
            for (int i : idx) {
                const int cls = frame->labels.at(static_cast<size_t>(i));
                candidates.push_back({row, cls, frame->id, i});
                ce_labels.push_back(genuine ? cls : -1);
                pseudo_rows.push_back(!genuine);
                ++row;
            }
        }
    };
    add_frames(labeled, true);
    add_frames(extra, false);

    diff::Val feats = tape.concat_rows(frame_feats);
    diff::Val proj = model.project(tape, feats);

    SelectionSet selection;
    try {
        selection = select_balanced(candidates, queue, config.n_per_class(), rng);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) +
                                 " (warm-start violation: raise n_minibatch or lower n_point)");
    }

    // Selection feature matrix in entry order: gathered minibatch rows
    // interleaved with constant queue snapshots.
    std::vector<diff::Val> parts;
    std::vector<int> gather;
    std::vector<std::vector<double>> consts;
    auto flush_gather = [&]() {
        if (gather.empty()) return;
        parts.push_back(tape.gather_rows(proj, gather));
        gather.clear();
    };
    auto flush_consts = [&]() {
        if (consts.empty()) return;
        Array block(static_cast<int>(consts.size()), model.config().proj_dim);
        for (size_t r = 0; r < consts.size(); ++r)
            for (int c = 0; c < block.cols; ++c) block.at(static_cast<int>(r), c) = consts[r][static_cast<size_t>(c)];
        parts.push_back(tape.constant(std::move(block)));
        consts.clear();
    };
    for (const SelectionEntry& e : selection.entries) {
        if (e.provenance == Provenance::Minibatch) {
            flush_consts();
            gather.push_back(e.candidate_row);
        } else {
            flush_gather();
            consts.push_back(e.queue_feature);
        }
    }
    flush_gather();
    flush_consts();
    diff::Val sel_feats = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);

    std::vector<bool> anchors;
    anchors.reserve(selection.entries.size());
    for (const SelectionEntry& e : selection.entries)
        anchors.push_back(e.provenance == Provenance::Minibatch);

    diff::Val nce = info_nce_graph(tape, sel_feats, selection.labels(), anchors, config.tau);

    StepLoss loss;
    loss.l_nce = tape.value(nce).data[0];
    diff::Val objective = nce;
    if (include_ce) {
        cap_labels(ce_labels, config.effective_batch_size(), rng);
        diff::Val ce = tape.cross_entropy(model.classify(tape, feats), ce_labels);
        loss.l_ce = tape.value(ce).data[0];
        objective = tape.add(nce, tape.scale(ce, config.alpha));
    }
    loss.l_total = tape.value(objective).data[0];

    tape.backward(objective);
    opt.step(lr);

    // Queue snapshot of this minibatch's projected features (pre-step values).
    const Array& proj_vals = tape.value(proj);
    for (const Candidate& c : candidates) {
        std::vector<double> f(static_cast<size_t>(proj_vals.cols));
        for (int j = 0; j < proj_vals.cols; ++j) f[static_cast<size_t>(j)] = proj_vals.at(c.row, j);
        queue.push(std::move(f), c.class_id, pseudo_rows[static_cast<size_t>(c.row)]);
    }
    return loss;
}

// One cross-entropy optimization step; cached_feats (when given) replaces the
// backbone forward pass for frozen-backbone fine-tuning.
double ce_step(Model& model, const TrainConfig& config,
               const std::vector<const RadarFrame*>& batch,
               const std::vector<const Array*>* cached_feats, AdamOptimizer& opt, double lr,
               std::mt19937_64& rng) {
    diff::Tape tape(diff::Mode::Training, rng());
    std::vector<diff::Val> frame_feats;
    std::vector<int> labels;
    for (size_t k = 0; k < batch.size(); ++k) {
        const RadarFrame* frame = batch[k];
        if (cached_feats)
            frame_feats.push_back(tape.constant(*(*cached_feats)[k]));
        else
            frame_feats.push_back(model.features(tape, tape.input(frame_points(*frame))));
        for (int i = 0; i < frame->size(); ++i)
            labels.push_back(frame->labels.at(static_cast<size_t>(i)));
    }
    diff::Val feats = frame_feats.size() == 1 ? frame_feats[0] : tape.concat_rows(frame_feats);
    cap_labels(labels, config.effective_batch_size(), rng);
    diff::Val loss = tape.cross_entropy(model.classify(tape, feats), labels);
    const double value = tape.value(loss).data[0];
    tape.backward(loss);
    opt.step(lr);
    return value;
}

// Steps per epoch are sized by the schedule pool (the full training-set size
// when run from a regime) rather than the labeled subset, so the optimization
// budget is comparable across labeled fractions; short streams cycle.
int batches_per_epoch(int pool, int minibatch) {
    return std::max(1, (pool + minibatch - 1) / minibatch);
}

std::vector<const RadarFrame*> take_cycled(const std::vector<const RadarFrame*>& src, int b,
                                           int minibatch) {
    std::vector<const RadarFrame*> out;
    out.reserve(static_cast<size_t>(minibatch));
    for (int k = 0; k < minibatch; ++k)
        out.push_back(src[(static_cast<size_t>(b) * minibatch + k) % src.size()]);
    return out;
}

// Epoch-wise minibatch schedule for the single-stream (cross-entropy) phases.
template <typename StepFn>
void run_epochs(const FrameList& frames, int epochs, int minibatch, int schedule_frames,
                uint64_t seed, StepFn step) {
    std::vector<const RadarFrame*> ptrs = frame_ptrs(frames);
    if (ptrs.empty()) throw std::runtime_error("training phase: no frames");
    const int pool = std::max(schedule_frames, static_cast<int>(ptrs.size()));
    const int batches = batches_per_epoch(pool, minibatch);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
        std::shuffle(ptrs.begin(), ptrs.end(), rng);
        for (int b = 0; b < batches; ++b) {
            std::vector<const RadarFrame*> batch = take_cycled(ptrs, b, minibatch);
            const double t = epoch + static_cast<double>(b) / batches;
            step(epoch, t, batch, rng);
        }
    }
}

// Two-stream schedule for contrastive phases: each step draws `minibatch`
// frames from the labeled stream and `minibatch` from the extra stream (when
// present), cycling the shorter stream. Per-epoch shuffles keep determinism.
template <typename StepFn>
void run_two_stream_epochs(const FrameList& labeled, const FrameList& extra, int epochs,
                           int minibatch, int schedule_frames, uint64_t seed, StepFn step) {
    std::vector<const RadarFrame*> lab = frame_ptrs(labeled);
    std::vector<const RadarFrame*> ext = frame_ptrs(extra);
    if (lab.empty()) throw std::runtime_error("training phase: no labeled frames");
    const int pool = std::max({schedule_frames, static_cast<int>(lab.size()),
                               static_cast<int>(ext.size())});
    const int batches = batches_per_epoch(pool, minibatch);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
        std::shuffle(lab.begin(), lab.end(), rng);
        if (!ext.empty()) std::shuffle(ext.begin(), ext.end(), rng);
        for (int b = 0; b < batches; ++b) {
            std::vector<const RadarFrame*> lab_batch = take_cycled(lab, b, minibatch);
            std::vector<const RadarFrame*> ext_batch =
                ext.empty() ? std::vector<const RadarFrame*>{} : take_cycled(ext, b, minibatch);
            const double t = epoch + static_cast<double>(b) / batches;
            step(epoch, t, lab_batch, ext_batch, rng);
        }
    }
}

// Polyak tail averaging: a phase's final parameters are the mean of the
// iterates over its last epoch. The cosine warm-restart cycle can end
// mid-descent (40 epochs end a quarter into the [30, 70) cycle at a high
// learning rate), so the very last iterate is one noisy step inside the
// converged basin; the epoch mean is the basin center. Deltas are accumulated
// against the entry snapshot so parameters a phase never updates keep their
// exact bytes.
class TailAverager {
public:
    void observe(ParamStore& store, int epoch, int final_epoch) {
        if (epoch != final_epoch) return;
        auto params = store.all();
        if (base_.empty()) {
            base_.reserve(params.size());
            sum_.reserve(params.size());
            for (Param* p : params) {
                base_.push_back(p->value.data);
                sum_.emplace_back(p->value.data.size(), 0.0);
            }
        }
        for (size_t k = 0; k < params.size(); ++k)
            for (size_t i = 0; i < sum_[k].size(); ++i)
                sum_[k][i] += params[k]->value.data[i] - base_[k][i];
        ++count_;
    }

    void finalize(ParamStore& store) {
        if (count_ == 0) return;
        auto params = store.all();
        for (size_t k = 0; k < params.size(); ++k)
            for (size_t i = 0; i < sum_[k].size(); ++i)
                if (sum_[k][i] != 0.0)  // untouched parameters keep their exact bytes
                    params[k]->value.data[i] =
                        base_[k][i] + sum_[k][i] / static_cast<double>(count_);
    }

private:
    std::vector<std::vector<double>> base_, sum_;
    int count_ = 0;
};

}  // namespace

void train_representation(Model& model, const TrainConfig& config, const FrameList& labeled,
                          const FrameList& extra, TraceWriter* trace, int schedule_frames) {
    AdamOptimizer opt(model.params(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    const LrSchedule sched{config.lr_representation, 0.0, config.warm_restart_period,
                           config.warm_restart_mult};
    int64_t step_index = trace ? trace->steps() : 0;
    FeatureQueue queue(config.n_class(), config.queue_capacity);
    int last_epoch = -1;
    TailAverager avg;
    run_two_stream_epochs(
        labeled, extra, config.epochs_representation, config.n_minibatch, schedule_frames,
        mix_seed(config.seed, 0x11),
        [&](int epoch, double t, auto& lab_batch, auto& ext_batch, auto& rng) {
            if (epoch != last_epoch) {  // queue does not persist across epochs
                queue = FeatureQueue(config.n_class(), config.queue_capacity);
                last_epoch = epoch;
            }
            const double lr = lr_schedule(t, sched);
            const StepLoss loss =
                contrastive_step(model, config, lab_batch, ext_batch, false, queue, opt, lr, rng);
            if (trace) trace->append(step_index++, loss.l_nce, 0.0, loss.l_nce, lr);
            avg.observe(model.params(), epoch, config.epochs_representation - 1);
        });
    avg.finalize(model.params());
}

void finetune(Model& model, const TrainConfig& config, const FrameList& labeled,
              TraceWriter* trace, int schedule_frames) {
    model.set_freeze_backbone(true);
    // Backbone frozen: extract features once per frame.
    std::map<const RadarFrame*, Array> cache;
    for (const RadarFrame& f : labeled) cache.emplace(&f, model.extract_features(frame_points(f)));

    AdamOptimizer opt(model.params(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    const LrSchedule sched{config.lr_finetune, 0.0, config.warm_restart_period,
                           config.warm_restart_mult};
    int64_t step_index = trace ? trace->steps() : 0;
    TailAverager avg;
    run_epochs(labeled, config.epochs_finetune, config.n_minibatch, schedule_frames,
               mix_seed(config.seed, 0x22), [&](int epoch, double t, auto& batch, auto& rng) {
                   std::vector<const Array*> feats;
                   for (const RadarFrame* f : batch) feats.push_back(&cache.at(f));
                   const double lr = lr_schedule(t, sched);
                   const double ce = ce_step(model, config, batch, &feats, opt, lr, rng);
                   if (trace) trace->append(step_index++, 0.0, ce, ce, lr);
                   avg.observe(model.params(), epoch, config.epochs_finetune - 1);
               });
    avg.finalize(model.params());
}

void train_supervised(Model& model, const TrainConfig& config, const FrameList& labeled,
                      TraceWriter* trace, int schedule_frames) {
    AdamOptimizer opt(model.params(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    const LrSchedule sched{config.lr_representation, 0.0, config.warm_restart_period,
                           config.warm_restart_mult};
    int64_t step_index = trace ? trace->steps() : 0;
    TailAverager avg;
    run_epochs(labeled, config.epochs_supervised, config.n_minibatch, schedule_frames,
               mix_seed(config.seed, 0x33), [&](int epoch, double t, auto& batch, auto& rng) {
                   const double lr = lr_schedule(t, sched);
                   const double ce = ce_step(model, config, batch, nullptr, opt, lr, rng);
                   if (trace) trace->append(step_index++, 0.0, ce, ce, lr);
                   avg.observe(model.params(), epoch, config.epochs_supervised - 1);
               });
    avg.finalize(model.params());
}

void train_joint(Model& model, const TrainConfig& config, const FrameList& labeled,
                 const FrameList& extra, TraceWriter* trace, int schedule_frames) {
    if (config.alpha <= 0.0)
        throw std::invalid_argument("train_joint: alpha must be positive");
    AdamOptimizer opt(model.params(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    const LrSchedule sched{config.lr_representation, 0.0, config.warm_restart_period,
                           config.warm_restart_mult};
    int64_t step_index = trace ? trace->steps() : 0;
    FeatureQueue queue(config.n_class(), config.queue_capacity);
    int last_epoch = -1;
    TailAverager avg;
    run_two_stream_epochs(
        labeled, extra, config.epochs_joint, config.n_minibatch, schedule_frames,
        mix_seed(config.seed, 0x44),
        [&](int epoch, double t, auto& lab_batch, auto& ext_batch, auto& rng) {
            if (epoch != last_epoch) {
                queue = FeatureQueue(config.n_class(), config.queue_capacity);
                last_epoch = epoch;
            }
            const double lr = lr_schedule(t, sched);
            const StepLoss loss =
                contrastive_step(model, config, lab_batch, ext_batch, true, queue, opt, lr, rng);
            if (trace) trace->append(step_index++, loss.l_nce, loss.l_ce, loss.l_total, lr);
            avg.observe(model.params(), epoch, config.epochs_joint - 1);
        });
    avg.finalize(model.params());
}

std::vector<FrameSemantics> predict_semantics(Model& model, const FrameList& frames) {
    std::vector<FrameSemantics> out;
    out.reserve(frames.size());
    for (const RadarFrame& frame : frames) {
        FrameSemantics fs;
        fs.frame = &frame;
        if (frame.size() > 0) {
            fs.class_probs = model.class_probabilities(frame_points(frame));
            fs.predicted_classes.resize(static_cast<size_t>(frame.size()));
            for (int i = 0; i < frame.size(); ++i) {
                int best = 0;
                for (int c = 1; c < fs.class_probs.cols; ++c)
                    if (fs.class_probs.at(i, c) > fs.class_probs.at(i, best)) best = c;
                fs.predicted_classes[static_cast<size_t>(i)] = best;
            }
        }
        out.push_back(std::move(fs));
    }
    return out;
}

namespace {

FrameList filter_frames(const FrameList& frames, bool labeled) {
    FrameList out;
    for (const RadarFrame& f : frames)
        if (f.labeled() == labeled) out.push_back(f);
    return out;
}

// Representation learning followed by frozen-backbone fine-tuning.
Model train_nonjoint_full(const TrainConfig& config, const FrameList& labeled, TraceWriter* trace,
                          const std::string& repr_ckpt_path, int schedule_frames) {
    Model model(config.model, mix_seed(config.seed, 0x100));
    train_representation(model, config, labeled, FrameList{}, trace, schedule_frames);
    if (!repr_ckpt_path.empty()) model.save(repr_ckpt_path, config.to_ini().serialize());
    model.set_freeze_backbone(true);
    model.reset_classification_head(mix_seed(config.seed, 0x101));
    finetune(model, config, labeled, trace, schedule_frames);
    return model;
}

}  // namespace

RunArtifacts run_regime(const TrainConfig& config, const DatasetSplit& dataset,
                        const std::string& run_dir) {
    config.validate();
    fs::create_directories(run_dir);

    RunArtifacts art;
    art.run_dir = run_dir;
    art.config_path = (fs::path(run_dir) / "config.ini").string();
    art.trace_path = (fs::path(run_dir) / "trace.jsonl").string();
    art.final_checkpoint = (fs::path(run_dir) / "model.ckpt").string();
    art.params_path = (fs::path(run_dir) / "clustering_params.txt").string();
    art.metrics_path = (fs::path(run_dir) / "metrics.jsonl").string();
    config.to_ini().save(art.config_path);
    TraceWriter trace(art.trace_path);

    const FrameList labeled = filter_frames(dataset.train, true);
    const FrameList unlabeled = filter_frames(dataset.train, false);
    if (labeled.empty()) throw std::runtime_error("run_regime: no labeled training frames");
    const int pool = static_cast<int>(dataset.train.size());

    auto make_pseudo = [&](Model& bootstrap) -> FrameList {
        art.pseudo_path = (fs::path(run_dir) / "pseudo_labels.txt").string();
        const auto pseudo = generate_pseudo_labels(bootstrap, unlabeled, config.pseudo_threshold);
        save_pseudo_labels(pseudo, art.pseudo_path);
        return apply_pseudo_labels(unlabeled, pseudo);
    };

    std::optional<Model> model;
    switch (config.regime) {
        case Regime::Supervised: {
            model.emplace(config.model, mix_seed(config.seed, 0x100));
            train_supervised(*model, config, labeled, &trace, pool);
            break;
        }
        case Regime::NonjointFull: {
            art.repr_checkpoint = (fs::path(run_dir) / "repr.ckpt").string();
            model.emplace(train_nonjoint_full(config, labeled, &trace, art.repr_checkpoint, pool));
            break;
        }
        case Regime::NonjointSemi: {
            TrainConfig boot = config;
            boot.regime = Regime::NonjointFull;
            Model bootstrap = train_nonjoint_full(
                boot, labeled, &trace, (fs::path(run_dir) / "bootstrap.ckpt").string(), pool);
            const FrameList pseudo = make_pseudo(bootstrap);

            art.repr_checkpoint = (fs::path(run_dir) / "repr.ckpt").string();
            Model main(config.model, mix_seed(config.seed, 0x200));
            train_representation(main, config, labeled, pseudo, &trace, pool);
            main.save(art.repr_checkpoint, config.to_ini().serialize());
            main.set_freeze_backbone(true);
            main.reset_classification_head(mix_seed(config.seed, 0x201));
            finetune(main, config, labeled, &trace, pool);
            model.emplace(std::move(main));
            break;
        }
        case Regime::JointFull: {
            model.emplace(config.model, mix_seed(config.seed, 0x100));
            train_joint(*model, config, labeled, FrameList{}, &trace, pool);
            break;
        }
        case Regime::JointSemi: {
            TrainConfig boot = config;
            boot.regime = Regime::NonjointFull;
            Model bootstrap = train_nonjoint_full(
                boot, labeled, &trace, (fs::path(run_dir) / "bootstrap.ckpt").string(), pool);
            const FrameList pseudo = make_pseudo(bootstrap);

            Model main(config.model, mix_seed(config.seed, 0x200));
            train_joint(main, config, labeled, pseudo, &trace, pool);
            model.emplace(std::move(main));
            break;
        }
    }

    model->save(art.final_checkpoint, config.to_ini().serialize());

    const auto validation = predict_semantics(*model, dataset.validation);
    auto [best, val_map] = grid_search_per_class(validation, default_eps_grid(),
                                                 default_min_pts_grid(), default_vw_grid());
    art.best_params = best;
    art.validation_map = val_map;
    save_params(best, art.params_path);

    const auto test = predict_semantics(*model, dataset.test);
    std::vector<std::vector<GtInstance>> gt;
    std::vector<std::vector<PredInstance>> pred;
    for (const FrameSemantics& fs : test) {
        gt.push_back(gt_instances(*fs.frame));
        pred.push_back(
            extract_instances(fs.frame->points, fs.predicted_classes, fs.class_probs, best)
                .as_pred_instances());
    }
    art.test_metrics = evaluate_instances(gt, pred);
    art.test_metrics.save(art.metrics_path);
    return art;
}

}  // namespace rseg
