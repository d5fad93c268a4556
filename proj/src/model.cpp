#include "rseg/model.hpp"

#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace rseg {

namespace {
// Fixed input normalization so raw meters / m/s / dBsm land near unit scale.
constexpr double kOffsets[kPointFeatures] = {40.0, 0.0, 0.0, 5.0};
constexpr double kScales[kPointFeatures] = {40.0, 40.0, 10.0, 10.0};
}  // namespace

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["input_features"] = input_features;
    j["extractor_h1"] = extractor_h1;
    j["extractor_h2"] = extractor_h2;
    j["extractor_h3"] = extractor_h3;
    j["feature_dim"] = feature_dim;
    j["proj_hidden"] = proj_hidden;
    j["proj_dim"] = proj_dim;
    j["class_hidden"] = class_hidden;
    j["dropout"] = dropout;
    j["n_class"] = n_class;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
    nlohmann::json j = nlohmann::json::parse(s);
    ModelConfig c;
    c.input_features = j.at("input_features").get<int>();
    c.extractor_h1 = j.at("extractor_h1").get<int>();
    c.extractor_h2 = j.at("extractor_h2").get<int>();
    c.extractor_h3 = j.at("extractor_h3").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.proj_dim = j.at("proj_dim").get<int>();
    c.proj_hidden = j.at("proj_hidden").get<int>();
    c.class_hidden = j.at("class_hidden").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.n_class = j.at("n_class").get<int>();
    return c;
}

Model::Model(const ModelConfig& config, uint64_t seed)
    : config_(config) {
    auto mk = [this](const std::string& name, int r, int c) { store_.create(name, r, c); };
    mk("extractor.w1", config_.input_features, config_.extractor_h1);
    mk("extractor.b1", 1, config_.extractor_h1);
    mk("extractor.w2", config_.extractor_h1, config_.extractor_h2);
    mk("extractor.b2", 1, config_.extractor_h2);
    mk("extractor.w3", 2 * config_.extractor_h2, config_.extractor_h3);
    mk("extractor.b3", 1, config_.extractor_h3);
    mk("extractor.w4", config_.extractor_h3, config_.feature_dim);
    mk("extractor.b4", 1, config_.feature_dim);
    mk("proj.w1", config_.feature_dim, config_.proj_hidden);
    mk("proj.b1", 1, config_.proj_hidden);
    mk("proj.w2", config_.proj_hidden, config_.proj_dim);
    mk("proj.b2", 1, config_.proj_dim);
    mk("head.w1", config_.feature_dim, config_.class_hidden);
    mk("head.b1", 1, config_.class_hidden);
    head_bn_ = BatchNormState::create(store_, "head.bn", config_.class_hidden);
    mk("head.w2", config_.class_hidden, config_.n_class);
    mk("head.b2", 1, config_.n_class);
    init_params(seed);
}

Model::Model(ModelConfig config, ParamStore store)
    : config_(std::move(config)), store_(std::move(store)) {
    head_bn_ = BatchNormState::attach(store_, "head.bn");
}

void Model::init_params(uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (Param* p : store_.all()) {
        if (!p->trainable) continue;
        if (p->name.find(".b") != std::string::npos || p->name.find(".bn.") != std::string::npos)
            continue;  // biases stay zero, bn gamma/beta keep their identity init
        store_.init_uniform(*p, rng);
    }
    // The logit layer starts at zero so early predictions reflect learned
    // weights rather than init noise; this matters most for the low-lr
    // fine-tuning phase, where cumulative updates are small.
    std::fill(store_.get("head.w2").value.data.begin(), store_.get("head.w2").value.data.end(),
              0.0);
}

diff::Val Model::features(diff::Tape& tape, diff::Val points) {
    // Copy the shape: node references do not survive later tape appends.
    const int n_rows = tape.value(points).rows;
    const int n_cols = tape.value(points).cols;
    if (n_cols != config_.input_features)
        throw std::runtime_error("extract_features: expected " +
                                 std::to_string(config_.input_features) +
                                 " point features, got " + std::to_string(n_cols));
    Array shift(1, config_.input_features);
    Array inv(n_rows, config_.input_features);
    for (int j = 0; j < config_.input_features; ++j) {
        const double off = j < kPointFeatures ? kOffsets[j] : 0.0;
        const double sc = j < kPointFeatures ? kScales[j] : 1.0;
        shift.at(0, j) = -off / sc;
        for (int i = 0; i < n_rows; ++i) inv.at(i, j) = 1.0 / sc;
    }
    diff::Val x = tape.add_rowvec(tape.mul(points, tape.constant(inv)), tape.constant(shift));
    diff::Val h1 = tape.relu(tape.add_rowvec(tape.matmul(x, tape.param(store_.get("extractor.w1"))),
                                             tape.param(store_.get("extractor.b1"))));
    diff::Val h2 = tape.relu(tape.add_rowvec(tape.matmul(h1, tape.param(store_.get("extractor.w2"))),
                                             tape.param(store_.get("extractor.b2"))));
    diff::Val global = tape.tile_rows(tape.col_max(h2), n_rows);
    diff::Val joined = tape.concat_cols(h2, global);
    diff::Val h3 = tape.relu(tape.add_rowvec(tape.matmul(joined, tape.param(store_.get("extractor.w3"))),
                                             tape.param(store_.get("extractor.b3"))));
    return tape.add_rowvec(tape.matmul(h3, tape.param(store_.get("extractor.w4"))),
                           tape.param(store_.get("extractor.b4")));
}

diff::Val Model::project(diff::Tape& tape, diff::Val feats) {
    diff::Val h = tape.relu(tape.add_rowvec(tape.matmul(feats, tape.param(store_.get("proj.w1"))),
                                            tape.param(store_.get("proj.b1"))));
    diff::Val out = tape.add_rowvec(tape.matmul(h, tape.param(store_.get("proj.w2"))),
                                    tape.param(store_.get("proj.b2")));
    return tape.l2_normalize_rows(out);
}

diff::Val Model::classify(diff::Tape& tape, diff::Val feats) {
    diff::Val h = tape.add_rowvec(tape.matmul(feats, tape.param(store_.get("head.w1"))),
                                  tape.param(store_.get("head.b1")));
    h = tape.batch_norm(h, head_bn_);
    h = tape.relu(h);
    h = tape.dropout(h, config_.dropout);
    return tape.add_rowvec(tape.matmul(h, tape.param(store_.get("head.w2"))),
                           tape.param(store_.get("head.b2")));
}

Array Model::extract_features(const Array& points) {
    diff::Tape tape(diff::Mode::Evaluation);
    return tape.value(features(tape, tape.constant(points)));
}

Array Model::class_logits(const Array& points) {
    diff::Tape tape(diff::Mode::Evaluation);
    return tape.value(classify(tape, features(tape, tape.constant(points))));
}

Array Model::class_probabilities(const Array& points) {
    diff::Tape tape(diff::Mode::Evaluation);
    return tape.value(tape.softmax_rows(classify(tape, features(tape, tape.constant(points)))));
}

void Model::set_freeze_backbone(bool frozen) {
    freeze_backbone_ = frozen;
    store_.set_frozen("extractor.", frozen);
}

void Model::reset_classification_head(uint64_t seed) {
    std::mt19937_64 rng(seed);
    store_.init_uniform(store_.get("head.w1"), rng);
    std::fill(store_.get("head.w2").value.data.begin(), store_.get("head.w2").value.data.end(),
              0.0);
    for (const char* name : {"head.b1", "head.b2", "head.bn.beta", "head.bn.running_mean"})
        std::fill(store_.get(name).value.data.begin(), store_.get(name).value.data.end(), 0.0);
    for (const char* name : {"head.bn.gamma", "head.bn.running_var"})
        std::fill(store_.get(name).value.data.begin(), store_.get(name).value.data.end(), 1.0);
}

std::string Model::backbone_fingerprint() const {
    uint64_t h = 1469598103934665603ull;
    for (const Param* p : store_.all()) {
        if (p->name.rfind("extractor.", 0) != 0) continue;
        const unsigned char* b = reinterpret_cast<const unsigned char*>(p->value.data.data());
        for (size_t i = 0; i < p->value.data.size() * sizeof(double); ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void Model::save(const std::string& path, const std::string& extra_meta) const {
    nlohmann::json meta;
    meta["model"] = nlohmann::json::parse(config_.to_json());
    if (!extra_meta.empty()) meta["extra"] = extra_meta;
    store_.save(path, meta.dump());
}

Model Model::load(const std::string& path, std::string* extra_meta) {
    std::string meta;
    ParamStore store = ParamStore::load(path, &meta);
    nlohmann::json j = nlohmann::json::parse(meta);
    ModelConfig cfg = ModelConfig::from_json(j.at("model").dump());
    if (extra_meta) *extra_meta = j.value("extra", "");
    return Model(std::move(cfg), std::move(store));
}

}  // namespace rseg
