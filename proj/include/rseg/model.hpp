#pragma once

#include <cstdint>
#include <string>

#include "rseg/data.hpp"
#include "rseg/diff.hpp"
#include "rseg/params.hpp"

namespace rseg {

struct ModelConfig {
    int input_features = kPointFeatures;
    int extractor_h1 = 32;
    int extractor_h2 = 64;
    int extractor_h3 = 64;
    int feature_dim = 64;   // D
    int proj_hidden = 64;
    int proj_dim = 32;      // d_proj
    int class_hidden = 64;
    double dropout = 0.3;
    int n_class = kNumClasses;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& s);
};

// Point-set segmentation model: shared-MLP extractor with global max-pool
// context, a projection head for representation learning and a point-wise
// classification head. The two heads are independent; inference uses only the
// extractor and the classification head.
class Model {
public:
    Model(const ModelConfig& config, uint64_t seed);

    // Graph builders; points is [n x input_features], any n >= 1.
    diff::Val features(diff::Tape& tape, diff::Val points);
    diff::Val project(diff::Tape& tape, diff::Val features);
    diff::Val classify(diff::Tape& tape, diff::Val features);

    // Evaluation-mode conveniences on raw point matrices.
    Array extract_features(const Array& points);
    Array class_logits(const Array& points);
    Array class_probabilities(const Array& points);  // softmax rows

    void set_freeze_backbone(bool frozen);
    bool freeze_backbone() const { return freeze_backbone_; }
    // Drops the old classification head and re-initializes a fresh one.
    void reset_classification_head(uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    std::string backbone_fingerprint() const;

    void save(const std::string& path, const std::string& extra_meta = "") const;
    static Model load(const std::string& path, std::string* extra_meta = nullptr);

private:
    Model(ModelConfig config, ParamStore store);
    void init_params(uint64_t seed);

    ModelConfig config_;
    ParamStore store_;
    BatchNormState head_bn_;
    bool freeze_backbone_ = false;
};

}  // namespace rseg
