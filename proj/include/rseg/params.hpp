#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rseg/array.hpp"

namespace rseg {

struct Param {
    std::string name;
    Array value;
    Array grad;        // same shape as value
    bool trainable = true;
    bool frozen = false;  // trainable but masked out of optimizer steps and gradients

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Named parameter arrays with stable addresses. Also holds non-trainable state
// (batch-norm running statistics) so a checkpoint captures the whole model.
class ParamStore {
public:
    Param& create(const std::string& name, int rows, int cols, bool trainable = true);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    // Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)), seeded.
    void init_uniform(Param& p, std::mt19937_64& rng);

    std::vector<Param*> all();
    std::vector<const Param*> all() const;

    void zero_grads();
    void set_frozen(const std::string& prefix, bool frozen);

    // Flat binary checkpoint: versioned header, meta string, then
    // (name, shape, row-major float64) records, little-endian.
    void save(const std::string& path, const std::string& meta) const;
    // Loads values into a fresh store; returns the meta string.
    static ParamStore load(const std::string& path, std::string* meta_out = nullptr);

    std::string fingerprint() const;  // hash of every value byte, for freeze checks

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, size_t> index_;
};

// Per-feature batch normalization state. gamma/beta live in the ParamStore;
// running statistics are non-trainable store entries so checkpoints carry them.
struct BatchNormState {
    Param* gamma = nullptr;
    Param* beta = nullptr;
    Param* running_mean = nullptr;
    Param* running_var = nullptr;
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormState create(ParamStore& store, const std::string& prefix, int width);
    static BatchNormState attach(ParamStore& store, const std::string& prefix);
};

}  // namespace rseg
