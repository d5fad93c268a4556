#include "rseg/params.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rseg {

namespace {
constexpr char kMagic[8] = {'R', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
    uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void write_f64s(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        write_u64(os, bits);
    }
}
}  // namespace

Param& ParamStore::create(const std::string& name, int rows, int cols, bool trainable) {
    if (index_.count(name)) throw std::runtime_error("ParamStore: duplicate parameter " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Array(rows, cols);
    p->grad = Array(rows, cols);
    p->trainable = trainable;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Param& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
    return *params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("ParamStore: unknown parameter " + name);
    return *params_[it->second];
}

void ParamStore::init_uniform(Param& p, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (p.value.rows + p.value.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.value.data) v = dist(rng);
}

std::vector<Param*> ParamStore::all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Param*> ParamStore::all() const {
    std::vector<const Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->zero_grad();
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_)
        if (p->name.rfind(prefix, 0) == 0) p->frozen = frozen;
}

void ParamStore::save(const std::string& path, const std::string& meta) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_str(os, meta);
    write_u64(os, params_.size());
    for (const auto& p : params_) {
        write_str(os, p->name);
        write_u32(os, static_cast<uint32_t>(p->value.rows));
        write_u32(os, static_cast<uint32_t>(p->value.cols));
        write_u32(os, p->trainable ? 1u : 0u);
        write_f64s(os, p->value.data);
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path, std::string* meta_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    std::string meta = read_str(is);
    if (meta_out) *meta_out = meta;
    const uint64_t count = read_u64(is);
    ParamStore store;
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = read_str(is);
        const int rows = static_cast<int>(read_u32(is));
        const int cols = static_cast<int>(read_u32(is));
        const bool trainable = read_u32(is) != 0;
        Param& p = store.create(name, rows, cols, trainable);
        for (double& v : p.value.data) {
            uint64_t bits = read_u64(is);
            std::memcpy(&v, &bits, 8);
        }
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return store;
}

std::string ParamStore::fingerprint() const {
    // FNV-1a over the raw value bytes, in store order.
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& p : params_) {
        mix(p->name.data(), p->name.size());
        mix(p->value.data.data(), p->value.data.size() * sizeof(double));
    }
    std::ostringstream oss;
    oss << std::hex << h;
    return oss.str();
}

BatchNormState BatchNormState::create(ParamStore& store, const std::string& prefix, int width) {
    BatchNormState bn;
    bn.gamma = &store.create(prefix + ".gamma", 1, width);
    bn.beta = &store.create(prefix + ".beta", 1, width);
    bn.running_mean = &store.create(prefix + ".running_mean", 1, width, /*trainable=*/false);
    bn.running_var = &store.create(prefix + ".running_var", 1, width, /*trainable=*/false);
    for (double& v : bn.gamma->value.data) v = 1.0;
    for (double& v : bn.running_var->value.data) v = 1.0;
    return bn;
}

BatchNormState BatchNormState::attach(ParamStore& store, const std::string& prefix) {
    BatchNormState bn;
    bn.gamma = &store.get(prefix + ".gamma");
    bn.beta = &store.get(prefix + ".beta");
    bn.running_mean = &store.get(prefix + ".running_mean");
    bn.running_var = &store.get(prefix + ".running_var");
    return bn;
}

}  // namespace rseg
