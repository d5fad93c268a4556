#include "rseg/diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rseg::diff {

namespace {
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double softplus_stable(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
}  // namespace

Tape::Tape(Mode mode, uint64_t seed) : mode_(mode), rng_(seed) {}

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::MatMul: return "matmul";
        case Op::MatMulNT: return "matmul_nt";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::AddRowVec: return "add_rowvec";
        case Op::Scale: return "scale";
        case Op::Relu: return "relu";
        case Op::Softplus: return "softplus";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::SoftmaxRows: return "softmax_rows";
        case Op::LogSumExpMasked: return "logsumexp_rows_masked";
        case Op::ColMax: return "col_max";
        case Op::TileRows: return "tile_rows";
        case Op::BroadcastCol: return "broadcast_col";
        case Op::ConcatCols: return "concat_cols";
        case Op::ConcatRows: return "concat_rows";
        case Op::GatherRows: return "gather_rows";
        case Op::L2NormRows: return "l2_normalize_rows";
        case Op::Dropout: return "dropout";
        case Op::BatchNorm: return "batch_norm";
        case Op::Dot: return "dot";
        case Op::WeightedSum: return "weighted_sum";
        case Op::CrossEntropy: return "cross_entropy";
    }
    return "?";
}

void Tape::fail(const std::string& op, const std::string& what) const {
    throw std::runtime_error("tape op " + op + " (node " + std::to_string(nodes_.size()) + "): " + what);
}

void Tape::check(Val v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw std::runtime_error("tape: invalid node handle");
}

int Tape::add_node(Node n) {
    if (n.op != Op::Constant) {
        for (int in : n.in)
            if (nodes_[static_cast<size_t>(in)].needs_grad) n.needs_grad = true;
    }
    if (n.op == Op::Input || n.op == Op::Param || n.op == Op::BatchNorm) n.needs_grad = true;
    if (!n.val.all_finite())
        fail(op_name(n.op), "non-finite value produced");
    if (n.needs_grad) n.grad = Array(n.val.rows, n.val.cols);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Val Tape::constant(Array a) {
    Node n;
    n.op = Op::Constant;
    n.val = std::move(a);
    return {add_node(std::move(n))};
}

Val Tape::input(Array a) {
    Node n;
    n.op = Op::Input;
    n.val = std::move(a);
    return {add_node(std::move(n))};
}

Val Tape::param(Param& p) {
    Node n;
    n.op = Op::Param;
    n.val = p.value;
    n.p = &p;
    return {add_node(std::move(n))};
}

Val Tape::matmul(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (A.cols != B.rows) fail("matmul", "inner dimensions disagree");
    Node n;
    n.op = Op::MatMul;
    n.in = {a.id, b.id};
    n.val = Array(A.rows, B.cols);
    matmul_acc(A, B, n.val);
    return {add_node(std::move(n))};
}

Val Tape::matmul_nt(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (A.cols != B.cols) fail("matmul_nt", "inner dimensions disagree");
    Node n;
    n.op = Op::MatMulNT;
    n.in = {a.id, b.id};
    n.val = Array(A.rows, B.rows);
    matmul_nt_acc(A, B, n.val);
    return {add_node(std::move(n))};
}

Val Tape::add(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (!A.same_shape(B)) fail("add", "shape mismatch");
    Node n;
    n.op = Op::Add;
    n.in = {a.id, b.id};
    n.val = A;
    for (size_t i = 0; i < B.size(); ++i) n.val.data[i] += B.data[i];
    return {add_node(std::move(n))};
}

Val Tape::sub(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (!A.same_shape(B)) fail("sub", "shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.in = {a.id, b.id};
    n.val = A;
    for (size_t i = 0; i < B.size(); ++i) n.val.data[i] -= B.data[i];
    return {add_node(std::move(n))};
}

Val Tape::mul(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (!A.same_shape(B)) fail("mul", "shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.in = {a.id, b.id};
    n.val = A;
    for (size_t i = 0; i < B.size(); ++i) n.val.data[i] *= B.data[i];
    return {add_node(std::move(n))};
}

Val Tape::add_rowvec(Val a, Val bias) {
    check(a); check(bias);
    const Array& A = node(a).val;
    const Array& B = node(bias).val;
    if (B.rows != 1 || B.cols != A.cols) fail("add_rowvec", "bias must be [1,cols]");
    Node n;
    n.op = Op::AddRowVec;
    n.in = {a.id, bias.id};
    n.val = A;
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) n.val.at(i, j) += B.at(0, j);
    return {add_node(std::move(n))};
}

Val Tape::scale(Val a, double s) {
    check(a);
    Node n;
    n.op = Op::Scale;
    n.in = {a.id};
    n.scalar = s;
    n.val = node(a).val;
    for (double& v : n.val.data) v *= s;
    return {add_node(std::move(n))};
}

Val Tape::relu(Val a) {
    check(a);
    Node n;
    n.op = Op::Relu;
    n.in = {a.id};
    n.val = node(a).val;
    for (double& v : n.val.data) v = std::max(v, 0.0);
    return {add_node(std::move(n))};
}

Val Tape::softplus(Val a) {
    check(a);
    Node n;
    n.op = Op::Softplus;
    n.in = {a.id};
    n.val = node(a).val;
    for (double& v : n.val.data) v = softplus_stable(v);
    return {add_node(std::move(n))};
}

Val Tape::exp(Val a) {
    check(a);
    Node n;
    n.op = Op::Exp;
    n.in = {a.id};
    n.val = node(a).val;
    for (double& v : n.val.data) v = std::exp(v);
    return {add_node(std::move(n))};
}

Val Tape::log(Val a) {
    check(a);
    Node n;
    n.op = Op::Log;
    n.in = {a.id};
    n.val = node(a).val;
    for (double& v : n.val.data) v = std::log(v);
    return {add_node(std::move(n))};
}

Val Tape::softmax_rows(Val a) {
    check(a);
    const Array& A = node(a).val;
    Node n;
    n.op = Op::SoftmaxRows;
    n.in = {a.id};
    n.val = Array(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < A.cols; ++j) m = std::max(m, A.at(i, j));
        double z = 0.0;
        for (int j = 0; j < A.cols; ++j) z += std::exp(A.at(i, j) - m);
        for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = std::exp(A.at(i, j) - m) / z;
    }
    return {add_node(std::move(n))};
}

Val Tape::logsumexp_rows_masked(Val scores, Val mask) {
    check(scores); check(mask);
    const Array& S = node(scores).val;
    const Array& M = node(mask).val;
    if (!S.same_shape(M)) fail("logsumexp_rows_masked", "mask shape mismatch");
    Node n;
    n.op = Op::LogSumExpMasked;
    n.in = {scores.id, mask.id};
    n.val = Array(S.rows, 1);
    for (int i = 0; i < S.rows; ++i) {
        double m = -1e300;
        bool any = false;
        for (int j = 0; j < S.cols; ++j)
            if (M.at(i, j) != 0.0) { m = std::max(m, S.at(i, j)); any = true; }
        if (!any) fail("logsumexp_rows_masked", "empty mask in row " + std::to_string(i));
        double z = 0.0;
        for (int j = 0; j < S.cols; ++j)
            if (M.at(i, j) != 0.0) z += std::exp(S.at(i, j) - m);
        n.val.at(i, 0) = m + std::log(z);
    }
    return {add_node(std::move(n))};
}

Val Tape::col_max(Val a) {
    check(a);
    const Array& A = node(a).val;
    if (A.rows < 1) fail("col_max", "empty input");
    Node n;
    n.op = Op::ColMax;
    n.in = {a.id};
    n.val = Array(1, A.cols);
    n.idx.resize(static_cast<size_t>(A.cols));
    for (int j = 0; j < A.cols; ++j) {
        int best = 0;
        for (int i = 1; i < A.rows; ++i)
            if (A.at(i, j) > A.at(best, j)) best = i;
        n.idx[static_cast<size_t>(j)] = best;
        n.val.at(0, j) = A.at(best, j);
    }
    return {add_node(std::move(n))};
}

Val Tape::tile_rows(Val row, int nrows) {
    check(row);
    const Array& A = node(row).val;
    if (A.rows != 1) fail("tile_rows", "input must be a single row");
    Node n;
    n.op = Op::TileRows;
    n.in = {row.id};
    n.val = Array(nrows, A.cols);
    for (int i = 0; i < nrows; ++i)
        for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = A.at(0, j);
    return {add_node(std::move(n))};
}

Val Tape::broadcast_col(Val col, int m) {
    check(col);
    const Array& A = node(col).val;
    if (A.cols != 1) fail("broadcast_col", "input must be a single column");
    Node n;
    n.op = Op::BroadcastCol;
    n.in = {col.id};
    n.val = Array(A.rows, m);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < m; ++j) n.val.at(i, j) = A.at(i, 0);
    return {add_node(std::move(n))};
}

Val Tape::concat_cols(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (A.rows != B.rows) fail("concat_cols", "row counts disagree");
    Node n;
    n.op = Op::ConcatCols;
    n.in = {a.id, b.id};
    n.val = Array(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = A.at(i, j);
        for (int j = 0; j < B.cols; ++j) n.val.at(i, A.cols + j) = B.at(i, j);
    }
    return {add_node(std::move(n))};
}

Val Tape::concat_rows(const std::vector<Val>& parts) {
    if (parts.empty()) throw std::runtime_error("tape op concat_rows: no inputs");
    int rows = 0;
    const int cols = node(parts[0]).val.cols;
    for (Val v : parts) {
        check(v);
        if (node(v).val.cols != cols) fail("concat_rows", "column counts disagree");
        rows += node(v).val.rows;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.val = Array(rows, cols);
    int r = 0;
    for (Val v : parts) {
        n.in.push_back(v.id);
        const Array& A = node(v).val;
        std::copy(A.data.begin(), A.data.end(), n.val.data.begin() + static_cast<size_t>(r) * cols);
        r += A.rows;
    }
    return {add_node(std::move(n))};
}

Val Tape::gather_rows(Val a, std::vector<int> indices) {
    check(a);
    const Array& A = node(a).val;
    Node n;
    n.op = Op::GatherRows;
    n.in = {a.id};
    n.val = Array(static_cast<int>(indices.size()), A.cols);
    for (size_t i = 0; i < indices.size(); ++i) {
        const int r = indices[i];
        if (r < 0 || r >= A.rows) fail("gather_rows", "index out of range");
        for (int j = 0; j < A.cols; ++j) n.val.at(static_cast<int>(i), j) = A.at(r, j);
    }
    n.idx = std::move(indices);
    return {add_node(std::move(n))};
}

Val Tape::l2_normalize_rows(Val a) {
    check(a);
    const Array& A = node(a).val;
    Node n;
    n.op = Op::L2NormRows;
    n.in = {a.id};
    n.val = Array(A.rows, A.cols);
    n.aux = Array(A.rows, 1);  // clamped norms, needed for backward
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols; ++j) s += A.at(i, j) * A.at(i, j);
        const double norm = std::max(std::sqrt(s), 1e-12);
        n.aux.at(i, 0) = norm;
        for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = A.at(i, j) / norm;
    }
    return {add_node(std::move(n))};
}

Val Tape::dropout(Val a, double p) {
    check(a);
    if (p < 0.0 || p >= 1.0) fail("dropout", "rate must be in [0,1)");
    Node n;
    n.op = Op::Dropout;
    n.in = {a.id};
    n.scalar = p;
    n.val = node(a).val;
    if (mode_ == Mode::Training && p > 0.0) {
        const double keep = 1.0 - p;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        n.aux = Array(n.val.rows, n.val.cols);
        for (size_t i = 0; i < n.val.size(); ++i) {
            const double m = u(rng_) < keep ? 1.0 / keep : 0.0;
            n.aux.data[i] = m;
            n.val.data[i] *= m;
        }
    }
    return {add_node(std::move(n))};
}

Val Tape::batch_norm(Val a, BatchNormState& bn) {
    check(a);
    const Array& A = node(a).val;
    const int c = A.cols;
    const int rows = A.rows;
    if (bn.gamma->value.cols != c) fail("batch_norm", "state width mismatch");
    Node n;
    n.op = Op::BatchNorm;
    n.in = {a.id};
    n.bn = &bn;
    n.val = Array(rows, c);
    n.aux = Array(rows + 1, c);  // rows: xhat; last row: inverse stddev per column
    if (mode_ == Mode::Training) {
        for (int j = 0; j < c; ++j) {
            double mu = 0.0;
            for (int i = 0; i < rows; ++i) mu += A.at(i, j);
            mu /= rows;
            double var = 0.0;
            for (int i = 0; i < rows; ++i) {
                const double d = A.at(i, j) - mu;
                var += d * d;
            }
            var /= rows;
            const double invstd = 1.0 / std::sqrt(var + bn.eps);
            n.aux.at(rows, j) = invstd;
            for (int i = 0; i < rows; ++i) {
                const double xh = (A.at(i, j) - mu) * invstd;
                n.aux.at(i, j) = xh;
                n.val.at(i, j) = bn.gamma->value.at(0, j) * xh + bn.beta->value.at(0, j);
            }
            const double unbiased = rows > 1 ? var * rows / (rows - 1) : var;
            bn.running_mean->value.at(0, j) =
                (1.0 - bn.momentum) * bn.running_mean->value.at(0, j) + bn.momentum * mu;
            bn.running_var->value.at(0, j) =
                (1.0 - bn.momentum) * bn.running_var->value.at(0, j) + bn.momentum * unbiased;
        }
    } else {
        for (int j = 0; j < c; ++j) {
            const double invstd = 1.0 / std::sqrt(bn.running_var->value.at(0, j) + bn.eps);
            n.aux.at(rows, j) = invstd;
            const double mu = bn.running_mean->value.at(0, j);
            for (int i = 0; i < rows; ++i) {
                const double xh = (A.at(i, j) - mu) * invstd;
                n.aux.at(i, j) = xh;
                n.val.at(i, j) = bn.gamma->value.at(0, j) * xh + bn.beta->value.at(0, j);
            }
        }
    }
    return {add_node(std::move(n))};
}

Val Tape::dot(Val a, Val b) {
    check(a); check(b);
    const Array& A = node(a).val;
    const Array& B = node(b).val;
    if (!A.same_shape(B)) fail("dot", "shape mismatch");
    Node n;
    n.op = Op::Dot;
    n.in = {a.id, b.id};
    n.val = Array(1, 1);
    for (size_t i = 0; i < A.size(); ++i) n.val.data[0] += A.data[i] * B.data[i];
    return {add_node(std::move(n))};
}

Val Tape::weighted_sum(Val a, Val weights) {
    check(a); check(weights);
    const Array& A = node(a).val;
    const Array& W = node(weights).val;
    if (!A.same_shape(W)) fail("weighted_sum", "shape mismatch");
    Node n;
    n.op = Op::WeightedSum;
    n.in = {a.id, weights.id};
    n.val = Array(1, 1);
    for (size_t i = 0; i < A.size(); ++i) n.val.data[0] += A.data[i] * W.data[i];
    return {add_node(std::move(n))};
}

Val Tape::cross_entropy(Val logits, std::vector<int> labels) {
    check(logits);
    const Array& Z = node(logits).val;
    if (static_cast<int>(labels.size()) != Z.rows) fail("cross_entropy", "one label per row required");
    int labeled = 0;
    for (int y : labels)
        if (y >= 0) {
            if (y >= Z.cols) fail("cross_entropy", "label out of range");
            ++labeled;
        }
    if (labeled == 0) fail("cross_entropy", "no labeled rows");
    Node n;
    n.op = Op::CrossEntropy;
    n.in = {logits.id};
    n.val = Array(1, 1);
    n.aux = Array(Z.rows, Z.cols);  // row softmax, reused in backward
    double total = 0.0;
    for (int i = 0; i < Z.rows; ++i) {
        double m = -1e300;
        for (int j = 0; j < Z.cols; ++j) m = std::max(m, Z.at(i, j));
        double z = 0.0;
        for (int j = 0; j < Z.cols; ++j) z += std::exp(Z.at(i, j) - m);
        for (int j = 0; j < Z.cols; ++j) n.aux.at(i, j) = std::exp(Z.at(i, j) - m) / z;
        const int y = labels[static_cast<size_t>(i)];
        if (y >= 0) total += m + std::log(z) - Z.at(i, y);
    }
    n.val.data[0] = total / labeled;
    n.scalar = labeled;
    n.idx = std::move(labels);
    return {add_node(std::move(n))};
}

const Array& Tape::value(Val v) const {
    check(v);
    return node(v).val;
}

const Array& Tape::grad(Val v) const {
    check(v);
    const Node& n = node(v);
    if (!n.needs_grad) throw std::runtime_error("tape: node carries no gradient");
    return n.grad;
}

void Tape::backward(Val loss, double seed_scale) {
    check(loss);
    if (backward_done_) throw std::runtime_error("tape: backward already executed");
    Node& l = node(loss);
    if (l.val.rows != 1 || l.val.cols != 1)
        throw std::runtime_error("tape: backward requires a scalar loss node");
    if (!l.needs_grad)
        throw std::runtime_error("tape: loss does not depend on any gradient-carrying node");
    backward_done_ = true;
    l.grad.data[0] = seed_scale;
    for (int id = loss.id; id >= 0; --id) {
        if (!nodes_[static_cast<size_t>(id)].needs_grad) continue;
        backprop_node(id);
    }
    // Flush into parameter storage; frozen parameters stay exactly zero.
    for (Node& n : nodes_) {
        if (n.op == Op::Param && !n.p->frozen)
            for (size_t i = 0; i < n.grad.size(); ++i) n.p->grad.data[i] += n.grad.data[i];
        if (n.bn) {
            if (n.bn->gamma->frozen) n.bn->gamma->zero_grad();
            if (n.bn->beta->frozen) n.bn->beta->zero_grad();
        }
    }
}

void Tape::backprop_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const Array& g = n.grad;
    auto in_val = [this](int i) -> const Array& { return nodes_[static_cast<size_t>(i)].val; };
    auto in_grad = [this](int i) -> Array* {
        Node& m = nodes_[static_cast<size_t>(i)];
        return m.needs_grad ? &m.grad : nullptr;
    };
    switch (n.op) {
        case Op::Constant:
        case Op::Input:
        case Op::Param:
            break;
        case Op::MatMul: {
            if (Array* da = in_grad(n.in[0])) matmul_nt_acc(g, in_val(n.in[1]), *da);
            if (Array* db = in_grad(n.in[1])) matmul_tn_acc(in_val(n.in[0]), g, *db);
            break;
        }
        case Op::MatMulNT: {
            if (Array* da = in_grad(n.in[0])) matmul_acc(g, in_val(n.in[1]), *da);
            if (Array* db = in_grad(n.in[1])) matmul_tn_acc(g, in_val(n.in[0]), *db);
            break;
        }
        case Op::Add: {
            for (int k = 0; k < 2; ++k)
                if (Array* d = in_grad(n.in[static_cast<size_t>(k)]))
                    for (size_t i = 0; i < g.size(); ++i) d->data[i] += g.data[i];
            break;
        }
        case Op::Sub: {
            if (Array* da = in_grad(n.in[0]))
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
            if (Array* db = in_grad(n.in[1]))
                for (size_t i = 0; i < g.size(); ++i) db->data[i] -= g.data[i];
            break;
        }
        case Op::Mul: {
            if (Array* da = in_grad(n.in[0])) {
                const Array& b = in_val(n.in[1]);
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] * b.data[i];
            }
            if (Array* db = in_grad(n.in[1])) {
                const Array& a = in_val(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) db->data[i] += g.data[i] * a.data[i];
            }
            break;
        }
        case Op::AddRowVec: {
            if (Array* da = in_grad(n.in[0]))
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
            if (Array* db = in_grad(n.in[1]))
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) db->at(0, j) += g.at(i, j);
            break;
        }
        case Op::Scale: {
            if (Array* da = in_grad(n.in[0]))
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += n.scalar * g.data[i];
            break;
        }
        case Op::Relu: {
            if (Array* da = in_grad(n.in[0])) {
                const Array& x = in_val(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i)
                    if (x.data[i] > 0.0) da->data[i] += g.data[i];
            }
            break;
        }
        case Op::Softplus: {
            if (Array* da = in_grad(n.in[0])) {
                const Array& x = in_val(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += sigmoid(x.data[i]) * g.data[i];
            }
            break;
        }
        case Op::Exp: {
            if (Array* da = in_grad(n.in[0]))
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += n.val.data[i] * g.data[i];
            break;
        }
        case Op::Log: {
            if (Array* da = in_grad(n.in[0])) {
                const Array& x = in_val(n.in[0]);
                for (size_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i] / x.data[i];
            }
            break;
        }
        case Op::SoftmaxRows: {
            if (Array* da = in_grad(n.in[0])) {
                for (int i = 0; i < g.rows; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < g.cols; ++j) s += g.at(i, j) * n.val.at(i, j);
                    for (int j = 0; j < g.cols; ++j)
                        da->at(i, j) += n.val.at(i, j) * (g.at(i, j) - s);
                }
            }
            break;
        }
        case Op::LogSumExpMasked: {
            if (Array* da = in_grad(n.in[0])) {
                const Array& s = in_val(n.in[0]);
                const Array& m = in_val(n.in[1]);
                for (int i = 0; i < s.rows; ++i) {
                    const double gi = g.at(i, 0);
                    if (gi == 0.0) continue;
                    for (int j = 0; j < s.cols; ++j)
                        if (m.at(i, j) != 0.0)
                            da->at(i, j) += gi * std::exp(s.at(i, j) - n.val.at(i, 0));
                }
            }
            break;
        }
        case Op::ColMax: {
            if (Array* da = in_grad(n.in[0]))
                for (int j = 0; j < n.val.cols; ++j)
                    da->at(n.idx[static_cast<size_t>(j)], j) += g.at(0, j);
            break;
        }
        case Op::TileRows: {
            if (Array* da = in_grad(n.in[0]))
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) da->at(0, j) += g.at(i, j);
            break;
        }
        case Op::BroadcastCol: {
            if (Array* da = in_grad(n.in[0]))
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) da->at(i, 0) += g.at(i, j);
            break;
        }
        case Op::ConcatCols: {
            const int ac = in_val(n.in[0]).cols;
            if (Array* da = in_grad(n.in[0]))
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < ac; ++j) da->at(i, j) += g.at(i, j);
            if (Array* db = in_grad(n.in[1]))
                for (int i = 0; i < g.rows; ++i)
                    for (int j = ac; j < g.cols; ++j) db->at(i, j - ac) += g.at(i, j);
            break;
        }
        case Op::ConcatRows: {
            int r = 0;
            for (int in : n.in) {
                const int rows = in_val(in).rows;
                if (Array* d = in_grad(in))
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < g.cols; ++j) d->at(i, j) += g.at(r + i, j);
                r += rows;
            }
            break;
        }
        case Op::GatherRows: {
            if (Array* da = in_grad(n.in[0]))
                for (size_t i = 0; i < n.idx.size(); ++i)
                    for (int j = 0; j < g.cols; ++j)
                        da->at(n.idx[i], j) += g.at(static_cast<int>(i), j);
            break;
        }
        case Op::L2NormRows: {
            if (Array* da = in_grad(n.in[0])) {
                for (int i = 0; i < g.rows; ++i) {
                    const double norm = n.aux.at(i, 0);
                    double yg = 0.0;
                    for (int j = 0; j < g.cols; ++j) yg += n.val.at(i, j) * g.at(i, j);
                    const bool clamped = norm <= 1e-12;
                    for (int j = 0; j < g.cols; ++j) {
                        const double proj = clamped ? 0.0 : n.val.at(i, j) * yg;
                        da->at(i, j) += (g.at(i, j) - proj) / norm;
                    }
                }
            }
            break;
        }
        case Op::Dropout: {
            if (Array* da = in_grad(n.in[0])) {
                if (n.aux.size() == 0) {
                    for (size_t i = 0; i < g.size(); ++i) da->data[i] += g.data[i];
                } else {
                    for (size_t i = 0; i < g.size(); ++i) da->data[i] += n.aux.data[i] * g.data[i];
                }
            }
            break;
        }
        case Op::BatchNorm: {
            const int rows = n.val.rows;
            const int cols = n.val.cols;
            BatchNormState& bn = *n.bn;
            for (int j = 0; j < cols; ++j) {
                double dg = 0.0, db = 0.0;
                for (int i = 0; i < rows; ++i) {
                    dg += g.at(i, j) * n.aux.at(i, j);
                    db += g.at(i, j);
                }
                bn.gamma->grad.at(0, j) += dg;
                bn.beta->grad.at(0, j) += db;
            }
            if (Array* da = in_grad(n.in[0])) {
                for (int j = 0; j < cols; ++j) {
                    const double gamma = bn.gamma->value.at(0, j);
                    const double invstd = n.aux.at(rows, j);
                    if (mode_ == Mode::Training) {
                        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                        for (int i = 0; i < rows; ++i) {
                            const double dxh = g.at(i, j) * gamma;
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * n.aux.at(i, j);
                        }
                        for (int i = 0; i < rows; ++i) {
                            const double dxh = g.at(i, j) * gamma;
                            da->at(i, j) += invstd * (dxh - sum_dxh / rows -
                                                      n.aux.at(i, j) * sum_dxh_xh / rows);
                        }
                    } else {
                        for (int i = 0; i < rows; ++i)
                            da->at(i, j) += g.at(i, j) * gamma * invstd;
                    }
                }
            }
            break;
        }
        case Op::Dot: {
            const double g0 = g.data[0];
            if (Array* da = in_grad(n.in[0])) {
                const Array& b = in_val(n.in[1]);
                for (size_t i = 0; i < b.size(); ++i) da->data[i] += g0 * b.data[i];
            }
            if (Array* db = in_grad(n.in[1])) {
                const Array& a = in_val(n.in[0]);
                for (size_t i = 0; i < a.size(); ++i) db->data[i] += g0 * a.data[i];
            }
            break;
        }
        case Op::WeightedSum: {
            if (Array* da = in_grad(n.in[0])) {
                const Array& w = in_val(n.in[1]);
                for (size_t i = 0; i < w.size(); ++i) da->data[i] += g.data[0] * w.data[i];
            }
            break;
        }
        case Op::CrossEntropy: {
            if (Array* da = in_grad(n.in[0])) {
                const double g0 = g.data[0] / n.scalar;
                for (int i = 0; i < da->rows; ++i) {
                    const int y = n.idx[static_cast<size_t>(i)];
                    if (y < 0) continue;
                    for (int j = 0; j < da->cols; ++j) {
                        double d = n.aux.at(i, j);
                        if (j == y) d -= 1.0;
                        da->at(i, j) += g0 * d;
                    }
                }
            }
            break;
        }
    }
}

std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace rseg::diff
