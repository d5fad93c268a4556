#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rseg/array.hpp"
#include "rseg/params.hpp"

namespace rseg::diff {

enum class Mode { Training, Evaluation };

// Handle to a node on a Tape.
struct Val {
    int id = -1;
};

// Eager reverse-mode tape. Operations execute immediately and append a node;
// backward() walks the tape in reverse and accumulates parameter gradients
// into the owning ParamStore. One tape per training step.
class Tape {
public:
    explicit Tape(Mode mode, uint64_t seed = 0);

    Mode mode() const { return mode_; }

    Val constant(Array a);              // no gradient
    Val input(Array a);                 // gradient-carrying leaf
    Val param(Param& p);                // reads p.value, accumulates into p.grad

    Val matmul(Val a, Val b);           // [n,k]x[k,m]
    Val matmul_nt(Val a, Val b);        // A * B^T
    Val add(Val a, Val b);              // same shape
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);              // elementwise
    Val add_rowvec(Val a, Val bias);    // [n,c] + [1,c]
    Val scale(Val a, double s);
    Val relu(Val a);
    Val softplus(Val a);                // log(1 + exp(x)), overflow-safe
    Val exp(Val a);
    Val log(Val a);
    Val softmax_rows(Val a);
    Val logsumexp_rows_masked(Val scores, Val mask);  // mask is a 0/1 constant; -> [n,1]
    Val col_max(Val a);                 // max over rows -> [1,c]
    Val tile_rows(Val row, int n);      // [1,c] -> [n,c]
    Val broadcast_col(Val col, int m);  // [n,1] -> [n,m]
    Val concat_cols(Val a, Val b);
    Val concat_rows(const std::vector<Val>& parts);
    Val gather_rows(Val a, std::vector<int> indices);
    Val l2_normalize_rows(Val a);
    Val dropout(Val a, double p);       // identity in evaluation mode
    Val batch_norm(Val a, BatchNormState& bn);
    Val dot(Val a, Val b);              // sum of elementwise products -> [1,1]
    Val weighted_sum(Val a, Val weights);  // sum(a .* weights) -> [1,1]
    // Mean over rows with label >= 0 of -log softmax(row)[label]; -> [1,1]
    Val cross_entropy(Val logits, std::vector<int> labels);

    const Array& value(Val v) const;
    const Array& grad(Val v) const;

    // Seeds d(loss)/d(loss) = scale and runs reverse accumulation. Loss must be
    // scalar and frozen-parameter gradients end up exactly zero.
    void backward(Val loss, double scale = 1.0);

private:
    enum class Op {
        Constant, Input, Param, MatMul, MatMulNT, Add, Sub, Mul, AddRowVec, Scale,
        Relu, Softplus, Exp, Log, SoftmaxRows, LogSumExpMasked, ColMax,
        TileRows, BroadcastCol, ConcatCols, ConcatRows, GatherRows,
        L2NormRows, Dropout, BatchNorm, Dot, WeightedSum, CrossEntropy
    };

    struct Node {
        Op op;
        std::vector<int> in;
        Array val;
        Array grad;
        bool needs_grad = false;
        double scalar = 0.0;        // Scale factor / dropout rate
        Array aux;                  // op scratch: dropout mask, softmax cache, xhat
        std::vector<int> idx;       // gather indices / class labels
        Param* p = nullptr;
        BatchNormState* bn = nullptr;
    };

    int add_node(Node n);
    Node& node(Val v) { return nodes_[static_cast<size_t>(v.id)]; }
    const Node& node(Val v) const { return nodes_[static_cast<size_t>(v.id)]; }
    void check(Val v) const;
    [[noreturn]] void fail(const std::string& op, const std::string& what) const;
    void backprop_node(int id);
    static const char* op_name(Op op);

    Mode mode_;
    std::mt19937_64 rng_;
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Gradient of f at x by central finite differences, step h.
std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, double h = 1e-5);

}  // namespace rseg::diff
