#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "rseg/diff.hpp"
#include "rseg/params.hpp"

using namespace rseg;
using diff::Tape;
using diff::Val;

namespace {

Array random_array(int r, int c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Array a(r, c);
    for (double& v : a.data) v = u(rng);
    return a;
}

double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    REQUIRE(analytic.size() == numeric.size());
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-6});
        worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

// Checks d(weighted_sum(build(x), w))/dx against central finite differences.
// build runs on a fresh tape per evaluation; the tape seed is fixed so
// stochastic ops (dropout) see identical draws.
template <typename BuildFn>
void check_input_gradient(const Array& x0, BuildFn build, uint64_t tape_seed = 42,
                          double tol = 1e-6) {
    std::mt19937_64 wrng(7);
    Array w;

    auto eval = [&](const std::vector<double>& flat) {
        Array x = x0;
        x.data = flat;
        Tape tape(diff::Mode::Training, tape_seed);
        Val in = tape.input(std::move(x));
        Val y = build(tape, in);
        if (w.size() == 0) w = random_array(tape.value(y).rows, tape.value(y).cols, wrng);
        return tape.value(tape.weighted_sum(y, tape.constant(w))).data[0];
    };
    eval(x0.data);  // fix w to the output shape

    Tape tape(diff::Mode::Training, tape_seed);
    Val in = tape.input(x0);
    Val y = build(tape, in);
    Val loss = tape.weighted_sum(y, tape.constant(w));
    tape.backward(loss);
    const std::vector<double> analytic = tape.grad(in).data;
    const std::vector<double> numeric = diff::finite_difference(eval, x0.data, 1e-5);
    CHECK(max_rel_err(analytic, numeric) < tol);
}

}  // namespace

TEST_CASE("finite differences validate every primitive") {
    std::mt19937_64 rng(1);
    const Array x = random_array(4, 3, rng);

    check_input_gradient(x, [](Tape& t, Val a) { return t.relu(a); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.softplus(a); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.exp(a); });
    check_input_gradient(random_array(4, 3, rng, 0.5, 2.0),
                         [](Tape& t, Val a) { return t.log(a); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.softmax_rows(a); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.scale(a, -2.5); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.l2_normalize_rows(a); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.gather_rows(a, {2, 0, 2, 3}); });
    check_input_gradient(x, [](Tape& t, Val a) { return t.concat_cols(a, t.relu(a)); });
    check_input_gradient(x, [](Tape& t, Val a) {
        return t.concat_rows({a, t.scale(a, 0.5)});
    });
    const Array m35 = random_array(3, 5, rng);
    check_input_gradient(x, [&m35](Tape& t, Val a) { return t.matmul(a, t.constant(m35)); });
    const Array m63 = random_array(6, 3, rng);
    check_input_gradient(x, [&m63](Tape& t, Val a) { return t.matmul_nt(a, t.constant(m63)); });
    const Array m43 = random_array(4, 3, rng);
    check_input_gradient(x, [&m43](Tape& t, Val a) {
        Val b = t.constant(m43);
        return t.mul(t.add(a, b), t.sub(a, b));
    });
    const Array m13 = random_array(1, 3, rng);
    check_input_gradient(x, [&m13](Tape& t, Val a) {
        return t.add_rowvec(a, t.constant(m13));
    });
    check_input_gradient(x, [](Tape& t, Val a) { return t.dropout(a, 0.4); });
    check_input_gradient(random_array(1, 3, rng),
                         [](Tape& t, Val a) { return t.tile_rows(a, 5); });
    check_input_gradient(random_array(4, 1, rng),
                         [](Tape& t, Val a) { return t.broadcast_col(a, 6); });
    check_input_gradient(x, [](Tape& t, Val a) {
        Array mask(4, 3);
        mask.at(0, 1) = mask.at(0, 2) = mask.at(1, 0) = mask.at(2, 2) = mask.at(3, 0) =
            mask.at(3, 1) = 1.0;
        return t.logsumexp_rows_masked(a, t.constant(std::move(mask)));
    });
    check_input_gradient(x, [](Tape& t, Val a) {
        return t.broadcast_col(t.cross_entropy(a, {0, -1, 2, 1}), 1);
    });
    const Array m43b = random_array(4, 3, rng);
    check_input_gradient(x, [&m43b](Tape& t, Val a) {
        return t.broadcast_col(t.dot(a, t.constant(m43b)), 1);
    });
}

TEST_CASE("col_max gradient flows to the argmax row only") {
    Array x = Array::from(3, 2, {1.0, 5.0, 4.0, 2.0, 3.0, 0.0});
    Tape tape(diff::Mode::Training);
    Val in = tape.input(x);
    Val m = tape.col_max(in);
    Array w = Array::from(1, 2, {2.0, 3.0});
    tape.backward(tape.weighted_sum(m, tape.constant(w)));
    const Array& g = tape.grad(in);
    CHECK(g.at(1, 0) == 2.0);
    CHECK(g.at(0, 1) == 3.0);
    CHECK(g.at(0, 0) == 0.0);
    CHECK(g.at(2, 0) == 0.0);
    CHECK(g.at(2, 1) == 0.0);
    // Subgradient choice at the max also matches finite differences away
    // from ties.
    std::mt19937_64 rng(11);
    check_input_gradient(random_array(5, 4, rng),
                         [](Tape& t, Val a) { return t.tile_rows(t.col_max(a), 2); });
}

TEST_CASE("batch norm gradients match finite differences, running stats update") {
    ParamStore store;
    BatchNormState bn = BatchNormState::create(store, "bn", 3);
    std::mt19937_64 rng(2);
    bn.gamma->value = random_array(1, 3, rng, 0.5, 1.5);
    bn.beta->value = random_array(1, 3, rng);

    const Array x0 = random_array(6, 3, rng);
    Array w = random_array(6, 3, rng);
    const Array rm0 = bn.running_mean->value;
    const Array rv0 = bn.running_var->value;

    auto eval = [&](const std::vector<double>& flat) {
        bn.running_mean->value = rm0;  // keep evaluations independent
        bn.running_var->value = rv0;
        Array x = x0;
        x.data = flat;
        Tape tape(diff::Mode::Training);
        Val y = tape.batch_norm(tape.input(std::move(x)), bn);
        return tape.value(tape.weighted_sum(y, tape.constant(w))).data[0];
    };

    bn.running_mean->value = rm0;
    bn.running_var->value = rv0;
    Tape tape(diff::Mode::Training);
    Val in = tape.input(x0);
    Val y = tape.batch_norm(in, bn);
    tape.backward(tape.weighted_sum(y, tape.constant(w)));
    const std::vector<double> analytic = tape.grad(in).data;

    // Running statistics moved toward the batch statistics.
    for (int j = 0; j < 3; ++j) {
        double mu = 0.0;
        for (int i = 0; i < 6; ++i) mu += x0.at(i, j);
        mu /= 6.0;
        CHECK(bn.running_mean->value.at(0, j) ==
              doctest::Approx(0.9 * rm0.at(0, j) + 0.1 * mu).epsilon(1e-12));
    }

    // Gamma/beta gradients against finite differences.
    const std::vector<double> ganalytic = bn.gamma->grad.data;
    const std::vector<double> banalytic = bn.beta->grad.data;
    const Array g0 = bn.gamma->value;
    auto eval_gamma = [&](const std::vector<double>& flat) {
        bn.running_mean->value = rm0;
        bn.running_var->value = rv0;
        bn.gamma->value.data = flat;
        Tape t2(diff::Mode::Training);
        Val yy = t2.batch_norm(t2.input(x0), bn);
        return t2.value(t2.weighted_sum(yy, t2.constant(w))).data[0];
    };
    CHECK(max_rel_err(ganalytic, diff::finite_difference(eval_gamma, g0.data, 1e-5)) < 1e-6);
    bn.gamma->value = g0;

    bn.running_mean->value = rm0;
    bn.running_var->value = rv0;
    CHECK(max_rel_err(analytic, diff::finite_difference(eval, x0.data, 1e-5)) < 1e-6);
    (void)banalytic;
}

TEST_CASE("random two-layer network matches finite differences under 1e-4 over 5 seeds") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        ParamStore store;
        Param& w1 = store.create("w1", 3, 8);
        Param& b1 = store.create("b1", 1, 8);
        Param& w2 = store.create("w2", 8, 4);
        Param& b2 = store.create("b2", 1, 4);
        for (Param* p : store.all()) p->value = random_array(p->value.rows, p->value.cols, rng);
        const Array x = random_array(5, 3, rng);
        const std::vector<int> labels = {0, 3, -1, 1, 2};

        auto forward = [&](Tape& tape) {
            Val h = tape.relu(tape.add_rowvec(tape.matmul(tape.input(x), tape.param(w1)),
                                              tape.param(b1)));
            Val z = tape.add_rowvec(tape.matmul(h, tape.param(w2)), tape.param(b2));
            return tape.cross_entropy(z, labels);
        };

        Tape tape(diff::Mode::Training);
        tape.backward(forward(tape));

        for (Param* p : store.all()) {
            const std::vector<double> analytic = p->grad.data;
            const Array orig = p->value;
            auto eval = [&](const std::vector<double>& flat) {
                p->value.data = flat;
                Tape t2(diff::Mode::Training);
                const double out = t2.value(forward(t2)).data[0];
                return out;
            };
            const std::vector<double> numeric = diff::finite_difference(eval, orig.data, 1e-5);
            p->value = orig;
            CHECK(max_rel_err(analytic, numeric) < 1e-4);
        }
    }
}

TEST_CASE("frozen parameters receive exactly zero gradient") {
    std::mt19937_64 rng(9);
    ParamStore store;
    Param& w1 = store.create("w1", 3, 4);
    Param& w2 = store.create("w2", 4, 2);
    w1.value = random_array(3, 4, rng);
    w2.value = random_array(4, 2, rng);
    w1.frozen = true;

    Tape tape(diff::Mode::Training);
    Val h = tape.matmul(tape.input(random_array(5, 3, rng)), tape.param(w1));
    Val z = tape.matmul(tape.relu(h), tape.param(w2));
    tape.backward(tape.cross_entropy(z, {0, 1, 0, 1, 0}));

    for (double g : w1.grad.data) CHECK(g == 0.0);
    double sum = 0.0;
    for (double g : w2.grad.data) sum += std::fabs(g);
    CHECK(sum > 0.0);
}

TEST_CASE("evaluation mode is deterministic and dropout-free") {
    std::mt19937_64 rng(10);
    const Array x = random_array(6, 4, rng);
    auto run = [&](uint64_t seed) {
        Tape tape(diff::Mode::Evaluation, seed);
        return tape.value(tape.dropout(tape.constant(x), 0.5)).data;
    };
    CHECK(run(1) == x.data);
    CHECK(run(1) == run(99));
}

TEST_CASE("tape guards: scalar loss, single backward, non-finite detection") {
    std::mt19937_64 rng(12);
    {
        Tape tape(diff::Mode::Training);
        Val v = tape.input(random_array(2, 2, rng));
        CHECK_THROWS(tape.backward(v));  // non-scalar
    }
    {
        Tape tape(diff::Mode::Training);
        Val v = tape.input(random_array(1, 2, rng));
        Val loss = tape.dot(v, v);
        tape.backward(loss);
        CHECK_THROWS(tape.backward(loss));  // second backward
    }
    {
        Tape tape(diff::Mode::Training);
        Array bad(1, 2);
        bad.at(0, 0) = -1.0;
        Val v = tape.constant(bad);
        CHECK_THROWS(tape.log(v));  // log(-1) is non-finite
    }
}

TEST_CASE("gradient accumulates across shared subexpressions") {
    // loss = sum(x) + 2*sum(x) should give gradient 3 everywhere.
    Array x = Array::from(1, 3, {1.0, 2.0, 3.0});
    Tape tape(diff::Mode::Training);
    Val in = tape.input(x);
    Array ones(1, 3, 1.0);
    Val w = tape.constant(ones);
    Val loss = tape.add(tape.weighted_sum(in, w), tape.scale(tape.weighted_sum(in, w), 2.0));
    tape.backward(loss);
    for (double g : tape.grad(in).data) CHECK(g == doctest::Approx(3.0).epsilon(1e-15));
}
