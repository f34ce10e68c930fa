#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "splashlab/graph.hpp"

using namespace splashlab;
using testutil::GradCheck;
using testutil::random_tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.shape_str() == "[2x3]");
}

TEST_CASE("matmul hand example") {
    Graph g;
    Value a = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Value b = g.leaf(Tensor({2, 1}, {1, 1}));
    Value c = g.matmul(a, b);
    CHECK(g.value(c)[0] == 3.0);
    CHECK(g.value(c)[1] == 7.0);
}

TEST_CASE("relu hand example") {
    Graph g;
    Value x = g.leaf(Tensor({3}, {-1, 0, 2}));
    Value y = g.relu(x);
    CHECK(g.value(y)[0] == 0.0);
    CHECK(g.value(y)[1] == 0.0);
    CHECK(g.value(y)[2] == 2.0);
}

TEST_CASE("dot product via mul+sum") {
    Graph g;
    Value a = g.leaf(Tensor({3}, {1, 2, 3}));
    Value b = g.leaf(Tensor({3}, {4, 5, 6}));
    Value s = g.sum(g.mul(a, b));
    CHECK(g.value(s)[0] == 32.0); // 4 + 10 + 18
}

TEST_CASE("relu subgradient convention") {
    Graph g;
    Value x = g.leaf(Tensor({2}, {-1, 2}), true);
    Value loss = g.sum(g.relu(x));
    g.backward(loss);
    CHECK(g.grad(x)[0] == 0.0);
    CHECK(g.grad(x)[1] == 1.0);

    // exactly at the kink the derivative is 0
    Graph g2;
    Value z = g2.leaf(Tensor({1}, {0.0}), true);
    Value l2 = g2.sum(g2.relu(z));
    g2.backward(l2);
    CHECK(g2.grad(z)[0] == 0.0);
}

TEST_CASE("square gradient") {
    Graph g;
    Value x = g.leaf(Tensor({1}, {3.0}), true);
    Value loss = g.sum(g.mul(x, x));
    g.backward(loss);
    CHECK(g.grad(x)[0] == 6.0);
}

TEST_CASE("sigmoid gradient at zero") {
    Graph g;
    Value x = g.leaf(Tensor({1}, {0.0}), true);
    Value loss = g.sum(g.sigmoid(x));
    g.backward(loss);
    CHECK(g.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("shape mismatch errors name the op and shapes") {
    Graph g;
    Value a = g.leaf(Tensor({2, 3}));
    Value b = g.leaf(Tensor({4, 1}));
    std::string msg;
    try {
        g.matmul(a, b);
    } catch (const std::invalid_argument& e) {
        msg = e.what();
    }
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x1]") != std::string::npos);
    Value c = g.leaf(Tensor({3}));
    CHECK_THROWS_WITH_AS(g.add(a, c), doctest::Contains("add"), std::invalid_argument);
}

TEST_CASE("backward preconditions") {
    Graph g;
    CHECK_THROWS_AS(g.backward(Value()), std::logic_error);
    Value x = g.leaf(Tensor({3}, {1, 2, 3}), true);
    Value y = g.relu(x);
    CHECK_THROWS_AS(g.backward(y), std::invalid_argument); // non-scalar loss
}

TEST_CASE("non-finite results are an engine error") {
    Graph g;
    Value x = g.leaf(Tensor({1}, {-1.0}));
    CHECK_THROWS_AS(g.log(x), std::runtime_error);
    Value big = g.leaf(Tensor({1}, {1e308}));
    CHECK_THROWS_AS(g.mul(big, big), std::runtime_error);
}

TEST_CASE("determinism: repeated backward is bit-identical") {
    Rng rng(7);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor w = random_tensor({5, 3}, rng);
    auto run = [&]() {
        Graph g;
        Value va = g.leaf(a, true);
        Value vw = g.leaf(w, true);
        Value loss = g.sum(g.tanh(g.matmul(va, vw)));
        g.backward(loss);
        std::vector<double> out = g.grad(va).vec();
        const auto& gw = g.grad(vw).vec();
        out.insert(out.end(), gw.begin(), gw.end());
        return out;
    };
    auto g1 = run();
    auto g2 = run();
    CHECK(g1 == g2);

    // backward twice on the same graph also matches (accumulators reset)
    Graph g;
    Value va = g.leaf(a, true);
    Value loss = g.sum(g.sigmoid(va));
    g.backward(loss);
    auto first = g.grad(va).vec();
    g.backward(loss);
    CHECK(first == g.grad(va).vec());
}

TEST_CASE("backward linearity over outputs") {
    Rng rng(13);
    Tensor x = random_tensor({6}, rng);
    // gradient of sum(f) equals the sum of gradients of each f_i
    Graph g;
    Value vx = g.leaf(x, true);
    Value y = g.tanh(vx);
    Value total = g.sum(y);
    g.backward(total);
    Tensor grad_sum = g.grad(vx);

    Tensor accum({6});
    for (std::size_t i = 0; i < 6; ++i) {
        Graph gi;
        Value vi = gi.leaf(x, true);
        Value yi = gi.pick(gi.tanh(vi), i);
        gi.backward(yi);
        for (std::size_t j = 0; j < 6; ++j) accum[j] += gi.grad(vi)[j];
    }
    for (std::size_t j = 0; j < 6; ++j)
        CHECK(grad_sum[j] == doctest::Approx(accum[j]).epsilon(1e-12));
}

namespace {

// resample until every coordinate is farther than `margin` from any kink at 0
Tensor off_kink(std::vector<std::size_t> shape, Rng& rng, double margin = 1e-3) {
    Tensor t = random_tensor(shape, rng);
    for (std::size_t i = 0; i < t.size(); ++i)
        while (std::fabs(t[i]) < margin) t[i] = rng.uniform(-2.0, 2.0);
    return t;
}

int fd_failures(GradCheck& gc, int* checked = nullptr) { return gc.run(checked); }

} // namespace

TEST_CASE("finite differences: smooth elementwise and reductions") {
    Rng rng(21);
    int total_checked = 0;
    for (int rep = 0; rep < 3; ++rep) {
        GradCheck gc;
        gc.inputs = {random_tensor({5, 4}, rng, 0.1, 2.0), random_tensor({5, 4}, rng, 0.1, 2.0)};
        gc.build = [](Graph& g, const std::vector<Value>& in) {
            Value a = in[0], b = in[1];
            Value t = g.mul(g.add(a, b), g.sub(a, b));
            t = g.add(g.exp(g.mul_scalar(a, 0.3)), t);
            t = g.add(g.log(b), t);
            t = g.add(g.tanh(a), t);
            t = g.add(g.sigmoid(b), t);
            t = g.add(g.elu(g.add_scalar(a, -1.0), 0.7), t);
            return g.mean(t);
        };
        int checked = 0;
        CHECK(fd_failures(gc, &checked) == 0);
        total_checked += checked;
    }
    CHECK(total_checked >= 100);
}

TEST_CASE("finite differences: kinked elementwise away from kinks") {
    Rng rng(22);
    int total_checked = 0;
    for (int rep = 0; rep < 3; ++rep) {
        GradCheck gc;
        gc.inputs = {off_kink({6, 7}, rng)};
        gc.build = [](Graph& g, const std::vector<Value>& in) {
            Value x = in[0];
            return g.sum(g.add(g.relu(x), g.abs(g.mul_scalar(x, 1.3))));
        };
        int checked = 0;
        CHECK(fd_failures(gc, &checked) == 0);
        total_checked += checked;
    }
    CHECK(total_checked >= 100);
}

TEST_CASE("finite differences: matmul and broadcast ops") {
    Rng rng(23);
    GradCheck gc;
    gc.inputs = {random_tensor({4, 6}, rng), random_tensor({6, 3}, rng),
                 random_tensor({3}, rng), Tensor({1}, {0.7})};
    gc.build = [](Graph& g, const std::vector<Value>& in) {
        Value y = g.matmul(in[0], in[1]);
        y = g.add_rowvec(y, in[2]);
        y = g.mul_rowvec(y, in[2]);
        y = g.mul(y, in[3]); // scalar broadcast
        return g.sum(y);
    };
    int checked = 0;
    CHECK(fd_failures(gc, &checked) == 0);
    CHECK(checked >= 46);
}

TEST_CASE("finite differences: conv2d, maxpool, chanvec, reshape") {
    Rng rng(24);
    GradCheck gc;
    // keep pooling windows free of near-ties so the argmax is stable under fd steps
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    gc.inputs = {x, random_tensor({4, 3, 3, 3}, rng, -0.6, 0.6), random_tensor({4}, rng),
                 random_tensor({4}, rng, 0.5, 1.5)};
    gc.build = [](Graph& g, const std::vector<Value>& in) {
        Value y = g.conv2d(in[0], in[1]);       // [2,4,4,4]
        y = g.add_chanvec(y, in[2]);
        y = g.mul_chanvec(y, in[3]);
        y = g.maxpool2x2(y);                    // [2,4,2,2]
        y = g.reshape(y, {2, 16});
        return g.mean(g.tanh(y));
    };
    int checked = 0;
    CHECK(fd_failures(gc, &checked) == 0);
    CHECK(checked >= 100);
}

TEST_CASE("finite differences: softmax, cross entropy, pick") {
    Rng rng(25);
    GradCheck gc;
    gc.inputs = {random_tensor({5, 7}, rng)};
    std::vector<int> labels = {0, 3, 6, 2, 1};
    gc.build = [labels](Graph& g, const std::vector<Value>& in) {
        Value ce = g.cross_entropy(in[0], labels);
        Value sm = g.pick(g.softmax_rows(in[0]), 4);
        return g.add(ce, sm);
    };
    CHECK(fd_failures(gc) == 0);
}

TEST_CASE("finite differences: batchnorm training and eval modes") {
    Rng rng(26);
    for (bool training : {true, false}) {
        GradCheck gc;
        gc.inputs = {random_tensor({6, 5}, rng), random_tensor({5}, rng, 0.5, 1.5),
                     random_tensor({5}, rng, -0.5, 0.5)};
        gc.build = [training](Graph& g, const std::vector<Value>& in) {
            // fresh running stats per evaluation: the probe must not mutate shared state
            Tensor rm({5}), rv = Tensor::full({5}, 1.0);
            Value y = g.batchnorm(in[0], in[1], in[2], rm, rv, training, 1e-5, 0.9);
            return g.mean(g.mul(y, y));
        };
        int checked = 0;
        CHECK(fd_failures(gc, &checked) == 0);
        CHECK(checked >= 40);
    }
}

TEST_CASE("finite differences: batchnorm over channels") {
    Rng rng(27);
    GradCheck gc;
    gc.inputs = {random_tensor({3, 2, 4, 4}, rng), random_tensor({2}, rng, 0.5, 1.5),
                 random_tensor({2}, rng, -0.5, 0.5)};
    gc.build = [](Graph& g, const std::vector<Value>& in) {
        Tensor rm({2}), rv = Tensor::full({2}, 1.0);
        Value y = g.batchnorm(in[0], in[1], in[2], rm, rv, true, 1e-5, 0.9);
        return g.mean(g.sigmoid(y));
    };
    CHECK(fd_failures(gc) == 0);
}

TEST_CASE("sign has zero derivative and correct values") {
    Graph g;
    Value x = g.leaf(Tensor({3}, {-2.5, 0.0, 7.0}), true);
    Value y = g.sign(x);
    CHECK(g.value(y)[0] == -1.0);
    CHECK(g.value(y)[1] == 0.0);
    CHECK(g.value(y)[2] == 1.0);
    g.backward(g.sum(y));
    for (int i = 0; i < 3; ++i) CHECK(g.grad(x)[i] == 0.0);
}

TEST_CASE("piecewise_linear evaluation and gradient") {
    auto knots = std::make_shared<std::vector<double>>(std::vector<double>{-1.0, 0.0, 1.0});
    auto vals = std::make_shared<std::vector<double>>(std::vector<double>{1.0, 0.0, 2.0});
    Graph g;
    Value x = g.leaf(Tensor({4}, {-0.5, 0.5, -3.0, 3.0}), true);
    Value y = g.piecewise_linear(x, knots, vals);
    CHECK(g.value(y)[0] == doctest::Approx(0.5));
    CHECK(g.value(y)[1] == doctest::Approx(1.0));
    CHECK(g.value(y)[2] == doctest::Approx(3.0));  // extrapolates slope -1
    CHECK(g.value(y)[3] == doctest::Approx(6.0));  // extrapolates slope 2
    g.backward(g.sum(y));
    CHECK(g.grad(x)[0] == doctest::Approx(-1.0));
    CHECK(g.grad(x)[1] == doctest::Approx(2.0));
}

TEST_CASE("maxpool tie breaks to first element in scan order") {
    Graph g;
    Tensor x({1, 1, 2, 2}, {5.0, 5.0, 5.0, 5.0});
    Value vx = g.leaf(x, true);
    Value y = g.maxpool2x2(vx);
    CHECK(g.value(y)[0] == 5.0);
    g.backward(g.sum(y));
    CHECK(g.grad(vx)[0] == 1.0);
    CHECK(g.grad(vx)[1] == 0.0);
    CHECK(g.grad(vx)[2] == 0.0);
    CHECK(g.grad(vx)[3] == 0.0);
}

TEST_SUITE_END();
