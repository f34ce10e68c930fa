#pragma once

#include <functional>
#include <vector>

#include "splashlab/graph.hpp"
#include "splashlab/rng.hpp"
#include "splashlab/tensor.hpp"

namespace testutil {

using splashlab::Graph;
using splashlab::Rng;
using splashlab::Tensor;
using splashlab::Value;

// |a-b| <= atol + rtol*max(|a|,|b|)
inline bool close(double a, double b, double rtol, double atol) {
    double d = std::fabs(a - b);
    return d <= atol + rtol * std::max(std::fabs(a), std::fabs(b));
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Central-difference gradient oracle. `build` maps leaf tensors to a scalar
/// loss on a fresh graph; it must be a pure function of the leaf values so
/// that repeated evaluation is valid.
struct GradCheck {
    std::function<Value(Graph&, const std::vector<Value>&)> build;
    std::vector<Tensor> inputs;
    double step = 1e-5;
    double rtol = 1e-5;
    double atol = 1e-9;

    double eval(const std::vector<Tensor>& at) const {
        Graph g;
        std::vector<Value> leaves;
        leaves.reserve(at.size());
        for (const Tensor& t : at) leaves.push_back(g.leaf(t, false));
        Value loss = build(g, leaves);
        return g.value(loss)[0];
    }

    // returns the number of coordinates that failed the tolerance
    int run(int* checked_out = nullptr) const {
        Graph g;
        std::vector<Value> leaves;
        for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, true));
        Value loss = build(g, leaves);
        g.backward(loss);

        int failures = 0;
        int checked = 0;
        for (std::size_t which = 0; which < inputs.size(); ++which) {
            const Tensor& analytic = g.grad(leaves[which]);
            for (std::size_t j = 0; j < inputs[which].size(); ++j) {
                std::vector<Tensor> probe = inputs;
                probe[which][j] += step;
                double up = eval(probe);
                probe[which][j] = inputs[which][j] - step;
                double dn = eval(probe);
                double fd = (up - dn) / (2.0 * step);
                ++checked;
                if (!close(analytic[j], fd, rtol, atol)) ++failures;
            }
        }
        if (checked_out) *checked_out = checked;
        return failures;
    }
};

} // namespace testutil
