#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "splashlab/tensor.hpp"

namespace splashlab {

class Graph;

/// Handle to a value slot on a Graph.
class Value {
public:
    Value() = default;
    std::size_t id() const { return id_; }
    bool valid() const { return id_ != static_cast<std::size_t>(-1); }

private:
    friend class Graph;
    explicit Value(std::size_t id) : id_(id) {}
    std::size_t id_ = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape: operations are recorded in execution order and the
/// backward pass replays them in exact reverse order. A Graph and its
/// tensors form a single-owner unit; build one per forward pass.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    Value leaf(Tensor value, bool requires_grad = false);

    // elementwise; shapes must match exactly or one operand may be a
    // size-1 tensor (broadcast scalar)
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);

    // constant-scalar forms
    Value add_scalar(Value a, double c);
    Value mul_scalar(Value a, double c);

    // unary elementwise
    Value relu(Value a);     // subgradient 0 at the kink
    Value sign(Value a);     // derivative 0 everywhere
    Value abs(Value a);
    Value exp(Value a);
    Value log(Value a);
    Value tanh(Value a);
    Value sigmoid(Value a);
    Value elu(Value a, double alpha);

    // broadcast against a vector value
    Value add_rowvec(Value a, Value v);   // a [R,C], v [C]
    Value mul_rowvec(Value a, Value v);
    Value add_chanvec(Value a, Value v);  // a [B,C,H,W], v [C]
    Value mul_chanvec(Value a, Value v);

    // structure
    Value matmul(Value a, Value b);
    Value conv2d(Value x, Value w);       // x [B,IC,H,W], w [OC,IC,K,K]; valid padding, stride 1
    Value maxpool2x2(Value x);            // stride 2; H and W must be even
    Value reshape(Value a, std::vector<std::size_t> shape);
    Value sum(Value a);                   // -> [1]
    Value mean(Value a);                  // -> [1]
    Value pick(Value a, std::size_t flat_index); // -> [1]
    Value pick_row(Value a, std::size_t row);    // a [R,C] -> [C]

    // piecewise-linear lookup through fixed knots (frozen activation shapes);
    // linear extrapolation beyond the first/last knot
    Value piecewise_linear(Value x, std::shared_ptr<const std::vector<double>> knots,
                           std::shared_ptr<const std::vector<double>> values);

    // fused network ops
    // batchnorm normalizes per feature (rank-2 input [B,F]) or per channel
    // (rank-4 input [B,C,H,W]); in training mode it uses batch statistics and
    // updates running_mean/running_var in place, in eval mode it reads them.
    Value batchnorm(Value x, Value gamma, Value beta, Tensor& running_mean, Tensor& running_var,
                    bool training, double eps, double momentum);
    Value cross_entropy(Value logits, const std::vector<int>& labels); // mean NLL -> [1]
    Value softmax_rows(Value logits);

    void backward(Value loss);

    // references stay valid while the graph lives (nodes are deque-backed)
    const Tensor& value(Value v) const;
    const Tensor& grad(Value v) const;
    bool requires_grad(Value v) const;
    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad; // allocated only when requires_grad
        bool requires_grad = false;
        std::function<void(Graph&)> backprop;
    };

    Value add_node(Tensor value, bool requires_grad, std::function<void(Graph&)> backprop);
    Node& node(std::size_t id) { return nodes_[id]; }
    const Node& node(std::size_t id) const { return nodes_[id]; }
    const Tensor& val(std::size_t id) const { return nodes_[id].value; }
    Tensor& grd(std::size_t id) { return nodes_[id].grad; }
    bool rg(std::size_t id) const { return nodes_[id].requires_grad; }
    void check(Value v, const char* op) const;

    enum class BinOp { add, sub, mul };
    Value binary_elementwise(Value a, Value b, BinOp op, const char* name);
    Value unary_elementwise(Value a, const char* name, std::function<double(double)> fwd,
                            std::function<double(double, double)> dfdx); // dfdx(x, y)

    std::deque<Node> nodes_;
    bool ran_backward_ = false;
};

} // namespace splashlab
