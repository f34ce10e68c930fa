#include "splashlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace splashlab {

namespace {

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite())
        throw std::runtime_error(std::string(op) + ": produced non-finite values");
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b,
                              const char* detail) {
    throw std::invalid_argument(std::string(op) + ": " + detail + " (" + a.shape_str() + " vs " +
                                b.shape_str() + ")");
}

// segment index for a sorted knot list; values at or beyond the ends use the
// first/last segment (linear extrapolation)
std::size_t pl_segment(const std::vector<double>& k, double q) {
    const std::size_t m = k.size();
    if (q <= k.front()) return 0;
    if (q >= k[m - 2]) return m - 2;
    std::size_t idx =
        static_cast<std::size_t>(std::upper_bound(k.begin(), k.end(), q) - k.begin());
    return idx - 1;
}

} // namespace

Value Graph::add_node(Tensor value, bool requires_grad, std::function<void(Graph&)> backprop) {
    Node n;
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = Tensor(value.shape());
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Value(nodes_.size() - 1);
}

void Graph::check(Value v, const char* op) const {
    if (!v.valid() || v.id() >= nodes_.size())
        throw std::invalid_argument(std::string(op) + ": value does not belong to this graph");
}

Value Graph::leaf(Tensor value, bool requires_grad) {
    return add_node(std::move(value), requires_grad, nullptr);
}

const Tensor& Graph::value(Value v) const {
    check(v, "value");
    return nodes_[v.id()].value;
}

const Tensor& Graph::grad(Value v) const {
    check(v, "grad");
    if (!nodes_[v.id()].requires_grad)
        throw std::logic_error("grad: value has no gradient slot (requires_grad is false)");
    return nodes_[v.id()].grad;
}

bool Graph::requires_grad(Value v) const {
    check(v, "requires_grad");
    return nodes_[v.id()].requires_grad;
}

void Graph::backward(Value loss) {
    if (nodes_.empty()) throw std::logic_error("backward: no forward pass has been recorded");
    check(loss, "backward");
    const Node& ln = nodes_[loss.id()];
    if (ln.value.size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    ln.value.shape_str());
    // accumulators start from zero on every backward pass
    for (Node& n : nodes_)
        if (n.requires_grad) std::fill(n.grad.vec().begin(), n.grad.vec().end(), 0.0);
    if (!ln.requires_grad) return; // loss does not depend on any differentiable slot
    nodes_[loss.id()].grad[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backprop) n.backprop(*this);
    }
    ran_backward_ = true;
}

// ---------------------------------------------------------------------------
// elementwise binary (with size-1 broadcast on either side)

Value Graph::binary_elementwise(Value a, Value b, BinOp op, const char* name) {
    check(a, name);
    check(b, name);
    const Tensor& ta = val(a.id());
    const Tensor& tb = val(b.id());
    const bool a_scalar = ta.size() == 1;
    const bool b_scalar = tb.size() == 1;
    if (!a_scalar && !b_scalar && !ta.same_shape(tb))
        shape_error(name, ta, tb, "shapes must match or one side must be a scalar");

    const Tensor& big = b_scalar ? ta : tb;
    Tensor out(big.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        double x = ta[a_scalar ? 0 : i];
        double y = tb[b_scalar ? 0 : i];
        switch (op) {
            case BinOp::add: out[i] = x + y; break;
            case BinOp::sub: out[i] = x - y; break;
            case BinOp::mul: out[i] = x * y; break;
        }
    }
    ensure_finite(out, name);

    bool needs = rg(a.id()) || rg(b.id());
    // record first so the output id is known inside the closure
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), ai = a.id(), bi = b.id();
        nodes_[oi].backprop = [oi, ai, bi, op, a_scalar, b_scalar](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& ta = g.val(ai);
            const Tensor& tb = g.val(bi);
            const std::size_t n = go.size();
            if (g.rg(ai)) {
                Tensor& ga = g.grd(ai);
                for (std::size_t i = 0; i < n; ++i) {
                    double d = go[i];
                    if (op == BinOp::mul) d *= tb[b_scalar ? 0 : i];
                    ga[a_scalar ? 0 : i] += d;
                }
            }
            if (g.rg(bi)) {
                Tensor& gb = g.grd(bi);
                for (std::size_t i = 0; i < n; ++i) {
                    double d = go[i];
                    if (op == BinOp::sub)
                        d = -d;
                    else if (op == BinOp::mul)
                        d *= ta[a_scalar ? 0 : i];
                    gb[b_scalar ? 0 : i] += d;
                }
            }
        };
    }
    return out_v;
}

Value Graph::add(Value a, Value b) { return binary_elementwise(a, b, BinOp::add, "add"); }
Value Graph::sub(Value a, Value b) { return binary_elementwise(a, b, BinOp::sub, "sub"); }
Value Graph::mul(Value a, Value b) { return binary_elementwise(a, b, BinOp::mul, "mul"); }

Value Graph::add_scalar(Value a, double c) {
    check(a, "add_scalar");
    const Tensor& ta = val(a.id());
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + c;
    ensure_finite(out, "add_scalar");
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai](Graph& g) {
            const Tensor& go = g.grd(oi);
            Tensor& ga = g.grd(ai);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return out_v;
}

Value Graph::mul_scalar(Value a, double c) {
    check(a, "mul_scalar");
    const Tensor& ta = val(a.id());
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * c;
    ensure_finite(out, "mul_scalar");
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai, c](Graph& g) {
            const Tensor& go = g.grd(oi);
            Tensor& ga = g.grd(ai);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
        };
    }
    return out_v;
}

// ---------------------------------------------------------------------------
// unary elementwise

Value Graph::unary_elementwise(Value a, const char* name, std::function<double(double)> fwd,
                               std::function<double(double, double)> dfdx) {
    check(a, name);
    const Tensor& ta = val(a.id());
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = fwd(ta[i]);
    ensure_finite(out, name);
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai, dfdx](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& ta = g.val(ai);
            const Tensor& to = g.val(oi);
            Tensor& ga = g.grd(ai);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += dfdx(ta[i], to[i]) * go[i];
        };
    }
    return out_v;
}

Value Graph::relu(Value a) {
    return unary_elementwise(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value Graph::sign(Value a) {
    return unary_elementwise(
        a, "sign", [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); },
        [](double, double) { return 0.0; });
}

Value Graph::abs(Value a) {
    return unary_elementwise(
        a, "abs", [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Value Graph::exp(Value a) {
    return unary_elementwise(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Value Graph::log(Value a) {
    return unary_elementwise(
        a, "log", [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

Value Graph::tanh(Value a) {
    return unary_elementwise(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Value Graph::sigmoid(Value a) {
    return unary_elementwise(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Value Graph::elu(Value a, double alpha) {
    return unary_elementwise(
        a, "elu", [alpha](double x) { return x >= 0.0 ? x : alpha * (std::exp(x) - 1.0); },
        [alpha](double x, double) { return x >= 0.0 ? 1.0 : alpha * std::exp(x); });
}

// ---------------------------------------------------------------------------
// broadcast against vectors

Value Graph::add_rowvec(Value a, Value v) {
    check(a, "add_rowvec");
    check(v, "add_rowvec");
    const Tensor& ta = val(a.id());
    const Tensor& tv = val(v.id());
    if (ta.rank() != 2 || tv.rank() != 1 || tv.dim(0) != ta.dim(1))
        shape_error("add_rowvec", ta, tv, "expected [R,C] and [C]");
    const std::size_t R = ta.dim(0), C = ta.dim(1);
    Tensor out(ta.shape());
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[r * C + c] = ta[r * C + c] + tv[c];
    ensure_finite(out, "add_rowvec");
    bool needs = rg(a.id()) || rg(v.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), ai = a.id(), vi = v.id();
        nodes_[oi].backprop = [oi, ai, vi, R, C](Graph& g) {
            const Tensor& go = g.grd(oi);
            if (g.rg(ai)) {
                Tensor& ga = g.grd(ai);
                for (std::size_t i = 0; i < R * C; ++i) ga[i] += go[i];
            }
            if (g.rg(vi)) {
                Tensor& gv = g.grd(vi);
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) gv[c] += go[r * C + c];
            }
        };
    }
    return out_v;
}

Value Graph::mul_rowvec(Value a, Value v) {
    check(a, "mul_rowvec");
    check(v, "mul_rowvec");
    const Tensor& ta = val(a.id());
    const Tensor& tv = val(v.id());
    if (ta.rank() != 2 || tv.rank() != 1 || tv.dim(0) != ta.dim(1))
        shape_error("mul_rowvec", ta, tv, "expected [R,C] and [C]");
    const std::size_t R = ta.dim(0), C = ta.dim(1);
    Tensor out(ta.shape());
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[r * C + c] = ta[r * C + c] * tv[c];
    ensure_finite(out, "mul_rowvec");
    bool needs = rg(a.id()) || rg(v.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), ai = a.id(), vi = v.id();
        nodes_[oi].backprop = [oi, ai, vi, R, C](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& ta = g.val(ai);
            const Tensor& tv = g.val(vi);
            if (g.rg(ai)) {
                Tensor& ga = g.grd(ai);
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += go[r * C + c] * tv[c];
            }
            if (g.rg(vi)) {
                Tensor& gv = g.grd(vi);
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t c = 0; c < C; ++c) gv[c] += go[r * C + c] * ta[r * C + c];
            }
        };
    }
    return out_v;
}

namespace {
void check_chan_shapes(const Tensor& ta, const Tensor& tv, const char* name) {
    if (ta.rank() != 4 || tv.rank() != 1 || tv.dim(0) != ta.dim(1))
        shape_error(name, ta, tv, "expected [B,C,H,W] and [C]");
}
} // namespace

Value Graph::add_chanvec(Value a, Value v) {
    check(a, "add_chanvec");
    check(v, "add_chanvec");
    const Tensor& ta = val(a.id());
    const Tensor& tv = val(v.id());
    check_chan_shapes(ta, tv, "add_chanvec");
    const std::size_t B = ta.dim(0), C = ta.dim(1), HW = ta.dim(2) * ta.dim(3);
    Tensor out(ta.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) out[base + i] = ta[base + i] + tv[c];
        }
    ensure_finite(out, "add_chanvec");
    bool needs = rg(a.id()) || rg(v.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), ai = a.id(), vi = v.id();
        nodes_[oi].backprop = [oi, ai, vi, B, C, HW](Graph& g) {
            const Tensor& go = g.grd(oi);
            if (g.rg(ai)) {
                Tensor& ga = g.grd(ai);
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (g.rg(vi)) {
                Tensor& gv = g.grd(vi);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t base = (b * C + c) * HW;
                        double s = 0.0;
                        for (std::size_t i = 0; i < HW; ++i) s += go[base + i];
                        gv[c] += s;
                    }
            }
        };
    }
    return out_v;
}

Value Graph::mul_chanvec(Value a, Value v) {
    check(a, "mul_chanvec");
    check(v, "mul_chanvec");
    const Tensor& ta = val(a.id());
    const Tensor& tv = val(v.id());
    check_chan_shapes(ta, tv, "mul_chanvec");
    const std::size_t B = ta.dim(0), C = ta.dim(1), HW = ta.dim(2) * ta.dim(3);
    Tensor out(ta.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) out[base + i] = ta[base + i] * tv[c];
        }
    ensure_finite(out, "mul_chanvec");
    bool needs = rg(a.id()) || rg(v.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), ai = a.id(), vi = v.id();
        nodes_[oi].backprop = [oi, ai, vi, B, C, HW](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& ta = g.val(ai);
            const Tensor& tv = g.val(vi);
            if (g.rg(ai)) {
                Tensor& ga = g.grd(ai);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t base = (b * C + c) * HW;
                        for (std::size_t i = 0; i < HW; ++i) ga[base + i] += go[base + i] * tv[c];
                    }
            }
            if (g.rg(vi)) {
                Tensor& gv = g.grd(vi);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t base = (b * C + c) * HW;
                        double s = 0.0;
                        for (std::size_t i = 0; i < HW; ++i) s += go[base + i] * ta[base + i];
                        gv[c] += s;
                    }
            }
        };
    }
    return out_v;
}

// ---------------------------------------------------------------------------
// structure

Value Graph::matmul(Value a, Value b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor& ta = val(a.id());
    const Tensor& tb = val(b.id());
    if (ta.rank() != 2 || tb.rank() != 2)
        shape_error("matmul", ta, tb, "expected two rank-2 tensors");
    if (ta.dim(1) != tb.dim(0)) shape_error("matmul", ta, tb, "inner dimensions do not match");
    const std::size_t M = ta.dim(0), K = ta.dim(1), N = tb.dim(1);
    Tensor out({M, N});
    const double* A = ta.data();
    const double* B = tb.data();
    double* C = out.data();
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = A[i * K + k];
            const double* Bk = B + k * N;
            double* Ci = C + i * N;
            for (std::size_t j = 0; j < N; ++j) Ci[j] += aik * Bk[j];
        }
    ensure_finite(out, "matmul");
    bool needs = rg(a.id()) || rg(b.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), ai = a.id(), bi = b.id();
        nodes_[oi].backprop = [oi, ai, bi, M, K, N](Graph& g) {
            const double* G = g.grd(oi).data();
            const double* A = g.val(ai).data();
            const double* B = g.val(bi).data();
            if (g.rg(ai)) {
                double* GA = g.grd(ai).data();
                // dA = G * B^T
                for (std::size_t i = 0; i < M; ++i)
                    for (std::size_t j = 0; j < N; ++j) {
                        const double gij = G[i * N + j];
                        const double* Bj = B; // B[k*N+j]
                        for (std::size_t k = 0; k < K; ++k) GA[i * K + k] += gij * Bj[k * N + j];
                    }
            }
            if (g.rg(bi)) {
                double* GB = g.grd(bi).data();
                // dB = A^T * G
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t i = 0; i < M; ++i) {
                        const double aik = A[i * K + k];
                        const double* Gi = G + i * N;
                        double* GBk = GB + k * N;
                        for (std::size_t j = 0; j < N; ++j) GBk[j] += aik * Gi[j];
                    }
            }
        };
    }
    return out_v;
}

Value Graph::conv2d(Value x, Value w) {
    check(x, "conv2d");
    check(w, "conv2d");
    const Tensor& tx = val(x.id());
    const Tensor& tw = val(w.id());
    if (tx.rank() != 4 || tw.rank() != 4)
        shape_error("conv2d", tx, tw, "expected input [B,IC,H,W] and kernel [OC,IC,K,K]");
    if (tw.dim(2) != tw.dim(3)) shape_error("conv2d", tx, tw, "kernel must be square");
    if (tx.dim(1) != tw.dim(1)) shape_error("conv2d", tx, tw, "channel counts do not match");
    const std::size_t B = tx.dim(0), IC = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const std::size_t OC = tw.dim(0), K = tw.dim(2);
    if (K > H || K > W) shape_error("conv2d", tx, tw, "kernel larger than input");
    const std::size_t OH = H - K + 1, OW = W - K + 1;
    Tensor out({B, OC, OH, OW});
    const double* X = tx.data();
    const double* Wt = tw.data();
    double* Y = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oc = 0; oc < OC; ++oc)
            for (std::size_t ic = 0; ic < IC; ++ic) {
                const double* xb = X + (b * IC + ic) * H * W;
                const double* wk = Wt + (oc * IC + ic) * K * K;
                double* yb = Y + (b * OC + oc) * OH * OW;
                for (std::size_t u = 0; u < K; ++u)
                    for (std::size_t v = 0; v < K; ++v) {
                        const double wuv = wk[u * K + v];
                        for (std::size_t i = 0; i < OH; ++i) {
                            const double* xrow = xb + (i + u) * W + v;
                            double* yrow = yb + i * OW;
                            for (std::size_t j = 0; j < OW; ++j) yrow[j] += wuv * xrow[j];
                        }
                    }
            }
    ensure_finite(out, "conv2d");
    bool needs = rg(x.id()) || rg(w.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), xi = x.id(), wi = w.id();
        nodes_[oi].backprop = [oi, xi, wi, B, IC, H, W, OC, K](Graph& g) {
            const std::size_t OH = H - K + 1, OW = W - K + 1;
            const double* G = g.grd(oi).data();
            const double* X = g.val(xi).data();
            const double* Wt = g.val(wi).data();
            if (g.rg(xi)) {
                double* GX = g.grd(xi).data();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t oc = 0; oc < OC; ++oc)
                        for (std::size_t ic = 0; ic < IC; ++ic) {
                            const double* gb = G + (b * OC + oc) * OH * OW;
                            const double* wk = Wt + (oc * IC + ic) * K * K;
                            double* gx = GX + (b * IC + ic) * H * W;
                            for (std::size_t u = 0; u < K; ++u)
                                for (std::size_t v = 0; v < K; ++v) {
                                    const double wuv = wk[u * K + v];
                                    for (std::size_t i = 0; i < OH; ++i) {
                                        const double* grow = gb + i * OW;
                                        double* xrow = gx + (i + u) * W + v;
                                        for (std::size_t j = 0; j < OW; ++j)
                                            xrow[j] += wuv * grow[j];
                                    }
                                }
                        }
            }
            if (g.rg(wi)) {
                double* GW = g.grd(wi).data();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t oc = 0; oc < OC; ++oc)
                        for (std::size_t ic = 0; ic < IC; ++ic) {
                            const double* gb = G + (b * OC + oc) * OH * OW;
                            const double* xb = X + (b * IC + ic) * H * W;
                            double* gw = GW + (oc * IC + ic) * K * K;
                            for (std::size_t u = 0; u < K; ++u)
                                for (std::size_t v = 0; v < K; ++v) {
                                    double s = 0.0;
                                    for (std::size_t i = 0; i < OH; ++i) {
                                        const double* grow = gb + i * OW;
                                        const double* xrow = xb + (i + u) * W + v;
                                        for (std::size_t j = 0; j < OW; ++j)
                                            s += grow[j] * xrow[j];
                                    }
                                    gw[u * K + v] += s;
                                }
                        }
            }
        };
    }
    return out_v;
}

Value Graph::maxpool2x2(Value x) {
    check(x, "maxpool2x2");
    const Tensor& tx = val(x.id());
    if (tx.rank() != 4)
        throw std::invalid_argument("maxpool2x2: expected rank-4 input, got " + tx.shape_str());
    const std::size_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("maxpool2x2: height and width must be even, got " +
                                    tx.shape_str());
    const std::size_t OH = H / 2, OW = W / 2;
    Tensor out({B, C, OH, OW});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const double* X = tx.data();
    double* Y = out.data();
    std::size_t o = 0;
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* plane = X + bc * H * W;
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j, ++o) {
                std::size_t base = (2 * i) * W + 2 * j;
                std::size_t best = base;
                double bv = plane[base];
                const std::size_t cand[3] = {base + 1, base + W, base + W + 1};
                for (std::size_t c2 : cand)
                    if (plane[c2] > bv) {
                        bv = plane[c2];
                        best = c2;
                    }
                Y[o] = bv;
                (*argmax)[o] = bc * H * W + best;
            }
    }
    ensure_finite(out, "maxpool2x2");
    Value out_v = add_node(std::move(out), rg(x.id()), nullptr);
    if (rg(x.id())) {
        std::size_t oi = out_v.id(), xi = x.id();
        nodes_[oi].backprop = [oi, xi, argmax](Graph& g) {
            const Tensor& go = g.grd(oi);
            Tensor& gx = g.grd(xi);
            for (std::size_t i = 0; i < go.size(); ++i) gx[(*argmax)[i]] += go[i];
        };
    }
    return out_v;
}

Value Graph::reshape(Value a, std::vector<std::size_t> shape) {
    check(a, "reshape");
    const Tensor& ta = val(a.id());
    Tensor out(std::move(shape), ta.vec());
    if (out.size() != ta.size())
        throw std::invalid_argument("reshape: element count mismatch: " + ta.shape_str() +
                                    " -> " + out.shape_str());
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai](Graph& g) {
            const Tensor& go = g.grd(oi);
            Tensor& ga = g.grd(ai);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        };
    }
    return out_v;
}

Value Graph::sum(Value a) {
    check(a, "sum");
    const Tensor& ta = val(a.id());
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    Tensor out = Tensor::scalar(s);
    ensure_finite(out, "sum");
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai](Graph& g) {
            const double go = g.grd(oi)[0];
            Tensor& ga = g.grd(ai);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
        };
    }
    return out_v;
}

Value Graph::mean(Value a) {
    check(a, "mean");
    const Tensor& ta = val(a.id());
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    const double inv_n = 1.0 / static_cast<double>(ta.size());
    Tensor out = Tensor::scalar(s * inv_n);
    ensure_finite(out, "mean");
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai, inv_n](Graph& g) {
            const double go = g.grd(oi)[0] * inv_n;
            Tensor& ga = g.grd(ai);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
        };
    }
    return out_v;
}

Value Graph::pick(Value a, std::size_t flat_index) {
    check(a, "pick");
    const Tensor& ta = val(a.id());
    if (flat_index >= ta.size())
        throw std::invalid_argument("pick: index " + std::to_string(flat_index) +
                                    " out of range for " + ta.shape_str());
    Tensor out = Tensor::scalar(ta[flat_index]);
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai, flat_index](Graph& g) {
            g.grd(ai)[flat_index] += g.grd(oi)[0];
        };
    }
    return out_v;
}

Value Graph::pick_row(Value a, std::size_t row) {
    check(a, "pick_row");
    const Tensor& ta = val(a.id());
    if (ta.rank() != 2)
        throw std::invalid_argument("pick_row: expected rank-2 tensor, got " + ta.shape_str());
    if (row >= ta.dim(0))
        throw std::invalid_argument("pick_row: row " + std::to_string(row) +
                                    " out of range for " + ta.shape_str());
    const std::size_t C = ta.dim(1);
    Tensor out({C});
    for (std::size_t c = 0; c < C; ++c) out[c] = ta[row * C + c];
    Value out_v = add_node(std::move(out), rg(a.id()), nullptr);
    if (rg(a.id())) {
        std::size_t oi = out_v.id(), ai = a.id();
        nodes_[oi].backprop = [oi, ai, row, C](Graph& g) {
            const Tensor& go = g.grd(oi);
            Tensor& ga = g.grd(ai);
            for (std::size_t c = 0; c < C; ++c) ga[row * C + c] += go[c];
        };
    }
    return out_v;
}

Value Graph::piecewise_linear(Value x, std::shared_ptr<const std::vector<double>> knots,
                              std::shared_ptr<const std::vector<double>> values) {
    check(x, "piecewise_linear");
    if (!knots || !values || knots->size() != values->size() || knots->size() < 2)
        throw std::invalid_argument("piecewise_linear: need >= 2 knots with matching values");
    for (std::size_t i = 1; i < knots->size(); ++i)
        if (!((*knots)[i] > (*knots)[i - 1]))
            throw std::invalid_argument("piecewise_linear: knots must be strictly increasing");
    const Tensor& tx = val(x.id());
    const auto& k = *knots;
    const auto& v = *values;
    Tensor out(tx.shape());
    for (std::size_t i = 0; i < tx.size(); ++i) {
        std::size_t s = pl_segment(k, tx[i]);
        double slope = (v[s + 1] - v[s]) / (k[s + 1] - k[s]);
        out[i] = v[s] + slope * (tx[i] - k[s]);
    }
    ensure_finite(out, "piecewise_linear");
    Value out_v = add_node(std::move(out), rg(x.id()), nullptr);
    if (rg(x.id())) {
        std::size_t oi = out_v.id(), xi = x.id();
        nodes_[oi].backprop = [oi, xi, knots, values](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& tx = g.val(xi);
            const auto& k = *knots;
            const auto& v = *values;
            Tensor& gx = g.grd(xi);
            for (std::size_t i = 0; i < go.size(); ++i) {
                std::size_t s = pl_segment(k, tx[i]);
                gx[i] += go[i] * (v[s + 1] - v[s]) / (k[s + 1] - k[s]);
            }
        };
    }
    return out_v;
}

// ---------------------------------------------------------------------------
// fused network ops

Value Graph::batchnorm(Value x, Value gamma, Value beta, Tensor& running_mean,
                       Tensor& running_var, bool training, double eps, double momentum) {
    check(x, "batchnorm");
    check(gamma, "batchnorm");
    check(beta, "batchnorm");
    const Tensor& tx = val(x.id());
    if (tx.rank() != 2 && tx.rank() != 4)
        throw std::invalid_argument("batchnorm: expected rank-2 or rank-4 input, got " +
                                    tx.shape_str());
    const std::size_t B = tx.dim(0);
    const std::size_t F = tx.rank() == 2 ? tx.dim(1) : tx.dim(1); // features or channels
    const std::size_t inner = tx.rank() == 2 ? 1 : tx.dim(2) * tx.dim(3);
    const std::size_t group = B * inner; // samples per statistic
    const Tensor& tg = val(gamma.id());
    const Tensor& tb = val(beta.id());
    if (tg.size() != F || tb.size() != F || running_mean.size() != F || running_var.size() != F)
        throw std::invalid_argument("batchnorm: parameter size does not match feature count " +
                                    std::to_string(F));
    if (training && B < 2)
        throw std::invalid_argument("batchnorm: training mode requires batch size >= 2, got " +
                                    std::to_string(B));

    // flat index of (sample b, feature f, inner i)
    auto idx = [&](std::size_t b, std::size_t f, std::size_t i) {
        return (b * F + f) * inner + i;
    };

    auto mean_t = std::make_shared<Tensor>(std::vector<std::size_t>{F});
    auto inv_std_t = std::make_shared<Tensor>(std::vector<std::size_t>{F});
    if (training) {
        for (std::size_t f = 0; f < F; ++f) {
            double m = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < inner; ++i) m += tx[idx(b, f, i)];
            m /= static_cast<double>(group);
            double var = 0.0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < inner; ++i) {
                    double d = tx[idx(b, f, i)] - m;
                    var += d * d;
                }
            var /= static_cast<double>(group); // biased, used for normalization
            (*mean_t)[f] = m;
            (*inv_std_t)[f] = 1.0 / std::sqrt(var + eps);
            double unbiased = group > 1 ? var * static_cast<double>(group) /
                                              static_cast<double>(group - 1)
                                        : var;
            running_mean[f] = momentum * running_mean[f] + (1.0 - momentum) * m;
            running_var[f] = momentum * running_var[f] + (1.0 - momentum) * unbiased;
        }
    } else {
        for (std::size_t f = 0; f < F; ++f) {
            (*mean_t)[f] = running_mean[f];
            (*inv_std_t)[f] = 1.0 / std::sqrt(running_var[f] + eps);
        }
    }

    Tensor out(tx.shape());
    auto xhat = std::make_shared<Tensor>(tx.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t i = 0; i < inner; ++i) {
                std::size_t p = idx(b, f, i);
                double xh = (tx[p] - (*mean_t)[f]) * (*inv_std_t)[f];
                (*xhat)[p] = xh;
                out[p] = tg[f] * xh + tb[f];
            }
    ensure_finite(out, "batchnorm");

    bool needs = rg(x.id()) || rg(gamma.id()) || rg(beta.id());
    Value out_v = add_node(std::move(out), needs, nullptr);
    if (needs) {
        std::size_t oi = out_v.id(), xi = x.id(), gi = gamma.id(), bi = beta.id();
        nodes_[oi].backprop = [oi, xi, gi, bi, B, F, inner, group, training, xhat,
                               inv_std_t](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& tg = g.val(gi);
            auto idx = [&](std::size_t b, std::size_t f, std::size_t i) {
                return (b * F + f) * inner + i;
            };
            if (g.rg(bi)) {
                Tensor& gb = g.grd(bi);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t f = 0; f < F; ++f)
                        for (std::size_t i = 0; i < inner; ++i) gb[f] += go[idx(b, f, i)];
            }
            if (g.rg(gi)) {
                Tensor& gg = g.grd(gi);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t f = 0; f < F; ++f)
                        for (std::size_t i = 0; i < inner; ++i) {
                            std::size_t p = idx(b, f, i);
                            gg[f] += go[p] * (*xhat)[p];
                        }
            }
            if (g.rg(xi)) {
                Tensor& gx = g.grd(xi);
                if (!training) {
                    // affine map through running statistics
                    for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t f = 0; f < F; ++f)
                            for (std::size_t i = 0; i < inner; ++i) {
                                std::size_t p = idx(b, f, i);
                                gx[p] += go[p] * tg[f] * (*inv_std_t)[f];
                            }
                } else {
                    const double n = static_cast<double>(group);
                    for (std::size_t f = 0; f < F; ++f) {
                        double sum_g = 0.0, sum_gx = 0.0;
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t i = 0; i < inner; ++i) {
                                std::size_t p = idx(b, f, i);
                                sum_g += go[p];
                                sum_gx += go[p] * (*xhat)[p];
                            }
                        const double scale = tg[f] * (*inv_std_t)[f] / n;
                        for (std::size_t b = 0; b < B; ++b)
                            for (std::size_t i = 0; i < inner; ++i) {
                                std::size_t p = idx(b, f, i);
                                gx[p] += scale * (n * go[p] - sum_g - (*xhat)[p] * sum_gx);
                            }
                    }
                }
            }
        };
    }
    return out_v;
}

Value Graph::cross_entropy(Value logits, const std::vector<int>& labels) {
    check(logits, "cross_entropy");
    const Tensor& tl = val(logits.id());
    if (tl.rank() != 2)
        throw std::invalid_argument("cross_entropy: expected logits [B,K], got " +
                                    tl.shape_str());
    const std::size_t B = tl.dim(0), K = tl.dim(1);
    if (labels.size() != B)
        throw std::invalid_argument("cross_entropy: label count " +
                                    std::to_string(labels.size()) + " does not match batch " +
                                    std::to_string(B));
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= K)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(K) + ")");

    auto probs = std::make_shared<Tensor>(tl.shape());
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = tl.data() + b * K;
        double m = row[0];
        for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
        const double log_z = std::log(z);
        loss += log_z - (row[labels[b]] - m);
        for (std::size_t k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(row[k] - m) / z;
    }
    loss /= static_cast<double>(B);
    Tensor out = Tensor::scalar(loss);
    ensure_finite(out, "cross_entropy");
    Value out_v = add_node(std::move(out), rg(logits.id()), nullptr);
    if (rg(logits.id())) {
        std::size_t oi = out_v.id(), li = logits.id();
        auto labels_copy = std::make_shared<std::vector<int>>(labels);
        nodes_[oi].backprop = [oi, li, probs, labels_copy, B, K](Graph& g) {
            const double go = g.grd(oi)[0] / static_cast<double>(B);
            Tensor& gl = g.grd(li);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t k = 0; k < K; ++k)
                    gl[b * K + k] += go * (*probs)[b * K + k];
                gl[b * K + (*labels_copy)[b]] -= go;
            }
        };
    }
    return out_v;
}

Value Graph::softmax_rows(Value logits) {
    check(logits, "softmax_rows");
    const Tensor& tl = val(logits.id());
    if (tl.rank() != 2)
        throw std::invalid_argument("softmax_rows: expected [B,K], got " + tl.shape_str());
    const std::size_t B = tl.dim(0), K = tl.dim(1);
    Tensor out(tl.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = tl.data() + b * K;
        double m = row[0];
        for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
        for (std::size_t k = 0; k < K; ++k) out[b * K + k] = std::exp(row[k] - m) / z;
    }
    ensure_finite(out, "softmax_rows");
    Value out_v = add_node(std::move(out), rg(logits.id()), nullptr);
    if (rg(logits.id())) {
        std::size_t oi = out_v.id(), li = logits.id();
        nodes_[oi].backprop = [oi, li, B, K](Graph& g) {
            const Tensor& go = g.grd(oi);
            const Tensor& s = g.val(oi);
            Tensor& gl = g.grd(li);
            for (std::size_t b = 0; b < B; ++b) {
                double dot = 0.0;
                for (std::size_t k = 0; k < K; ++k) dot += go[b * K + k] * s[b * K + k];
                for (std::size_t k = 0; k < K; ++k)
                    gl[b * K + k] += s[b * K + k] * (go[b * K + k] - dot);
            }
        };
    }
    return out_v;
}

} // namespace splashlab
