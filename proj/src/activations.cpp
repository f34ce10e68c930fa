#include "splashlab/activations.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace splashlab {

namespace {

void require_odd(int S) {
    if (S < 1 || S % 2 == 0)
        throw std::invalid_argument("S must be an odd positive hinge count, got " +
                                    std::to_string(S));
}

void validate_fixed_hinges(const std::vector<double>& hinges, int S) {
    const std::size_t m = static_cast<std::size_t>((S + 1) / 2);
    if (hinges.size() != m)
        throw std::invalid_argument("fixed family with S=" + std::to_string(S) + " needs " +
                                    std::to_string(m) + " non-negative hinges, got " +
                                    std::to_string(hinges.size()));
    if (hinges[0] != 0.0)
        throw std::invalid_argument("fixed family requires b^1 == 0");
    for (std::size_t i = 1; i < m; ++i)
        if (!(hinges[i] > hinges[i - 1]))
            throw std::invalid_argument("fixed family hinges must be strictly increasing");
}

} // namespace

int param_count(PlFamily family, int S) {
    require_odd(S);
    switch (family) {
        case PlFamily::general: return 3 * S + 2;
        case PlFamily::continuous: return 2 * S + 2;
        case PlFamily::grounded: return 2 * S + 1;
        case PlFamily::symmetric: return S + 1 + S / 2;
        case PlFamily::fixed: return S + 1;
    }
    throw std::logic_error("unknown family");
}

const char* family_name(PlFamily family) {
    switch (family) {
        case PlFamily::general: return "general";
        case PlFamily::continuous: return "continuous";
        case PlFamily::grounded: return "grounded";
        case PlFamily::symmetric: return "symmetric";
        case PlFamily::fixed: return "fixed";
    }
    return "?";
}

PiecewiseLinearSpec PiecewiseLinearSpec::fixed(int S, std::vector<double> hinges,
                                               std::vector<double> pos_slopes,
                                               std::vector<double> neg_slopes) {
    require_odd(S);
    validate_fixed_hinges(hinges, S);
    const std::size_t m = static_cast<std::size_t>((S + 1) / 2);
    if (pos_slopes.size() != m || neg_slopes.size() != m)
        throw std::invalid_argument("fixed family needs " + std::to_string(m) +
                                    " slopes per side");
    PiecewiseLinearSpec spec;
    spec.family_ = PlFamily::fixed;
    spec.s_ = S;
    spec.hinges_ = std::move(hinges);
    spec.pos_ = std::move(pos_slopes);
    spec.neg_ = std::move(neg_slopes);
    return spec;
}

PiecewiseLinearSpec PiecewiseLinearSpec::fixed_relu_init(int S, std::vector<double> hinges) {
    const std::size_t m = static_cast<std::size_t>((S + 1) / 2);
    std::vector<double> pos(m, 0.0), neg(m, 0.0);
    pos[0] = 1.0;
    return fixed(S, std::move(hinges), std::move(pos), std::move(neg));
}

PiecewiseLinearSpec PiecewiseLinearSpec::of_family(PlFamily family, int S) {
    require_odd(S);
    PiecewiseLinearSpec spec;
    spec.family_ = family;
    spec.s_ = S;
    switch (family) {
        case PlFamily::general:
            spec.hinges_.assign(S, 0.0);
            spec.slopes_.assign(S + 1, 0.0);
            spec.intercepts_.assign(S + 1, 0.0);
            break;
        case PlFamily::continuous:
            spec.hinges_.assign(S, 0.0);
            spec.slopes_.assign(S + 1, 0.0);
            spec.intercepts_.assign(1, 0.0);
            break;
        case PlFamily::grounded:
            spec.hinges_.assign(S, 0.0);
            spec.slopes_.assign(S + 1, 0.0);
            break;
        case PlFamily::symmetric:
            spec.hinges_.assign(S / 2, 0.0); // the zero hinge is implicit
            spec.slopes_.assign(S + 1, 0.0);
            break;
        case PlFamily::fixed: {
            std::vector<double> h = default_hinges(S);
            return fixed_relu_init(S, std::move(h));
        }
    }
    return spec;
}

int PiecewiseLinearSpec::param_count() const {
    if (family_ == PlFamily::fixed)
        return static_cast<int>(pos_.size() + neg_.size());
    int n = static_cast<int>(slopes_.size() + intercepts_.size() + hinges_.size());
    return n;
}

std::vector<double> default_hinges(int S) {
    require_odd(S);
    static const std::vector<double> ladder = {0.0, 1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
    const std::size_t m = static_cast<std::size_t>((S + 1) / 2);
    if (m > ladder.size())
        throw std::invalid_argument("no default hinge placement for S=" + std::to_string(S));
    return std::vector<double>(ladder.begin(), ladder.begin() + m);
}

PiecewiseLinearSpec make_default_splash(int S) {
    return PiecewiseLinearSpec::fixed_relu_init(S, default_hinges(S));
}

const char* constraint_name(SplashConstraint c) {
    switch (c) {
        case SplashConstraint::none: return "none";
        case SplashConstraint::positive: return "positive";
        case SplashConstraint::negative: return "negative";
        case SplashConstraint::frozen: return "frozen";
    }
    return "?";
}

void project_constraint(std::vector<double>& neg_slopes, SplashConstraint constraint) {
    if (neg_slopes.empty()) return;
    if (constraint == SplashConstraint::negative)
        neg_slopes[0] = std::max(0.0, neg_slopes[0]);
    else if (constraint == SplashConstraint::positive)
        neg_slopes[0] = std::min(0.0, neg_slopes[0]);
}

PiecewiseLinearSpec apply_constraint(const PiecewiseLinearSpec& spec,
                                     SplashConstraint constraint) {
    PiecewiseLinearSpec out = spec;
    project_constraint(out.neg_slopes(), constraint);
    return out;
}

// -- evaluation ---------------------------------------------------------------

double splash_eval_scalar(const PiecewiseLinearSpec& spec, double x) {
    if (spec.family() != PlFamily::fixed)
        throw std::invalid_argument("splash_eval: only the fixed family is evaluable");
    const auto& b = spec.hinges();
    const auto& ap = spec.pos_slopes();
    const auto& an = spec.neg_slopes();
    double h = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s) {
        h += ap[s] * std::max(0.0, x - b[s]);
        h += an[s] * std::max(0.0, -x - b[s]);
    }
    return h;
}

Tensor splash_eval(const PiecewiseLinearSpec& spec, const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = splash_eval_scalar(spec, x[i]);
    return out;
}

Value splash_apply(Graph& g, Value x, Value pos_slopes, Value neg_slopes,
                   const std::vector<double>& hinges, Sharing sharing) {
    const std::size_t m = hinges.size();
    Value neg_x = g.mul_scalar(x, -1.0);
    Value acc;
    bool first = true;
    auto scaled = [&](Value term, Value slopes, std::size_t s) {
        if (sharing == Sharing::per_layer) return g.mul(term, g.pick(slopes, s));
        Value row = g.pick_row(slopes, s);
        if (g.value(x).rank() == 4) return g.mul_chanvec(term, row);
        return g.mul_rowvec(term, row);
    };
    for (std::size_t s = 0; s < m; ++s) {
        Value tp = scaled(g.relu(g.add_scalar(x, -hinges[s])), pos_slopes, s);
        Value tn = scaled(g.relu(g.add_scalar(neg_x, -hinges[s])), neg_slopes, s);
        Value both = g.add(tp, tn);
        acc = first ? both : g.add(acc, both);
        first = false;
    }
    return acc;
}

SplashValues splash_eval(Graph& g, const PiecewiseLinearSpec& spec, Value x,
                         bool trainable_slopes) {
    if (spec.family() != PlFamily::fixed)
        throw std::invalid_argument("splash_eval: only the fixed family is evaluable");
    const std::size_t m = spec.hinges().size();
    Value pos = g.leaf(Tensor({m}, spec.pos_slopes()), trainable_slopes);
    Value neg = g.leaf(Tensor({m}, spec.neg_slopes()), trainable_slopes);
    Value out = splash_apply(g, x, pos, neg, spec.hinges(), Sharing::per_layer);
    return {out, pos, neg};
}

Value apl_apply(Graph& g, Value x, Value slopes, const std::vector<double>& hinges) {
    Value acc = g.relu(x);
    Value neg_x = g.mul_scalar(x, -1.0);
    for (std::size_t s = 0; s < hinges.size(); ++s) {
        Value term = g.relu(g.add_scalar(neg_x, hinges[s])); // max(0, -x + b_s)
        acc = g.add(acc, g.mul(term, g.pick(slopes, s)));
    }
    return acc;
}

Value prelu_apply(Graph& g, Value x, Value alpha) {
    // relu(x) - alpha * relu(-x)
    Value neg_part = g.relu(g.mul_scalar(x, -1.0));
    return g.sub(g.relu(x), g.mul(neg_part, alpha));
}

// -- activation kinds -----------------------------------------------------------

ActivationKind ActivationKind::splash(PiecewiseLinearSpec spec, Sharing sharing,
                                      SplashConstraint constraint) {
    ActivationKind k;
    k.tag = Tag::splash;
    k.spec = std::move(spec);
    k.sharing = sharing;
    k.constraint = constraint;
    return k;
}

ActivationKind ActivationKind::relu() {
    ActivationKind k;
    k.tag = Tag::relu;
    return k;
}

ActivationKind ActivationKind::leaky_relu(double alpha) {
    ActivationKind k;
    k.tag = Tag::leaky_relu;
    k.alpha = alpha;
    return k;
}

ActivationKind ActivationKind::prelu(double init) {
    ActivationKind k;
    k.tag = Tag::prelu;
    k.prelu_init = init;
    return k;
}

ActivationKind ActivationKind::tanh_unit() {
    ActivationKind k;
    k.tag = Tag::tanh;
    return k;
}

ActivationKind ActivationKind::sigmoid_unit() {
    ActivationKind k;
    k.tag = Tag::sigmoid;
    return k;
}

ActivationKind ActivationKind::elu(double alpha) {
    ActivationKind k;
    k.tag = Tag::elu;
    k.alpha = alpha;
    return k;
}

ActivationKind ActivationKind::swish(double beta) {
    ActivationKind k;
    k.tag = Tag::swish;
    k.beta = beta;
    return k;
}

ActivationKind ActivationKind::apl() {
    ActivationKind k;
    k.tag = Tag::apl;
    return k;
}

ActivationKind ActivationKind::frozen_shape(std::vector<double> x, std::vector<double> h) {
    if (x.size() != h.size() || x.size() < 2)
        throw std::invalid_argument("frozen_shape: need >= 2 grid points");
    ActivationKind k;
    k.tag = Tag::frozen_shape;
    k.shape_x = std::make_shared<const std::vector<double>>(std::move(x));
    k.shape_h = std::make_shared<const std::vector<double>>(std::move(h));
    return k;
}

ActivationKind ActivationKind::parse(const std::string& name) {
    if (name == "splash") return splash(make_default_splash());
    if (name == "splash-positive")
        return splash(make_default_splash(), Sharing::per_layer, SplashConstraint::positive);
    if (name == "splash-negative")
        return splash(make_default_splash(), Sharing::per_layer, SplashConstraint::negative);
    if (name == "relu") return relu();
    if (name == "leaky-relu") return leaky_relu();
    if (name == "prelu") return prelu();
    if (name == "tanh") return tanh_unit();
    if (name == "sigmoid") return sigmoid_unit();
    if (name == "elu") return elu();
    if (name == "swish") return swish();
    if (name == "apl") return apl();
    throw std::invalid_argument("unknown activation: " + name);
}

std::string ActivationKind::name() const {
    switch (tag) {
        case Tag::splash:
            switch (constraint) {
                case SplashConstraint::none: return "splash";
                case SplashConstraint::positive: return "splash-positive";
                case SplashConstraint::negative: return "splash-negative";
                case SplashConstraint::frozen: return "fixed-splash";
            }
            return "splash";
        case Tag::relu: return "relu";
        case Tag::leaky_relu: return "leaky-relu";
        case Tag::prelu: return "prelu";
        case Tag::tanh: return "tanh";
        case Tag::sigmoid: return "sigmoid";
        case Tag::elu: return "elu";
        case Tag::swish: return "swish";
        case Tag::apl: return "apl";
        case Tag::frozen_shape: return "frozen-shape";
    }
    return "?";
}

bool ActivationKind::has_trainable_slots() const {
    switch (tag) {
        case Tag::splash: return constraint != SplashConstraint::frozen;
        case Tag::prelu:
        case Tag::apl: return true;
        default: return false;
    }
}

std::size_t ActivationKind::trainable_slot_count(std::size_t width) const {
    if (!has_trainable_slots()) return 0;
    switch (tag) {
        case Tag::splash: {
            std::size_t slopes = spec.pos_slopes().size() + spec.neg_slopes().size();
            return sharing == Sharing::per_neuron ? slopes * width : slopes;
        }
        case Tag::prelu: return 1;
        case Tag::apl: return apl_hinges.size();
        default: return 0;
    }
}

Tensor baseline_eval(const ActivationKind& kind, const Tensor& x) {
    Graph g;
    Value vx = g.leaf(x, false);
    Value out;
    switch (kind.tag) {
        case ActivationKind::Tag::splash:
            out = splash_eval(g, kind.spec, vx, false).out;
            break;
        case ActivationKind::Tag::prelu: {
            Value alpha = g.leaf(Tensor::scalar(kind.prelu_init), false);
            out = prelu_apply(g, vx, alpha);
            break;
        }
        case ActivationKind::Tag::apl: {
            Value slopes = g.leaf(Tensor({kind.apl_hinges.size()}), false);
            out = apl_apply(g, vx, slopes, kind.apl_hinges);
            break;
        }
        default:
            out = apply_fixed_activation(g, kind, vx);
            break;
    }
    return g.value(out);
}

Value apply_fixed_activation(Graph& g, const ActivationKind& kind, Value x) {
    using Tag = ActivationKind::Tag;
    switch (kind.tag) {
        case Tag::relu: return g.relu(x);
        case Tag::leaky_relu: {
            // relu(x) - alpha*relu(-x); an alpha given with a negative sign is
            // interpreted as the same magnitude on the negative half
            double a = std::fabs(kind.alpha);
            Value neg = g.relu(g.mul_scalar(x, -1.0));
            return g.sub(g.relu(x), g.mul_scalar(neg, a));
        }
        case Tag::tanh: return g.tanh(x);
        case Tag::sigmoid: return g.sigmoid(x);
        case Tag::elu: return g.elu(x, kind.alpha);
        case Tag::swish: return g.mul(x, g.sigmoid(g.mul_scalar(x, kind.beta)));
        case Tag::frozen_shape: return g.piecewise_linear(x, kind.shape_x, kind.shape_h);
        default:
            throw std::invalid_argument("apply_fixed_activation: " + kind.name() +
                                        " carries trainable state");
    }
}

// -- snapshots ------------------------------------------------------------------

std::pair<std::vector<double>, std::vector<double>>
snapshot_shape(const PiecewiseLinearSpec& spec, double lo, double hi, int n) {
    if (lo >= hi)
        throw std::invalid_argument("snapshot_shape: lo must be < hi");
    if (n < 2) throw std::invalid_argument("snapshot_shape: need at least 2 grid points");
    std::vector<double> xs(n), hs(n);
    for (int i = 0; i < n; ++i) {
        double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        xs[i] = x;
        hs[i] = splash_eval_scalar(spec, x);
    }
    return {std::move(xs), std::move(hs)};
}

std::string snapshot_to_json(const ShapeSnapshot& snap) {
    nlohmann::json j;
    j["layer"] = snap.layer;
    j["epoch"] = snap.epoch;
    j["x"] = snap.x;
    j["h"] = snap.h;
    return j.dump();
}

ShapeSnapshot snapshot_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ShapeSnapshot s;
    s.layer = j.at("layer").get<std::string>();
    s.epoch = j.at("epoch").get<int>();
    s.x = j.at("x").get<std::vector<double>>();
    s.h = j.at("h").get<std::vector<double>>();
    return s;
}

} // namespace splashlab
