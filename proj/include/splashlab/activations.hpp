#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "splashlab/graph.hpp"
#include "splashlab/tensor.hpp"

namespace splashlab {

/// The piecewise-linear families, ordered from most general to the fixed-hinge
/// form used by SPLASH units.
enum class PlFamily { general, continuous, grounded, symmetric, fixed };

/// Parameter count for a family with S hinges:
/// general 3S+2, continuous 2S+2, grounded 2S+1, symmetric S+1+floor(S/2),
/// fixed S+1. S must be odd so that symmetry can keep one hinge at zero.
int param_count(PlFamily family, int S);

const char* family_name(PlFamily family);

/// Hinge locations and segment slopes for one piecewise-linear function.
/// For the fixed family the hinges are the (S+1)/2 non-negative locations
/// {0, b^2, ...}; the mirrored negative hinges are implicit and the hinge
/// list is immutable after construction.
class PiecewiseLinearSpec {
public:
    static PiecewiseLinearSpec fixed(int S, std::vector<double> hinges,
                                     std::vector<double> pos_slopes,
                                     std::vector<double> neg_slopes);
    /// Fixed-family spec shaped like a ReLU: a_+^1 = 1, everything else 0.
    static PiecewiseLinearSpec fixed_relu_init(int S, std::vector<double> hinges);
    /// Zero-initialized parameter block of any family (used for the parameter
    /// count invariants; only the fixed family is evaluable).
    static PiecewiseLinearSpec of_family(PlFamily family, int S);

    PlFamily family() const { return family_; }
    int hinge_count() const { return s_; } // S
    const std::vector<double>& hinges() const { return hinges_; }
    std::vector<double>& pos_slopes() { return pos_; }
    const std::vector<double>& pos_slopes() const { return pos_; }
    std::vector<double>& neg_slopes() { return neg_; }
    const std::vector<double>& neg_slopes() const { return neg_; }
    const std::vector<double>& free_slopes() const { return slopes_; }
    const std::vector<double>& intercepts() const { return intercepts_; }

    int param_count() const;

private:
    PiecewiseLinearSpec() = default;
    PlFamily family_ = PlFamily::fixed;
    int s_ = 1;
    std::vector<double> hinges_;
    std::vector<double> pos_, neg_;          // fixed family slopes
    std::vector<double> slopes_, intercepts_; // other families
};

/// S=7 with hinges at 0, 1, 2, 2.5 (mirrored to -1, -2, -2.5) and the
/// ReLU-shaped initialization.
PiecewiseLinearSpec make_default_splash(int S = 7);

/// Hinge locations used for the default SPLASH at a given odd S: the first
/// (S+1)/2 entries of {0, 1, 2, 2.5, 3, 3.5, ...}.
std::vector<double> default_hinges(int S);

enum class Sharing { per_layer, per_neuron };
enum class SplashConstraint { none, positive, negative, frozen };

const char* constraint_name(SplashConstraint c);

/// Projection applied after each optimizer step: the negative constraint
/// clamps a_-^1 >= 0, the positive constraint clamps a_-^1 <= 0.
void project_constraint(std::vector<double>& neg_slopes, SplashConstraint constraint);
PiecewiseLinearSpec apply_constraint(const PiecewiseLinearSpec& spec,
                                     SplashConstraint constraint);

// -- evaluation -------------------------------------------------------------

double splash_eval_scalar(const PiecewiseLinearSpec& spec, double x);
Tensor splash_eval(const PiecewiseLinearSpec& spec, const Tensor& x);

struct SplashValues {
    Value out;
    Value pos_slopes; // [m] (per layer) or [m,U] (per neuron)
    Value neg_slopes;
};

/// Record h(x) = sum_s a_+^s max(0, x - b^s) + sum_s a_-^s max(0, -x - b^s)
/// on the graph, with the slopes as leaves so that backward produces both
/// input and slope gradients.
SplashValues splash_eval(Graph& g, const PiecewiseLinearSpec& spec, Value x,
                         bool trainable_slopes = true);

/// Same recording, but with caller-owned slope leaves (used by network layers;
/// per-neuron slopes are [m,U] with one row per hinge).
Value splash_apply(Graph& g, Value x, Value pos_slopes, Value neg_slopes,
                   const std::vector<double>& hinges, Sharing sharing);

/// APL unit: h(x) = max(0,x) + sum_s a_s max(0, -x + b_s) with fixed hinges.
Value apl_apply(Graph& g, Value x, Value slopes, const std::vector<double>& hinges);

/// PReLU with a learned scalar slope for the negative half.
Value prelu_apply(Graph& g, Value x, Value alpha);

// -- fixed baselines ---------------------------------------------------------

struct ActivationKind {
    enum class Tag {
        splash,
        relu,
        leaky_relu,
        prelu,
        tanh,
        sigmoid,
        elu,
        swish,
        apl,
        frozen_shape
    };

    Tag tag = Tag::relu;
    PiecewiseLinearSpec spec = make_default_splash();
    Sharing sharing = Sharing::per_layer;
    SplashConstraint constraint = SplashConstraint::none;
    double alpha = 0.2;       // leaky slope / elu alpha
    double prelu_init = 0.25; // initial learned slope
    double beta = 0.2;        // swish
    int apl_s = 5;
    std::vector<double> apl_hinges = {-2.0, -1.0, 0.0, 1.0, 2.0};
    std::shared_ptr<const std::vector<double>> shape_x, shape_h; // frozen_shape knots

    static ActivationKind splash(PiecewiseLinearSpec spec,
                                 Sharing sharing = Sharing::per_layer,
                                 SplashConstraint constraint = SplashConstraint::none);
    static ActivationKind relu();
    static ActivationKind leaky_relu(double alpha = 0.2);
    static ActivationKind prelu(double init = 0.25);
    static ActivationKind tanh_unit();
    static ActivationKind sigmoid_unit();
    static ActivationKind elu(double alpha = 1.0);
    static ActivationKind swish(double beta = 0.2);
    static ActivationKind apl();
    static ActivationKind frozen_shape(std::vector<double> x, std::vector<double> h);
    static ActivationKind parse(const std::string& name); // throws on unknown names

    std::string name() const;
    bool has_trainable_slots() const;
    /// Trainable parameter count contributed per layer (width = units/channels,
    /// relevant for per-neuron sharing).
    std::size_t trainable_slot_count(std::size_t width) const;
};

/// Plain-tensor evaluation of any activation kind at its initial parameters.
Tensor baseline_eval(const ActivationKind& kind, const Tensor& x);

/// Apply a stateless activation (anything except splash/prelu/apl) on the graph.
Value apply_fixed_activation(Graph& g, const ActivationKind& kind, Value x);

// -- shape snapshots ----------------------------------------------------------

struct ShapeSnapshot {
    std::string layer;
    int epoch = 0;
    std::vector<double> x;
    std::vector<double> h;
};

/// Evaluate the spec on a uniform grid of n points over [lo, hi].
std::pair<std::vector<double>, std::vector<double>>
snapshot_shape(const PiecewiseLinearSpec& spec, double lo, double hi, int n);

std::string snapshot_to_json(const ShapeSnapshot& snap);
ShapeSnapshot snapshot_from_json(const std::string& text);

} // namespace splashlab
