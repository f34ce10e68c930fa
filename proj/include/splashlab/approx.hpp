#pragma once

#include <functional>

#include "splashlab/activations.hpp"

namespace splashlab {

using ScalarFn = std::function<double(double)>;

/// Result of fitting a fixed-family piecewise-linear function to a grounded
/// target on [-B, B].
struct FitResult {
    PiecewiseLinearSpec spec = make_default_splash(1);
    int S = 1;
    double sup_error = 0.0;    // measured on the dense evaluation grid
    double delta = 0.0;        // sub-interval bound the construction satisfies
    double B = 0.0;
    double requested_eps = 0.0;
};

/// Largest input gap delta (from a geometric ladder, bisection-refined) such
/// that |f(x)-f(y)| <= eps/2 whenever |x-y| <= delta, estimated on a dense
/// grid over [-B, B]. The factor 2 leaves margin for the grid estimate.
/// Requires f(0) == 0 within 1e-9 and grid_n >= 1000.
double estimate_modulus(const ScalarFn& f, double B, double eps, int grid_n = 4001);

/// Interpolate f through equally spaced symmetric hinges with the given odd S;
/// slopes are recovered by telescoping consecutive secant slopes.
FitResult fit_splash_with_s(const ScalarFn& f, double B, int S);

/// Fit within eps: returns a small S when the target is exactly representable
/// on a coarse hinge grid, otherwise chooses the smallest odd S exceeding
/// 2B/delta - 1 from the estimated modulus of continuity.
FitResult fit_splash(const ScalarFn& f, double B, double eps);

/// General-interval entry point; symmetric hinges cannot represent an
/// asymmetric interval, so A must equal -B.
FitResult fit_splash_interval(const ScalarFn& f, double A, double B, double eps);

/// Max |f - spec| over a uniform grid with ~points_per_segment points per
/// sub-interval of [-B, B].
double measured_sup_error(const ScalarFn& f, const PiecewiseLinearSpec& spec, double B,
                          int points_per_segment = 10);

} // namespace splashlab
