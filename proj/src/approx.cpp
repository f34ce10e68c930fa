#include "splashlab/approx.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

namespace splashlab {

namespace {

void check_grounded(const ScalarFn& f) {
    if (std::fabs(f(0.0)) > 1e-9)
        throw std::invalid_argument(
            "approx: target is not grounded (f(0) != 0); only grounded functions are "
            "representable");
}

// max over the grid of (window max - window min) for windows of `w` steps
double grid_oscillation(const std::vector<double>& fx, std::size_t w) {
    std::deque<std::size_t> maxq, minq;
    double worst = 0.0;
    for (std::size_t i = 0; i < fx.size(); ++i) {
        while (!maxq.empty() && fx[maxq.back()] <= fx[i]) maxq.pop_back();
        maxq.push_back(i);
        while (!minq.empty() && fx[minq.back()] >= fx[i]) minq.pop_back();
        minq.push_back(i);
        if (i >= w) {
            std::size_t lo = i - w;
            while (maxq.front() < lo) maxq.pop_front();
            while (minq.front() < lo) minq.pop_front();
        }
        worst = std::max(worst, fx[maxq.front()] - fx[minq.front()]);
    }
    return worst;
}

} // namespace

double estimate_modulus(const ScalarFn& f, double B, double eps, int grid_n) {
    if (B <= 0.0) throw std::invalid_argument("estimate_modulus: B must be positive");
    if (eps <= 0.0) throw std::invalid_argument("estimate_modulus: eps must be positive");
    if (grid_n < 1000)
        throw std::invalid_argument("estimate_modulus: grid_n must be >= 1000");
    check_grounded(f);

    std::vector<double> fx(grid_n);
    const double step = 2.0 * B / static_cast<double>(grid_n - 1);
    for (int i = 0; i < grid_n; ++i) fx[i] = f(-B + step * i);

    // tolerance absorbs float rounding in the grid values right at the boundary
    const double target = (eps / 2.0) * (1.0 + 1e-12);
    auto osc = [&](double delta) {
        std::size_t w = static_cast<std::size_t>(std::floor(delta / step));
        return grid_oscillation(fx, std::max<std::size_t>(w, 1));
    };

    // geometric descent to bracket the largest passing delta
    double hi = 2.0 * B;
    if (osc(hi) <= target) return hi;
    double lo = hi;
    while (lo > step) {
        lo *= 0.7;
        if (osc(lo) <= target) break;
        hi = lo;
    }
    if (osc(lo) > target)
        throw std::runtime_error("estimate_modulus: no delta above grid resolution satisfies "
                                 "the oscillation bound; increase grid_n or eps");
    for (int it = 0; it < 50; ++it) {
        double mid = 0.5 * (lo + hi);
        (osc(mid) <= target ? lo : hi) = mid;
    }
    return lo;
}

FitResult fit_splash_with_s(const ScalarFn& f, double B, int S) {
    if (B <= 0.0) throw std::invalid_argument("fit: B must be positive");
    if (S < 1 || S % 2 == 0)
        throw std::invalid_argument("fit: S must be odd and positive, got " + std::to_string(S));
    check_grounded(f);

    const int m = (S + 1) / 2; // hinges per side incl. zero; also segments per side
    const double span = 2.0 * B / static_cast<double>(S + 1);

    std::vector<double> hinges(m);
    for (int k = 0; k < m; ++k) hinges[k] = span * k;

    // secant slopes of f on the positive and negative segments
    std::vector<double> sec_pos(m), sec_neg(m);
    for (int k = 1; k <= m; ++k) {
        sec_pos[k - 1] = (f(span * k) - f(span * (k - 1))) / span;
        sec_neg[k - 1] = (f(-span * (k - 1)) - f(-span * k)) / span;
    }
    std::vector<double> pos(m), neg(m);
    for (int k = 0; k < m; ++k) {
        pos[k] = k == 0 ? sec_pos[0] : sec_pos[k] - sec_pos[k - 1];
        neg[k] = k == 0 ? -sec_neg[0] : sec_neg[k - 1] - sec_neg[k];
    }

    FitResult r;
    r.spec = PiecewiseLinearSpec::fixed(S, std::move(hinges), std::move(pos), std::move(neg));
    r.S = S;
    r.B = B;
    r.delta = 2.0 * B / static_cast<double>(S); // any spacing below this bound works
    r.sup_error = measured_sup_error(f, r.spec, B);
    return r;
}

double measured_sup_error(const ScalarFn& f, const PiecewiseLinearSpec& spec, double B,
                          int points_per_segment) {
    const int segments = spec.hinge_count() + 1;
    const long n = static_cast<long>(segments) * points_per_segment + 1;
    double worst = 0.0;
    for (long i = 0; i < n; ++i) {
        double x = -B + 2.0 * B * static_cast<double>(i) / static_cast<double>(n - 1);
        worst = std::max(worst, std::fabs(f(x) - splash_eval_scalar(spec, x)));
    }
    return worst;
}

FitResult fit_splash(const ScalarFn& f, double B, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("fit: eps must be positive");
    check_grounded(f);

    // exactly representable targets (piecewise linear on a coarse hinge grid)
    // need no modulus estimate
    double scale = std::max({1.0, std::fabs(f(B)), std::fabs(f(-B))});
    for (int S : {1, 3, 5, 7, 9}) {
        FitResult r = fit_splash_with_s(f, B, S);
        if (r.sup_error <= 1e-12 * scale) {
            r.requested_eps = eps;
            return r;
        }
    }

    const double delta = estimate_modulus(f, B, eps);
    int S = static_cast<int>(std::floor(2.0 * B / delta - 1.0)) + 1; // smallest int > bound
    if (S % 2 == 0) ++S;
    if (S < 1) S = 1;
    FitResult r = fit_splash_with_s(f, B, S);
    r.delta = delta;
    r.requested_eps = eps;
    if (r.sup_error > eps)
        throw std::runtime_error("fit: measured error " + std::to_string(r.sup_error) +
                                 " exceeds requested " + std::to_string(eps));
    return r;
}

FitResult fit_splash_interval(const ScalarFn& f, double A, double B, double eps) {
    if (A != -B)
        throw std::invalid_argument(
            "fit: symmetric hinges require a symmetric interval; got [" + std::to_string(A) +
            ", " + std::to_string(B) + "] (use A = -B)");
    return fit_splash(f, B, eps);
}

} // namespace splashlab
