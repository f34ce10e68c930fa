#include "doctest.h"

#include <cmath>

#include "splashlab/approx.hpp"
#include "splashlab/data.hpp"

using namespace splashlab;

TEST_SUITE_BEGIN("approx");

TEST_CASE("modulus estimation") {
    SUBCASE("identity: delta approaches eps/2 from above") {
        double d = estimate_modulus([](double x) { return x; }, 1.0, 0.1);
        CHECK(d >= 0.05);
        CHECK(d <= 0.052);
    }
    SUBCASE("Lipschitz-L target gives delta near eps/(2L)") {
        double d = estimate_modulus([](double x) { return 3.0 * x; }, 2.0, 0.12);
        CHECK(d >= 0.02);       // eps / (2*3)
        CHECK(d <= 0.021);
    }
    SUBCASE("non-grounded targets are rejected") {
        CHECK_THROWS_WITH_AS(estimate_modulus([](double x) { return x + 1.0; }, 1.0, 0.1),
                             doctest::Contains("grounded"), std::invalid_argument);
    }
    SUBCASE("coarse grids are rejected") {
        CHECK_THROWS_AS(estimate_modulus([](double x) { return x; }, 1.0, 0.1, 999),
                        std::invalid_argument);
    }
}

TEST_CASE("fitting targets already in the family") {
    SUBCASE("identity") {
        FitResult r = fit_splash([](double x) { return x; }, 1.0, 0.01);
        CHECK(r.sup_error == 0.0);
        CHECK(r.spec.pos_slopes()[0] == doctest::Approx(1.0));
        CHECK(r.spec.neg_slopes()[0] == doctest::Approx(-1.0));
        for (std::size_t i = 1; i < r.spec.pos_slopes().size(); ++i) {
            CHECK(r.spec.pos_slopes()[i] == doctest::Approx(0.0));
            CHECK(r.spec.neg_slopes()[i] == doctest::Approx(0.0));
        }
        CHECK(r.S <= 9); // no reason to spend hinges on an exact member
    }
    SUBCASE("absolute value") {
        FitResult r = fit_splash([](double x) { return std::fabs(x); }, 2.0, 0.01);
        CHECK(r.sup_error == 0.0);
        CHECK(r.spec.pos_slopes()[0] == doctest::Approx(1.0));
        CHECK(r.spec.neg_slopes()[0] == doctest::Approx(1.0));
        CHECK(r.S <= 9);
    }
    SUBCASE("flattened relu needs its kink on the hinge grid") {
        const auto& fr = grounded_function("flat-relu");
        FitResult r = fit_splash(fr.f, 2.0, 0.01);
        CHECK(r.S == 7); // hinge spacing 0.5 puts 1.5 on the grid exactly
        CHECK(r.sup_error <= 1e-12);
    }
}

TEST_CASE("theorem construction on curved targets") {
    const double B = 2.0;
    for (const char* name : {"tanh", "xsin"}) {
        const auto& target = grounded_function(name);
        for (double eps : {0.1, 0.05}) {
            CAPTURE(name);
            CAPTURE(eps);
            FitResult r = fit_splash(target.f, B, eps);
            CHECK(r.sup_error <= eps);
            CHECK(static_cast<double>(r.S) > 2.0 * B / r.delta - 1.0);
            CHECK(r.S % 2 == 1);

            // interpolation: the fit passes through f at every hinge
            for (double h : r.spec.hinges()) {
                CHECK(std::fabs(splash_eval_scalar(r.spec, h) - target.f(h)) <= 1e-9);
                CHECK(std::fabs(splash_eval_scalar(r.spec, -h) - target.f(-h)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("slopes reproduce the hinge secants (independent route)") {
    // evaluate tanh at the hinges, form secant slopes directly, and compare
    // against the cumulative sums of the fitted slope increments
    const double B = 2.0;
    FitResult r = fit_splash([](double x) { return std::tanh(x); }, B, 0.05);
    const double span = 2.0 * B / static_cast<double>(r.S + 1);
    const std::size_t m = r.spec.hinges().size();
    double cum_pos = 0.0, cum_neg = 0.0;
    for (std::size_t k = 1; k <= m; ++k) {
        cum_pos += r.spec.pos_slopes()[k - 1];
        cum_neg += r.spec.neg_slopes()[k - 1];
        double secant_pos =
            (std::tanh(span * k) - std::tanh(span * (k - 1))) / span;
        double secant_neg =
            (std::tanh(-span * (k - 1)) - std::tanh(-span * k)) / span;
        CHECK(cum_pos == doctest::Approx(secant_pos).epsilon(1e-9));
        CHECK(-cum_neg == doctest::Approx(secant_neg).epsilon(1e-9));
    }
}

TEST_CASE("cumulative slope identity against numeric slopes") {
    FitResult r = fit_splash_with_s([](double x) { return x * std::sin(3.0 * x); }, 2.0, 9);
    const auto& b = r.spec.hinges();
    double cum = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s) {
        cum += r.spec.pos_slopes()[s];
        double upper = s + 1 < b.size() ? b[s + 1] : 2.0;
        double mid_lo = b[s] + 0.25 * (upper - b[s]);
        double mid_hi = b[s] + 0.75 * (upper - b[s]);
        double numeric = (splash_eval_scalar(r.spec, mid_hi) -
                          splash_eval_scalar(r.spec, mid_lo)) /
                         (mid_hi - mid_lo);
        CHECK(numeric == doctest::Approx(cum).epsilon(1e-9));
    }
}

TEST_CASE("doubling S never hurts on convex targets") {
    auto quad = [](double x) { return x * x; };
    double prev = 1e300;
    for (int S : {3, 7, 15, 31}) {
        FitResult r = fit_splash_with_s(quad, 2.0, S);
        CHECK(r.sup_error <= prev);
        prev = r.sup_error;
    }
}

TEST_CASE("smaller eps never shrinks the chosen S") {
    const auto& target = grounded_function("tanh");
    int last = 0;
    for (double eps : {0.2, 0.1, 0.05, 0.02}) {
        FitResult r = fit_splash(target.f, 2.0, eps);
        CHECK(r.S >= last);
        last = r.S;
    }
    CHECK(last > 1);
}

TEST_CASE("asymmetric intervals are rejected loudly") {
    CHECK_THROWS_WITH_AS(
        fit_splash_interval([](double x) { return x; }, -1.0, 2.0, 0.1),
        doctest::Contains("symmetric"), std::invalid_argument);
    // symmetric request passes through
    FitResult r = fit_splash_interval([](double x) { return x; }, -2.0, 2.0, 0.1);
    CHECK(r.sup_error == 0.0);
}

TEST_SUITE_END();
