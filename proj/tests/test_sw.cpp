#include <doctest.h>

#include <algorithm>

#include "common.hpp"
#include "swstab/sw_spec.hpp"

using namespace swstab;
using namespace swstab::test;

TEST_CASE("reference k = 1 counts") {
    auto s = reference_spec();
    auto kc = compute_constants(s);
    auto r = counting_breakdown({1, 0}, s, kc);
    CHECK(r.n_L == 3);
    CHECK(r.dim_ker == 3);
    CHECK(r.K_star == std::vector<Mode>{{-2, 0}, {2, 0}});
    CHECK(r.NCplus == 2);
    CHECK(r.unstable_modes == std::vector<Mode>{{1, 0}, {-1, 0}});
    CHECK_FALSE(r.stable);
    CHECK(r.N0 + r.Nminus + r.Nplus + r.NCplus == r.n_L);
}

TEST_CASE("k = 0 is spectrally stable") {
    for (int d : {1, 2}) {
        auto s = reference_spec(0.1, 1.0, d);
        auto kc = compute_constants(s);
        auto r = counting_breakdown({0, 0}, s, kc);
        CHECK(r.n_L == 1);
        CHECK(r.NCplus == 0);
        CHECK(r.stable);
        CHECK(r.calno < 0);
    }
}

TEST_CASE("counting refuses outside the smallness regime") {
    auto s = reference_spec(0.2);
    auto kc = compute_constants(s);
    CHECK_THROWS_AS(negative_count({1, 0}, s, kc), OutOfRegime);
    CHECK_FALSE(mode_verdicts({1, 0}, s, kc).empty());
}

TEST_CASE("cubic report") {
    auto s = reference_spec();
    auto kc = compute_constants(s);
    for (int k : {0, 1, 2, 3})
        for (int m : {-1, 1}) {
            auto c = cubic_report({m, 0}, {k, 0}, s, kc);
            CHECK(c.discriminant >= -1e-12);
            CHECK(c.roots[0] <= c.roots[1]);
            CHECK(c.roots[1] <= c.roots[2]);
            CHECK(c.P_half == doctest::Approx(c.P_half_formula).epsilon(1e-12).scale(1));
            for (double mu : c.roots)
                CHECK(std::abs(((mu + c.b) * mu + c.c_coef) * mu + c.d_coef) < 1e-12);
        }
    CHECK_THROWS_AS(cubic_report({2, 0}, {1, 0}, s, kc), SpecError);
    auto f = free_mode_eigenvalues({-2, 0}, {1, 0});
    CHECK(f[0] == 0.0);
    CHECK(f[1] == 4.0);
}

TEST_CASE("mode zero and per-mode Hessian") {
    auto s = reference_spec();
    auto kc = compute_constants(s);
    auto [lm, lp] = sw_mode0_lambda(s, kc);
    CHECK(lm < 0);
    CHECK(lp > 0);
    CHECK(sw_coercivity_delta(s, kc) < 1);
}

TEST_CASE("dispersion function symmetries and derivative") {
    auto s = reference_spec();
    auto kc = compute_constants(s);
    Mode m{1, 0}, k{1, 0};
    for (cplx z : {cplx(0.02, -0.5), cplx(0.3, 0.7), cplx(1.1, -2.0)}) {
        cplx r = dispersion_R(m, k, z, s, kc);
        CHECK(std::abs(dispersion_R(m, k, -std::conj(z), s, kc) - std::conj(r)) < 1e-12);
        CHECK(std::abs(dispersion_R(neg(m), k, std::conj(z), s, kc) - std::conj(r)) < 1e-12);
        double h = 1e-6;
        cplx fd = (dispersion_R(m, k, z + h, s, kc) - dispersion_R(m, k, z - h, s, kc)) / (2 * h);
        CHECK(std::abs(dispersion_R_deriv(m, k, z, s, kc) - fd) < 1e-6);
    }
}

TEST_CASE("root finder on the reference configuration") {
    auto s = reference_spec();
    auto kc = compute_constants(s);
    auto g = growth_rate_predicted({1, 0}, s, kc);
    CHECK(g.a_star == doctest::Approx(0.0193147928).epsilon(1e-8));
    for (const auto& r : g.roots) {
        CHECK(r.residual < 1e-10);
        CHECK(std::abs(dispersion_R(r.m, {1, 0}, r.lambda, s, kc)) < 1e-10);
        for (const auto& p : symmetry_partners(r))
            CHECK(std::abs(dispersion_R(p.m, {1, 0}, p.lambda, s, kc)) < 1e-10);
    }
    RootRect empty{0.5, 1.0, 2.0, 3.0};
    CHECK(winding_number({1, 0}, {1, 0}, empty, s, kc) == 0);
    CHECK_THROWS_AS(growth_rate_predicted({0, 0}, s, kc), SpecError);
    RootRect bad{-1.0, 1.0, -1.0, 1.0};
    CHECK_THROWS_AS(dispersion_root_find({1, 0}, {1, 0}, s, kc, bad), SpecError);
}

TEST_CASE("large c roots approach the Hartree eigenvalues") {
    auto s = reference_spec(0.4, 1e6);
    auto kc = compute_constants(s);
    auto rr = dispersion_root_find({1, 0}, {0, 0}, s, kc, default_search_rect({1, 0}, {0, 0}, s, kc));
    REQUIRE(rr.roots.size() == 1);
    double crit = s.gamma * s.gamma * kc.kappa;
    CHECK(std::abs(rr.roots[0].lambda - cplx(0.5 * std::sqrt(crit - 1), 0)) < 1e-6);
}
