#include <doctest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "common.hpp"
#include "swstab/hartree_spec.hpp"

using namespace swstab;
using namespace swstab::test;

TEST_CASE("reference configuration is spectrally stable") {
    auto s = reference_spec(0.1, inf);
    auto kc = compute_constants(s);
    for (int k : {0, 1, -3}) {
        auto rep = spectrum_report_hartree({k, 0}, default_M_max(s), s, kc);
        CHECK(rep.stable);
        CHECK(rep.unstable_modes.empty());
        for (const auto& v : rep.modes) {
            CHECK(std::abs(v.lambda_plus.real()) < 1e-14);
            CHECK(std::abs(v.lambda_minus.real()) < 1e-14);
        }
    }
}

TEST_CASE("gamma = 1 is unstable on modes +-1") {
    auto s = reference_spec(1.0, inf);
    auto kc = compute_constants(s);
    auto rep = spectrum_report_hartree({0, 0}, default_M_max(s), s, kc);
    CHECK_FALSE(rep.stable);
    REQUIRE(rep.unstable_modes.size() == 2);
    CHECK(std::find(rep.unstable_modes.begin(), rep.unstable_modes.end(), Mode{1, 0}) != rep.unstable_modes.end());
    CHECK(std::find(rep.unstable_modes.begin(), rep.unstable_modes.end(), Mode{-1, 0}) != rep.unstable_modes.end());
    auto v = mode_eigenvalues({0, 0}, {1, 0}, s, kc);
    CHECK(v.lambda_plus.real() > 0);
    CHECK(v.criterion_value == doctest::Approx(kc.kappa));
}

TEST_CASE("criterion value one is stable with zero margin") {
    auto s = reference_spec(1.0, inf);
    auto kc = compute_constants(s);
    s.gamma = 1 / std::sqrt(kc.kappa);
    kc = compute_constants(s);
    auto v = mode_eigenvalues({0, 0}, {1, 0}, s, kc);
    CHECK(v.criterion_value == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v.stable);
    CHECK(v.zero_margin);
    s.gamma *= 1.001;
    CHECK_FALSE(mode_eigenvalues({0, 0}, {1, 0}, s, compute_constants(s)).stable);
}

TEST_CASE("verdict invariant under k -> -k, eigenvalues conjugate") {
    auto s = reference_spec(0.12, inf, 2);
    auto kc = compute_constants(s);
    Mode k{2, -1};
    auto a = spectrum_report_hartree(k, 3, s, kc);
    auto b = spectrum_report_hartree(neg(k), 3, s, kc);
    CHECK(a.stable == b.stable);
    for (size_t i = 0; i < a.modes.size(); ++i) {
        auto vb = mode_eigenvalues(neg(k), a.modes[i].m, s, kc);
        cplx x = std::conj(a.modes[i].lambda_plus);
        CHECK(std::min(std::abs(x - vb.lambda_plus), std::abs(x - vb.lambda_minus)) < 1e-13);
    }
}

TEST_CASE("mode zero has a Jordan block") {
    auto s = reference_spec(0.1, inf);
    auto kc = compute_constants(s);
    auto v = mode_eigenvalues({0, 0}, {0, 0}, s, kc);
    CHECK(std::abs(v.lambda_plus) < 1e-14);
    CHECK(std::abs(v.lambda_minus) < 1e-14);
    // kernel direction stays put
    auto [q, p] = propagate_hartree_mode({0, 0}, {0, 0}, 7.0, v.kernel_direction[0], v.kernel_direction[1], s, kc);
    CHECK(std::abs(q - v.kernel_direction[0]) < 1e-14);
    CHECK(std::abs(p - v.kernel_direction[1]) < 1e-14);
    // (1, 0) grows linearly
    for (double t : {0.5, 3.0, 40.0}) {
        auto a = propagate_hartree_mode({0, 0}, {0, 0}, t, 1.0, 0.0, s, kc);
        auto b = linearized_growth_mode0(1.0, 0.0, t, s, kc);
        CHECK(std::abs(a.first - b.first) < 1e-12);
        CHECK(std::abs(a.second - b.second) < 1e-12);
    }
    CHECK(linearized_growth_mode0(1.0, 0.0, 1.0, s, kc).second.real() ==
          doctest::Approx(2 * s.gamma * s.gamma * kc.kappa));
}

TEST_CASE("per-mode propagator equals the matrix exponential") {
    for (double g : {0.1, 0.5}) {
        auto s = reference_spec(g, inf);
        auto kc = compute_constants(s);
        for (Mode k : {Mode{0, 0}, Mode{1, 0}, Mode{-2, 0}})
            for (Mode m : {Mode{1, 0}, Mode{-1, 0}, Mode{2, 0}, Mode{3, 0}}) {
                auto L = mode_matrix(k, m, s, kc).L;
                Eigen::Matrix2cd A;
                A << L.a, L.b, L.c, L.d;
                double t = 2.7;
                Eigen::Matrix2cd E = (A * t).exp();
                cplx Q{0.3, -0.1}, P{0.2, 0.4};
                auto [q, p] = propagate_hartree_mode(k, m, t, Q, P, s, kc);
                Eigen::Vector2cd x = E * Eigen::Vector2cd(Q, P);
                CHECK(std::abs(q - x[0]) < 1e-11);
                CHECK(std::abs(p - x[1]) < 1e-11);
            }
    }
}

TEST_CASE("coercivity margins") {
    auto s = reference_spec(0.1, inf);
    auto kc = compute_constants(s);
    auto c = coercivity_margins_hartree(3, s, kc);
    CHECK(c.coercive);
    CHECK(c.delta == doctest::Approx(s.gamma * s.gamma * kc.kappa));
    CHECK(enumerate_modes(2, 1).size() == 9);
}
