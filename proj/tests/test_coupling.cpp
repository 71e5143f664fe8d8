#include <doctest.h>

#include <cmath>

#include "common.hpp"

using namespace swstab;
using namespace swstab::test;

TEST_CASE("kappa of the unit Gaussian") {
    auto s = reference_spec();
    CHECK(compute_kappa(s.sigma2, 3) == doctest::Approx(2 * std::pow(pi, 1.5)).epsilon(1e-13));
}

TEST_CASE("kappa scales as amplitude^2 width^(n+2)") {
    double k1 = compute_kappa(Sigma2Spec::gaussian(3), 3);
    RadialQuadrature q;
    q.R = 24;
    double k2 = compute_kappa(Sigma2Spec::gaussian(3, 0.5, 2.0, q), 3);
    CHECK(k2 == doctest::Approx(k1 * 4 * std::pow(0.5, 5)).epsilon(1e-10));
}

TEST_CASE("kappa_s against the erfc closed form") {
    auto s = reference_spec();
    for (double x : {0.01, 0.25, 1.0, 4.0, 30.0}) {
        double exact = 4 * pi * (std::sqrt(pi) / 2 - pi / 2 * std::sqrt(x) * std::exp(x) * std::erfc(std::sqrt(x)));
        CHECK(compute_kappa_mu(s.sigma2, 3, x).real() == doctest::Approx(exact).epsilon(1e-11));
    }
    CHECK(compute_kappa_mu(s.sigma2, 3, 0.0).real() == doctest::Approx(compute_kappa(s.sigma2, 3)));
}

TEST_CASE("kappa_s is analytic off the cut: derivative and Schwarz reflection") {
    auto s = reference_spec();
    for (cplx z : {cplx(0.3, 0.2), cplx(-0.5, 0.8), cplx(-2.0, -0.1), cplx(1.0, -3.0)}) {
        double h = 1e-5;
        cplx fd = (compute_kappa_mu(s.sigma2, 3, z + h) - compute_kappa_mu(s.sigma2, 3, z - h)) / (2 * h);
        CHECK(std::abs(compute_kappa_mu_deriv(s.sigma2, 3, z) - fd) < 1e-7);
        cplx zi = (compute_kappa_mu(s.sigma2, 3, z + cplx(0, h)) - compute_kappa_mu(s.sigma2, 3, z - cplx(0, h))) /
                  cplx(0, 2 * h);
        CHECK(std::abs(fd - zi) < 1e-6);
        CHECK(std::abs(compute_kappa_mu(s.sigma2, 3, std::conj(z)) - std::conj(compute_kappa_mu(s.sigma2, 3, z))) < 1e-13);
    }
    CHECK_THROWS_AS(compute_kappa_mu(s.sigma2, 3, -1.0), SpecError);
}

TEST_CASE("memory kernel p against the Gaussian closed form") {
    auto s = reference_spec();
    for (double tau : {0.0, 0.5, 1.0, 2.0, 5.0, 9.0}) {
        double exact = std::pow(pi, 1.5) * tau * std::exp(-tau * tau / 4);
        CHECK(kernel_p(s.sigma2, 3, tau) == doctest::Approx(exact).epsilon(1e-12).scale(1));
    }
    double kappa = compute_kappa(s.sigma2, 3);
    CHECK(kernel_p_integral(s.sigma2, 3, 10.0) == doctest::Approx(kappa).epsilon(1e-10));
    for (double c : {1.0, 2.0, 4.0}) CHECK(kernel_p_c_integral(s.sigma2, 3, c) == doctest::Approx(kappa / (c * c)));
}

TEST_CASE("reference constants") {
    auto s = reference_spec();
    auto kc = compute_constants(s);
    CHECK(kc.upsilon_star == doctest::Approx(0.1113666).epsilon(1e-6));
    CHECK(kc.margin == doctest::Approx(0.554534).epsilon(1e-6));
    CHECK(smallness_check(kc).holds);
    s.gamma = 0.2;
    CHECK_FALSE(smallness_check(compute_constants(s)).holds);
}

TEST_CASE("sigma1 checks and norms") {
    auto c1 = Sigma1Spec::cosine(1);
    CHECK(c1.mean() == doctest::Approx(1.0));
    CHECK(c1.l1_norm() == doctest::Approx(1.0));
    CHECK(c1.sup_norm() == doctest::Approx(1 / pi));
    CHECK(c1.l2_norm() == doctest::Approx(std::sqrt(1.5 / (2 * pi))));
    CHECK(c1.value(0.0) == doctest::Approx(1 / pi));
    auto c2 = Sigma1Spec::cosine(2);
    CHECK(c2.mean() == doctest::Approx(1.0));
    const double a = 1 / (2 * pi);
    CHECK_THROWS_AS(Sigma1Spec(1, {{{0, 0}, a}, {{1, 0}, 0.8 * a}, {{-1, 0}, 0.8 * a}}), SpecError);  // negative somewhere
    CHECK_THROWS_AS(Sigma1Spec(1, {{{0, 0}, a}, {{1, 0}, 0.2 * a}, {{-1, 0}, 0.3 * a}}), SpecError);  // not real
    CHECK_THROWS_AS(Sigma1Spec(1, {{{1, 0}, 0.2 * a}, {{-1, 0}, 0.2 * a}}), SpecError);               // zero mean
}

TEST_CASE("sigma2 tables and validation") {
    std::vector<double> r, v;
    for (int i = 0; i <= 1400; ++i) {
        double x = 0.01 * i;
        r.push_back(x);
        v.push_back(std::pow(2 * pi, 1.5) * std::exp(-x * x / 2));
    }
    auto t = Sigma2Spec::radial_table(r, v);
    CHECK(compute_kappa(t, 3) == doctest::Approx(2 * std::pow(pi, 1.5)).epsilon(1e-7));
    RadialQuadrature q;
    q.R = 3;
    auto g = Sigma2Spec::gaussian(3, 1.0, 1.0, q);
    CHECK_THROWS_AS(g.validate(), SpecError);
    CHECK_THROWS_AS(Sigma2Spec::gaussian(2), SpecError);
    CouplingSpec s = reference_spec();
    s.n = 2;
    CHECK_THROWS_AS(s.validate(), SpecError);
    s = reference_spec(-0.1);
    CHECK_THROWS_AS(s.validate(), SpecError);
}

TEST_CASE("physical coupling") {
    CHECK(gamma_from_physical(0.5, 0.08, 0.25) == doctest::Approx(0.1));
    CHECK_THROWS_AS(gamma_from_physical(-1, 1, 1), SpecError);
}

TEST_CASE("Gauss-Legendre integrates polynomials exactly") {
    std::vector<double> x, w;
    gauss_legendre(16, x, w);
    double s = 0;
    for (size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], 30);
    CHECK(s == doctest::Approx(2.0 / 31).epsilon(1e-14));
}
