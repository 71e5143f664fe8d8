#pragma once

#include <limits>
#include <numbers>

#include "swstab/coupling.hpp"

namespace swstab::test {

constexpr double pi = std::numbers::pi;
inline const double inf = std::numeric_limits<double>::infinity();

inline CouplingSpec reference_spec(double gamma = 0.1, double c = 1.0, int d = 1, RadialQuadrature q = {}) {
    CouplingSpec s;
    s.d = d;
    s.n = 3;
    s.gamma = gamma;
    s.c = c;
    s.sigma1 = Sigma1Spec::cosine(d);
    s.sigma2 = Sigma2Spec::gaussian(3, 1.0, 1.0, q);
    return s;
}

}  // namespace swstab::test
