#pragma once

#include <array>
#include <complex>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace swstab {

using cplx = std::complex<double>;

// Torus mode; the second component is 0 when d = 1.
using Mode = std::array<int, 2>;

inline int dot(const Mode& a, const Mode& b) { return a[0] * b[0] + a[1] * b[1]; }
inline int norm2(const Mode& a) { return dot(a, a); }
inline Mode neg(const Mode& a) { return {-a[0], -a[1]}; }
inline int sup_norm(const Mode& a) { return std::max(std::abs(a[0]), std::abs(a[1])); }

class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RadialQuadrature {
    double R = 12.0;
    int N = 512;
    int panel_order = 16;
    double tail_tol = 1e-16;

    std::vector<double> nodes;
    std::vector<double> weights;

    void build();
};

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int order, std::vector<double>& x, std::vector<double>& w);

class Sigma1Spec {
public:
    Sigma1Spec() = default;
    Sigma1Spec(int d, const std::vector<std::pair<Mode, double>>& coeffs);

    // (1 + cos x)/(2 pi) in d = 1, product of such factors in d = 2.
    static Sigma1Spec cosine(int d);

    int d() const { return d_; }
    double coeff(const Mode& m) const;
    const std::map<Mode, double>& coeffs() const { return c_; }
    int band_limit() const { return band_; }

    double mean() const;     // <sigma1> = (2 pi)^d sigma_{1,0}
    double l1_norm() const;  // on the validation grid
    double l2_norm() const;
    double sup_norm() const;
    double value(double x1, double x2 = 0.0) const;

private:
    int d_ = 1;
    std::map<Mode, double> c_;
    int band_ = 0;
    double l1_ = 0, sup_ = 0;
};

class Sigma2Spec {
public:
    enum class Kind { gaussian, radial_table };

    static Sigma2Spec gaussian(int n, double width = 1.0, double amplitude = 1.0,
                               RadialQuadrature q = {});
    static Sigma2Spec radial_table(std::vector<double> r, std::vector<double> v,
                                   RadialQuadrature q = {});

    Kind kind() const { return kind_; }
    double fourier(double r) const { return f_(r); }
    const RadialQuadrature& quadrature() const { return q_; }
    double width() const { return width_; }
    double amplitude() const { return amp_; }
    const std::vector<double>& table_r() const { return tr_; }
    const std::vector<double>& table_v() const { return tv_; }

    // |sigma2_hat(R)|^2 / |sigma2_hat(0)|^2
    double tail_ratio() const;
    void validate() const;

private:
    Kind kind_ = Kind::gaussian;
    std::function<double(double)> f_;
    RadialQuadrature q_;
    double width_ = 1.0, amp_ = 1.0;
    std::vector<double> tr_, tv_;
};

struct CouplingSpec {
    int d = 1;
    int n = 3;
    double gamma = 0.1;
    double c = 1.0;  // +inf selects the Hartree limit
    Sigma1Spec sigma1;
    Sigma2Spec sigma2;

    bool hartree_limit() const;
    void validate() const;
};

struct CouplingConstants {
    double kappa = 0;
    double kappa_L1sigma1_product = 0;
    double margin = 1;
    double upsilon_star = 0;
};

struct SmallnessResult {
    bool holds;
    double margin;
};

// |S^{n-1}| / (2 pi)^n
double sphere_factor(int n);

double compute_kappa(const Sigma2Spec& s2, int n);
cplx compute_kappa_mu(const Sigma2Spec& s2, int n, cplx s);
// d kappa_s / d s
cplx compute_kappa_mu_deriv(const Sigma2Spec& s2, int n, cplx s);

double kernel_p(const Sigma2Spec& s2, int n, double tau);
double kernel_p_c(const Sigma2Spec& s2, int n, double c, double tau);
// int_0^T p(tau) dtau
double kernel_p_integral(const Sigma2Spec& s2, int n, double T);
// int_0^inf p_c(tau) dtau
double kernel_p_c_integral(const Sigma2Spec& s2, int n, double c);

CouplingConstants compute_constants(const CouplingSpec& spec);
SmallnessResult smallness_check(const CouplingConstants& k);
double gamma_from_physical(double alpha, double beta, double mass_ratio);

}  // namespace swstab
