#include "swstab/coupling.hpp"

#include <algorithm>
#include <boost/math/interpolators/makima.hpp>
#include <cmath>
#include <limits>
#include <numbers>

namespace swstab {

namespace {

constexpr double pi = std::numbers::pi;

double w_of(const Sigma2Spec& s2, double r) {
    double f = s2.fourier(r);
    return f * f;
}

struct NodeSet {
    std::vector<double> x, w;
};

void add_panel(NodeSet& ns, double a, double b, const std::vector<double>& gx,
               const std::vector<double>& gw) {
    double h = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (size_t i = 0; i < gx.size(); ++i) {
        ns.x.push_back(mid + h * gx[i]);
        ns.w.push_back(h * gw[i]);
    }
}

// Composite rule on [0, R] refined geometrically around a near-real pole at
// r0 + i*dist so the panels next to it are no wider than their distance to it.
NodeSet pole_nodes(const RadialQuadrature& q, double r0, double dist) {
    std::vector<double> gx, gw;
    gauss_legendre(q.panel_order, gx, gw);
    int panels = std::max(1, q.N / q.panel_order);
    double h0 = q.R / panels;
    std::vector<double> br;
    for (int i = 0; i <= panels; ++i) br.push_back(q.R * i / panels);
    if (r0 > 0 && r0 < q.R && dist < h0) {
        double d = std::max(dist, 1e-13);
        br.push_back(r0);
        for (double s = d; s < 2 * h0; s *= 2) {
            if (r0 - s > 0) br.push_back(r0 - s);
            if (r0 + s < q.R) br.push_back(r0 + s);
        }
    }
    std::sort(br.begin(), br.end());
    std::vector<double> u;
    for (double b : br)
        if (u.empty() || b - u.back() > 1e-15 * std::max(1.0, b)) u.push_back(b);
    NodeSet ns;
    for (size_t i = 0; i + 1 < u.size(); ++i) add_panel(ns, u[i], u[i + 1], gx, gw);
    return ns;
}

// Integrals of r^e / (s + r^2) over [0, R], e in {0, 1}, and their s-derivatives.
cplx base_integral(int e, cplx s, double R) {
    if (e == 0) {
        cplx a = std::sqrt(s);
        return std::atan(R / a) / a;
    }
    return 0.5 * (std::log(s + R * R) - std::log(s));
}

cplx base_integral_deriv(int e, cplx s, double R) {
    if (e == 0) {
        cplx a = std::sqrt(s);
        cplx dda = -std::atan(R / a) / (a * a) - R / (a * (a * a + R * R));
        return dda / (2.0 * a);
    }
    return 0.5 * (1.0 / (s + R * R) - 1.0 / s);
}

struct KappaParts {
    cplx val, der;
};

KappaParts kappa_mu_parts(const Sigma2Spec& s2, int n, cplx s, bool want_der) {
    const auto& q = s2.quadrature();
    cplx a = std::sqrt(s);
    // poles of 1/(s + r^2) sit at +-i a; the one nearest the positive axis
    double r0 = std::abs(a.imag()), dist = std::abs(a.real());
    NodeSet ns = pole_nodes(q, r0, dist);
    const int e = (n - 1) % 2;
    const double w0 = w_of(s2, 0.0);
    const int top = n - 1;
    // moments M_q = int w r^q for q = e, e+2, ..., top-2
    std::vector<double> mom(top + 1, 0.0);
    cplx I = 0, D = 0;
    for (size_t i = 0; i < ns.x.size(); ++i) {
        double r = ns.x[i], wt = ns.w[i];
        double wr = w_of(s2, r);
        double re = (e == 0) ? 1.0 : r;
        cplx den = s + r * r;
        I += wt * (wr - w0) * re / den;
        if (want_der) D -= wt * (wr - w0) * re / (den * den);
        double rp = re;
        for (int p = e; p + 2 <= top; p += 2) {
            mom[p] += wt * wr * rp;
            rp *= r * r;
        }
    }
    I += w0 * base_integral(e, s, q.R);
    if (want_der) D += w0 * base_integral_deriv(e, s, q.R);
    for (int p = e + 2; p <= top; p += 2) {
        cplx Dn = -I - s * D;
        I = mom[p - 2] - s * I;
        D = Dn;
    }
    double C = sphere_factor(n);
    return {C * I, C * D};
}

}  // namespace

void gauss_legendre(int order, std::vector<double>& x, std::vector<double>& w) {
    x.assign(order, 0.0);
    w.assign(order, 0.0);
    for (int i = 0; i < order; ++i) {
        double z = std::cos(pi * (i + 0.75) / (order + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = std::legendre(order, z);
            double p1 = std::legendre(order - 1, z);
            dp = order * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        double p1 = std::legendre(order - 1, z);
        dp = order * (z * std::legendre(order, z) - p1) / (z * z - 1.0);
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
}

void RadialQuadrature::build() {
    if (R <= 0) throw SpecError("quadrature: R_xi must be positive");
    if (panel_order < 2 || N < panel_order || N % panel_order != 0)
        throw SpecError("quadrature: N_xi must be a positive multiple of panel_order");
    std::vector<double> gx, gw;
    gauss_legendre(panel_order, gx, gw);
    NodeSet ns;
    int panels = N / panel_order;
    for (int i = 0; i < panels; ++i) add_panel(ns, R * i / panels, R * (i + 1) / panels, gx, gw);
    nodes = std::move(ns.x);
    weights = std::move(ns.w);
}

Sigma1Spec::Sigma1Spec(int d, const std::vector<std::pair<Mode, double>>& coeffs) : d_(d) {
    if (d != 1 && d != 2) throw SpecError("sigma1: d must be 1 or 2");
    for (const auto& [m, v] : coeffs) {
        if (d == 1 && m[1] != 0) throw SpecError("sigma1: mode has a second component in d=1");
        if (!std::isfinite(v)) throw SpecError("sigma1: non-finite coefficient");
        for (const Mode& mm : {m, neg(m)}) {
            auto it = c_.find(mm);
            if (it != c_.end() && it->second != v)
                throw SpecError("sigma1: coefficients must satisfy sigma_{1,m} = sigma_{1,-m}");
            c_[mm] = v;
        }
    }
    for (auto it = c_.begin(); it != c_.end();) {
        if (it->second == 0.0) it = c_.erase(it);
        else ++it;
    }
    if (coeff({0, 0}) == 0.0) throw SpecError("sigma1: sigma_{1,0} must be nonzero (<sigma1> != 0)");
    band_ = 0;
    for (const auto& kv : c_) band_ = std::max(band_, swstab::sup_norm(kv.first));
    int G = std::max(64, 4 * band_ + 8);
    double mn = std::numeric_limits<double>::infinity(), mx = -mn, sum = 0;
    int G2 = (d == 2) ? G : 1;
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G2; ++j) {
            double v = value(2 * pi * i / G, 2 * pi * j / G);
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            sum += std::abs(v);
        }
    if (mn < -1e-12 * std::max(1.0, mx)) throw SpecError("sigma1: reconstructed sigma1(x) must be nonnegative");
    l1_ = sum * std::pow(2 * pi, d) / (double(G) * G2);
    sup_ = mx;
}

Sigma1Spec Sigma1Spec::cosine(int d) {
    if (d == 1) return Sigma1Spec(1, {{{0, 0}, 1 / (2 * pi)}, {{1, 0}, 1 / (4 * pi)}});
    std::vector<std::pair<Mode, double>> c;
    double a[2] = {1 / (2 * pi), 1 / (4 * pi)};
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) c.push_back({{i, j}, a[std::abs(i)] * a[std::abs(j)]});
    return Sigma1Spec(2, c);
}

double Sigma1Spec::coeff(const Mode& m) const {
    auto it = c_.find(m);
    return it == c_.end() ? 0.0 : it->second;
}

double Sigma1Spec::mean() const { return std::pow(2 * pi, d_) * coeff({0, 0}); }
double Sigma1Spec::l1_norm() const { return l1_; }
double Sigma1Spec::sup_norm() const { return sup_; }

double Sigma1Spec::l2_norm() const {
    double s = 0;
    for (const auto& kv : c_) s += kv.second * kv.second;
    return std::sqrt(std::pow(2 * pi, d_) * s);
}

double Sigma1Spec::value(double x1, double x2) const {
    double v = 0;
    for (const auto& [m, c] : c_) v += c * std::cos(m[0] * x1 + m[1] * x2);
    return v;
}

Sigma2Spec Sigma2Spec::gaussian(int n, double width, double amplitude, RadialQuadrature q) {
    if (width <= 0) throw SpecError("sigma2: gaussian width must be positive");
    if (n < 3) throw SpecError("sigma2: n >= 3 required");
    Sigma2Spec s;
    s.kind_ = Kind::gaussian;
    s.width_ = width;
    s.amp_ = amplitude;
    double pref = amplitude * std::pow(2 * pi, 0.5 * n) * std::pow(width, n);
    s.f_ = [pref, width](double r) { return pref * std::exp(-0.5 * width * width * r * r); };
    q.build();
    s.q_ = std::move(q);
    return s;
}

Sigma2Spec Sigma2Spec::radial_table(std::vector<double> r, std::vector<double> v, RadialQuadrature q) {
    if (r.size() != v.size() || r.size() < 4) throw SpecError("sigma2: radial table needs >= 4 matching nodes/values");
    if (r.front() != 0.0) throw SpecError("sigma2: radial table must start at r = 0");
    for (size_t i = 1; i < r.size(); ++i)
        if (!(r[i] > r[i - 1])) throw SpecError("sigma2: radial table nodes must increase");
    Sigma2Spec s;
    s.kind_ = Kind::radial_table;
    s.tr_ = r;
    s.tv_ = v;
    double rmax = r.back();
    auto spline = std::make_shared<boost::math::interpolators::makima<std::vector<double>>>(std::move(r), std::move(v));
    s.f_ = [spline, rmax](double x) { return x > rmax ? 0.0 : (*spline)(x); };
    q.build();
    s.q_ = std::move(q);
    return s;
}

double Sigma2Spec::tail_ratio() const {
    double f0 = fourier(0.0), fr = fourier(q_.R);
    if (f0 == 0.0) return fr == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return (fr * fr) / (f0 * f0);
}

void Sigma2Spec::validate() const {
    if (q_.nodes.empty()) throw SpecError("sigma2: quadrature not built");
    if (kind_ == Kind::radial_table && tr_.back() < q_.R)
        throw SpecError("sigma2: radial table must cover [0, R_xi]");
    if (tail_ratio() > q_.tail_tol)
        throw SpecError("sigma2: quadrature tail bound |sigma2_hat(R_xi)|^2/|sigma2_hat(0)|^2 exceeds tolerance; increase R_xi");
    if (amp_ != 0.0)
        for (double r : q_.nodes)
            if (fourier(r) == 0.0) throw SpecError("sigma2: sigma2_hat vanishes on the quadrature range");
}

bool CouplingSpec::hartree_limit() const { return std::isinf(c); }

void CouplingSpec::validate() const {
    if (d != 1 && d != 2) throw SpecError("d must be 1 or 2");
    if (n < 3) throw SpecError("n must be >= 3 (kappa diverges for n < 3)");
    if (!(gamma >= 0)) throw SpecError("gamma must be >= 0");
    if (!(c > 0)) throw SpecError("c must be > 0");
    if (sigma1.d() != d) throw SpecError("sigma1 dimension does not match d");
    sigma2.validate();
}

double sphere_factor(int n) {
    double area = 2.0 * std::pow(pi, 0.5 * n) / std::tgamma(0.5 * n);
    return area / std::pow(2 * pi, n);
}

double compute_kappa(const Sigma2Spec& s2, int n) {
    if (n < 3) throw SpecError("compute_kappa: n >= 3 required (divergent integral)");
    if (s2.tail_ratio() > s2.quadrature().tail_tol) throw SpecError("compute_kappa: quadrature tail bound exceeds tolerance");
    const auto& q = s2.quadrature();
    double s = 0;
    for (size_t i = 0; i < q.nodes.size(); ++i)
        s += q.weights[i] * w_of(s2, q.nodes[i]) * std::pow(q.nodes[i], n - 3);
    return sphere_factor(n) * s;
}

static void check_cut(cplx s) {
    if (s.imag() == 0.0 && s.real() < 0.0)
        throw SpecError("kappa_mu: s on the branch cut (-inf, 0]");
}

cplx compute_kappa_mu(const Sigma2Spec& s2, int n, cplx s) {
    if (n < 3) throw SpecError("compute_kappa_mu: n >= 3 required");
    if (s == 0.0) return compute_kappa(s2, n);
    check_cut(s);
    return kappa_mu_parts(s2, n, s, false).val;
}

cplx compute_kappa_mu_deriv(const Sigma2Spec& s2, int n, cplx s) {
    if (n < 3) throw SpecError("compute_kappa_mu: n >= 3 required");
    if (s == 0.0) throw SpecError("kappa_mu derivative: s = 0 is a branch point");
    check_cut(s);
    return kappa_mu_parts(s2, n, s, true).der;
}

double kernel_p(const Sigma2Spec& s2, int n, double tau) {
    if (tau < 0) throw SpecError("kernel_p: tau must be >= 0");
    const auto& q = s2.quadrature();
    double s = 0;
    for (size_t i = 0; i < q.nodes.size(); ++i) {
        double r = q.nodes[i];
        s += q.weights[i] * w_of(s2, r) * std::pow(r, n - 2) * std::sin(tau * r);
    }
    return sphere_factor(n) * s;
}

double kernel_p_c(const Sigma2Spec& s2, int n, double c, double tau) {
    return kernel_p(s2, n, c * tau) / c;
}

double kernel_p_integral(const Sigma2Spec& s2, int n, double T) {
    const auto& q = s2.quadrature();
    double s = 0;
    for (size_t i = 0; i < q.nodes.size(); ++i) {
        double r = q.nodes[i];
        double h = std::sin(0.5 * T * r);
        s += q.weights[i] * w_of(s2, r) * std::pow(r, n - 3) * 2.0 * h * h;
    }
    return sphere_factor(n) * s;
}

double kernel_p_c_integral(const Sigma2Spec& s2, int n, double c) {
    return compute_kappa(s2, n) / (c * c);
}

CouplingConstants compute_constants(const CouplingSpec& spec) {
    CouplingConstants k;
    k.kappa = compute_kappa(spec.sigma2, spec.n);
    double l1 = spec.sigma1.l1_norm();
    double g2 = spec.gamma * spec.gamma;
    k.kappa_L1sigma1_product = 4 * g2 * k.kappa * l1 * l1;
    k.margin = 1 - k.kappa_L1sigma1_product;
    double mean = spec.sigma1.mean();
    k.upsilon_star = g2 * k.kappa * mean * mean;
    return k;
}

SmallnessResult smallness_check(const CouplingConstants& k) {
    return {k.kappa_L1sigma1_product < 1.0, k.margin};
}

double gamma_from_physical(double alpha, double beta, double mass_ratio) {
    if (!(alpha > 0) || !(beta > 0) || !(mass_ratio > 0))
        throw SpecError("gamma_from_physical: inputs must be positive");
    return std::sqrt(mass_ratio * alpha * beta);
}

}  // namespace swstab
