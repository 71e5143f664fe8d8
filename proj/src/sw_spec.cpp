#include "swstab/sw_spec.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <exception>
#include <optional>
#include <sstream>
#include <thread>

#include "swstab/hartree_spec.hpp"

namespace swstab {

namespace {
constexpr double pi = std::numbers::pi;
constexpr cplx I{0.0, 1.0};

double ups_sigma2(const Mode& m, const CouplingSpec& spec, const CouplingConstants& kc) {
    double s = spec.sigma1.coeff(m);
    return spec.gamma * spec.gamma * kc.kappa * std::pow(2 * pi, 2 * spec.d) * s * s;
}

int sgn(double x) { return (x > 0) - (x < 0); }

double horner(double b, double c, double d, double x) { return ((x + b) * x + c) * x + d; }

// stable roots of x^2 + b x + c with real roots
std::array<double, 2> quad_roots(double b, double c) {
    double disc = std::sqrt(std::max(0.0, b * b - 4 * c));
    double q = -0.5 * (b + (b >= 0 ? disc : -disc));
    if (q == 0) return {0.0, 0.0};
    double r1 = q, r2 = c / q;
    return {std::min(r1, r2), std::max(r1, r2)};
}

int enum_bound(const Mode& k, const CouplingSpec& spec) {
    int kb = int(std::ceil(2 * std::sqrt(double(norm2(k)))));
    return std::max(kb, spec.sigma1.band_limit());
}
}  // namespace

CubicReport cubic_report(const Mode& m, const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc) {
    if (norm2(m) == 0) throw SpecError("cubic_report: m = 0 is handled by sw_mode0_lambda");
    if (spec.sigma1.coeff(m) == 0.0) throw SpecError("cubic_report: sigma_{1,m} = 0 is the free branch");
    CubicReport r;
    r.m = m;
    r.k = k;
    double m2 = norm2(m), km = dot(k, m), ys = ups_sigma2(m, spec, kc);
    double b = 0.5 * (m2 - 1), c = -(km * km + ys), d = -km * km * b;
    r.b = b;
    r.c_coef = c;
    r.d_coef = d;
    r.discriminant = 18 * b * c * d - 4 * b * b * b * d + b * b * c * c - 4 * c * c * c - 27 * d * d;
    double sq = std::sqrt(std::max(0.0, b * b - 3 * c));
    r.mu_max = (-b - sq) / 3;
    r.mu_min = (-b + sq) / 3;
    std::array<double, 3> mu;
    if (d == 0.0) {
        auto q = quad_roots(b, c);
        mu = {q[0], 0.0, q[1]};
    } else {
        double p = c - b * b / 3, qq = 2 * b * b * b / 27 - b * c / 3 + d;
        double rr = 2 * std::sqrt(-p / 3);
        double arg = std::clamp(3 * qq / (p * rr), -1.0, 1.0);
        double th = std::acos(arg) / 3;
        for (int j = 0; j < 3; ++j) mu[j] = rr * std::cos(th - 2 * pi * j / 3) - b / 3;
        for (double& x : mu)
            for (int it = 0; it < 3; ++it) {
                double f = horner(b, c, d, x), fp = (3 * x + 2 * b) * x + c;
                if (fp == 0) break;
                x -= f / fp;
            }
    }
    std::sort(mu.begin(), mu.end());
    r.roots = mu;
    for (int j = 0; j < 3; ++j) r.shifted[j] = mu[j] + 0.5 * m2;
    r.P_half = horner(b, c, d, -0.5 * m2);
    r.P_half_formula = -0.125 * (m2 * m2 - 4 * km * km - 4 * m2 * ys);
    r.sign_P_half = sgn(r.P_half_formula);
    r.negative_count_contrib = r.P_half_formula > 0 ? 1 : 0;
    return r;
}

std::array<double, 2> free_mode_eigenvalues(const Mode& m, const Mode& k) {
    double m2 = norm2(m), km = dot(k, m);
    return {0.5 * (m2 - 2 * std::abs(km)), 0.5 * (m2 + 2 * std::abs(km))};
}

std::vector<ModeVerdict> mode_verdicts(const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc) {
    std::vector<ModeVerdict> out;
    for (const Mode& m : enumerate_modes(spec.d, enum_bound(k, spec))) {
        if (norm2(m) == 0) continue;
        ModeVerdict v;
        v.m = m;
        v.sigma_zero = spec.sigma1.coeff(m) == 0.0;
        long m2 = norm2(m), km = dot(k, m);
        v.quartic_sign = sgn(double(m2 * m2 - 4 * km * km));
        if (v.sigma_zero) {
            auto e = free_mode_eigenvalues(m, k);
            v.eigenvalues = {e[0], e[1]};
            v.in_kernel_set = v.quartic_sign == 0;
            v.counts_plus = v.quartic_sign < 0;
        } else {
            auto cr = cubic_report(m, k, spec, kc);
            v.eigenvalues = {cr.shifted[0], cr.shifted[1], cr.shifted[2]};
            v.counts_cplus = v.quartic_sign <= 0;
        }
        for (double e : v.eigenvalues) v.n_negative += e < 0;
        out.push_back(v);
    }
    return out;
}

static void require_small(const CouplingConstants& kc) {
    if (!smallness_check(kc).holds) {
        std::ostringstream os;
        os << "smallness condition 4 gamma^2 kappa |sigma1|_L1^2 < 1 fails (margin " << kc.margin
           << "); counting formulas are not established in this regime";
        throw OutOfRegime(os.str());
    }
}

SWCountReport negative_count(const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc) {
    require_small(kc);
    SWCountReport r;
    r.per_mode = mode_verdicts(k, spec, kc);
    r.n_L = 1;
    for (const auto& v : r.per_mode) {
        if (v.sigma_zero && v.quartic_sign < 0) r.n_L++;
        if (!v.sigma_zero && v.quartic_sign <= 0) r.n_L++;
        if (v.in_kernel_set) r.K_star.push_back(v.m);
    }
    r.dim_ker = 1 + int(r.K_star.size());
    return r;
}

SWCountReport counting_breakdown(const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc) {
    SWCountReport r = negative_count(k, spec, kc);
    r.N0 = 1;
    r.Nminus = 0;
    for (const auto& v : r.per_mode) {
        r.Nplus += v.counts_plus;
        if (v.counts_cplus) r.unstable_modes.push_back(v.m);
    }
    r.NCplus = r.n_L - r.N0 - r.Nminus - r.Nplus;
    if (r.NCplus != int(r.unstable_modes.size())) throw SpecError("counting_breakdown: N_{C+} inconsistent with mode enumeration");
    std::sort(r.unstable_modes.begin(), r.unstable_modes.end(), [](const Mode& a, const Mode& b) {
        if (norm2(a) != norm2(b)) return norm2(a) < norm2(b);
        return a > b;
    });
    double s0 = spec.sigma1.coeff({0, 0});
    r.calno = -1.0 / (2 * spec.gamma * spec.gamma * std::pow(2 * pi, spec.d) * s0 * s0 * kc.kappa);
    r.stable = r.NCplus == 0;
    return r;
}

std::pair<double, double> sw_mode0_lambda(const CouplingSpec& spec, const CouplingConstants& kc) {
    double root = std::sqrt(0.25 + 4 * ups_sigma2({0, 0}, spec, kc));
    return {(0.5 - root) / 2, (0.5 + root) / 2};
}

std::pair<double, double> sw_hessian_mode_spectrum(const Mode& m, const CouplingSpec& spec,
                                                   const CouplingConstants& kc) {
    double m2 = norm2(m);
    double h = 0.5 * (m2 - 1);
    double root = std::sqrt(h * h + 4 * ups_sigma2(m, spec, kc));
    return {(0.5 * (m2 + 1) - root) / 2, (0.5 * (m2 + 1) + root) / 2};
}

double sw_coercivity_delta(const CouplingSpec& spec, const CouplingConstants& kc) {
    double delta = 0;
    for (const auto& [m, s] : spec.sigma1.coeffs()) {
        if (norm2(m) == 0) continue;
        delta = std::max(delta, 4 * ups_sigma2(m, spec, kc) / norm2(m));
    }
    return delta;
}

// ---- dispersion function -------------------------------------------------

namespace {
struct RParts {
    double m2, km, coupling;  // coupling = 4 gamma^2 (2pi)^{2d} sigma^2 / m^2
};

RParts r_parts(const Mode& m, const Mode& k, const CouplingSpec& spec) {
    double m2 = norm2(m), s = spec.sigma1.coeff(m);
    return {m2, double(dot(k, m)), 4 * spec.gamma * spec.gamma * std::pow(2 * pi, 2 * spec.d) * s * s / m2};
}
}  // namespace

cplx dispersion_R(const Mode& m, const Mode& k, cplx lambda, const CouplingSpec& spec, const CouplingConstants& kc) {
    if (norm2(m) == 0) return lambda * lambda;
    auto p = r_parts(m, k, spec);
    cplx sh = lambda + I * p.km;
    if (p.coupling == 0.0) return sh * sh + 0.25 * p.m2 * p.m2;
    cplx ks = spec.hartree_limit() ? cplx(kc.kappa) : compute_kappa_mu(spec.sigma2, spec.n, lambda * lambda / (spec.c * spec.c));
    return sh * sh + 0.25 * p.m2 * p.m2 * (1.0 - p.coupling * ks);
}

cplx dispersion_R_deriv(const Mode& m, const Mode& k, cplx lambda, const CouplingSpec& spec,
                        const CouplingConstants& kc) {
    (void)kc;
    if (norm2(m) == 0) return 2.0 * lambda;
    auto p = r_parts(m, k, spec);
    cplx sh = lambda + I * p.km;
    if (p.coupling == 0.0 || spec.hartree_limit()) return 2.0 * sh;
    double c2 = spec.c * spec.c;
    cplx dk = compute_kappa_mu_deriv(spec.sigma2, spec.n, lambda * lambda / c2);
    return 2.0 * sh - 0.25 * p.m2 * p.m2 * p.coupling * dk * (2.0 * lambda / c2);
}

RootRect default_search_rect(const Mode& m, const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc) {
    double m2 = norm2(m), km = dot(k, m);
    double crit = m2 > 0 ? 4 * ups_sigma2(m, spec, kc) / m2 : 0.0;
    double Y = 0.5 * m2 * std::sqrt(1 + 4 * crit) + 1;
    return {1e-6, Y, -km - Y, -km + Y};
}

namespace {
using Fn = std::function<cplx(cplx)>;

std::optional<double> seg_arg(const Fn& f, cplx a, cplx b, cplx fa, cplx fb, int depth, double scale) {
    cplx mid = 0.5 * (a + b);
    cplx fm = f(mid);
    if (std::abs(fm) < 1e-300) return std::nullopt;
    double d1 = std::arg(fm / fa), d2 = std::arg(fb / fm), d = std::arg(fb / fa);
    if (std::abs(d1) < 0.4 && std::abs(d2) < 0.4 && std::abs(d1 + d2 - d) < 1e-9) return d1 + d2;
    if (depth > 48 || std::abs(b - a) < 1e-14 * scale) return std::nullopt;
    auto l = seg_arg(f, a, mid, fa, fm, depth + 1, scale);
    if (!l) return std::nullopt;
    auto r = seg_arg(f, mid, b, fm, fb, depth + 1, scale);
    if (!r) return std::nullopt;
    return *l + *r;
}

std::optional<int> winding(const Fn& f, const RootRect& r, double wtol) {
    cplx c[4] = {{r.re_min, r.im_min}, {r.re_max, r.im_min}, {r.re_max, r.im_max}, {r.re_min, r.im_max}};
    cplx fc[4];
    for (int i = 0; i < 4; ++i) {
        fc[i] = f(c[i]);
        if (std::abs(fc[i]) < 1e-300) return std::nullopt;
    }
    double scale = std::max(1.0, std::abs(c[2] - c[0]));
    double total = 0;
    for (int i = 0; i < 4; ++i) {
        // a few coarse pieces per edge before adaptive refinement
        const int pieces = 8;
        cplx a = c[i], fa = fc[i];
        for (int p = 1; p <= pieces; ++p) {
            cplx b = c[i] + (c[(i + 1) % 4] - c[i]) * (double(p) / pieces);
            cplx fb = p == pieces ? fc[(i + 1) % 4] : f(b);
            auto s = seg_arg(f, a, b, fa, fb, 0, scale);
            if (!s) return std::nullopt;
            total += *s;
            a = b;
            fa = fb;
        }
    }
    double w = total / (2 * pi);
    double n = std::round(w);
    if (std::abs(w - n) > wtol) return std::nullopt;
    return int(n);
}

struct Searcher {
    Mode m, k;
    const CouplingSpec& spec;
    const CouplingConstants& kc;
    RootTolerances tol;
    Fn f;
    RootSearchResult out;
    int budget;

    bool newton(cplx z0, const RootRect& r, UnstableRoot& root) {
        cplx z = z0;
        double w = r.re_max - r.re_min, h = r.im_max - r.im_min;
        for (int it = 1; it <= tol.newton_max_iter; ++it) {
            cplx fz = f(z);
            cplx dz = fz / dispersion_R_deriv(m, k, z, spec, kc);
            z -= dz;
            if (!(std::isfinite(z.real()) && std::isfinite(z.imag()))) return false;
            if (z.real() <= 0) return false;
            if (std::abs(dz) < 1e-15 * (1 + std::abs(z))) {
                root = {m, z, std::abs(f(z)), it};
                break;
            }
            if (it == tol.newton_max_iter) {
                std::ostringstream os;
                os << "Newton did not converge for mode (" << m[0] << "," << m[1] << ") from " << z0
                   << "; last residual " << std::abs(f(z));
                out.diagnostics.push_back(os.str());
                return false;
            }
        }
        bool inside = root.lambda.real() >= r.re_min - 1e-9 * w && root.lambda.real() <= r.re_max + 1e-9 * w &&
                      root.lambda.imag() >= r.im_min - 1e-9 * h && root.lambda.imag() <= r.im_max + 1e-9 * h;
        return inside;
    }

    void add(const UnstableRoot& r) {
        for (const auto& x : out.roots)
            if (std::abs(x.lambda - r.lambda) < 1e-8 * (1 + std::abs(r.lambda))) return;
        if (r.residual >= tol.residual) {
            std::ostringstream os;
            os << "root " << r.lambda << " residual " << r.residual << " above tolerance";
            out.diagnostics.push_back(os.str());
            return;
        }
        out.roots.push_back(r);
    }

    void search(const RootRect& r, int count) {
        if (count == 0) return;
        if (--budget < 0) {
            out.diagnostics.push_back("subdivision budget exhausted");
            return;
        }
        if (count == 1) {
            UnstableRoot root;
            cplx c{0.5 * (r.re_min + r.re_max), 0.5 * (r.im_min + r.im_max)};
            if (newton(c, r, root)) {
                add(root);
                return;
            }
        }
        bool split_re = (r.re_max - r.re_min) >= (r.im_max - r.im_min);
        static const double fracs[] = {0.5, 0.4671, 0.5329, 0.4137, 0.5863};
        for (double fr : fracs) {
            RootRect a = r, b = r;
            if (split_re) a.re_max = b.re_min = r.re_min + fr * (r.re_max - r.re_min);
            else a.im_max = b.im_min = r.im_min + fr * (r.im_max - r.im_min);
            auto wa = winding(f, a, tol.winding_tol);
            if (!wa) continue;
            auto wb = winding(f, b, tol.winding_tol);
            if (!wb) continue;
            search(a, *wa);
            search(b, *wb);
            return;
        }
        out.diagnostics.push_back("could not split a cell without a zero on the boundary");
    }
};
}  // namespace

int winding_number(const Mode& m, const Mode& k, const RootRect& r, const CouplingSpec& spec,
                   const CouplingConstants& kc, const RootTolerances& tol) {
    if (!(r.re_min > 0)) throw SpecError("root search rectangle must lie in Re lambda > 0");
    Fn f = [&](cplx z) { return dispersion_R(m, k, z, spec, kc); };
    auto w = winding(f, r, tol.winding_tol);
    if (!w) throw SpecError("boundary winding not resolved (zero too close to the rectangle boundary)");
    return *w;
}

std::vector<UnstableRoot> symmetry_partners(const UnstableRoot& r) {
    Mode mm = neg(r.m);
    return {{mm, std::conj(r.lambda), r.residual, 0},
            {r.m, -std::conj(r.lambda), r.residual, 0},
            {mm, -r.lambda, r.residual, 0}};
}

RootSearchResult dispersion_root_find(const Mode& m, const Mode& k, const CouplingSpec& spec,
                                      const CouplingConstants& kc, const RootRect& rect, const RootTolerances& tol) {
    if (!(rect.re_min > 0) || !(rect.re_max > rect.re_min) || !(rect.im_max > rect.im_min))
        throw SpecError("root search rectangle must be nondegenerate and lie in Re lambda > 0");
    Searcher s{m, k, spec, kc, tol, {}, {}, tol.max_subdivisions};
    s.f = [&](cplx z) { return dispersion_R(m, k, z, spec, kc); };
    if (norm2(m) == 0 || spec.sigma1.coeff(m) == 0.0) return s.out;  // closed form: roots on the axis
    auto w = winding(s.f, rect, tol.winding_tol);
    if (!w) throw SpecError("boundary winding not resolved (zero too close to the rectangle boundary); move or shrink it");
    s.search(rect, *w);
    std::sort(s.out.roots.begin(), s.out.roots.end(), [](const UnstableRoot& a, const UnstableRoot& b) {
        return a.lambda.real() > b.lambda.real();
    });
    for (const auto& r : s.out.roots)
        for (const auto& p : symmetry_partners(r)) s.out.partners.push_back(p);
    if (int(s.out.roots.size()) != *w) {
        std::ostringstream os;
        os << "winding count " << *w << " but " << s.out.roots.size() << " roots located";
        s.out.diagnostics.push_back(os.str());
    }
    return s.out;
}

GrowthPrediction growth_rate_predicted(const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc,
                                       const RootTolerances& tol, int threads) {
    auto cnt = counting_breakdown(k, spec, kc);
    if (cnt.NCplus == 0) throw SpecError("no unstable spectrum (N_{C+} = 0)");
    // one representative per +-m pair; the partner follows by symmetry
    std::vector<Mode> reps;
    for (const Mode& m : cnt.unstable_modes)
        if (std::find(reps.begin(), reps.end(), neg(m)) == reps.end()) reps.push_back(m);
    std::vector<RootSearchResult> res(reps.size());
    std::vector<std::exception_ptr> err(reps.size());
    auto work = [&](size_t i) {
        try {
            res[i] = dispersion_root_find(reps[i], k, spec, kc, default_search_rect(reps[i], k, spec, kc), tol);
        } catch (...) {
            err[i] = std::current_exception();
        }
    };
    int nt = std::max(1, std::min<int>(threads, int(reps.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
        pool.emplace_back([&, t] {
            for (size_t i = t; i < reps.size(); i += nt) work(i);
        });
    for (auto& th : pool) th.join();
    for (auto& e : err)
        if (e) std::rethrow_exception(e);
    GrowthPrediction g;
    for (size_t i = 0; i < reps.size(); ++i) {
        for (const auto& r : res[i].roots) {
            g.roots.push_back(r);
            g.roots.push_back({neg(r.m), std::conj(r.lambda), r.residual, 0});
            g.a_star = std::max(g.a_star, r.lambda.real());
        }
        for (const auto& d : res[i].diagnostics) g.diagnostics.push_back(d);
    }
    if (g.roots.empty()) throw SpecError("no unstable root located in the default search rectangles");
    return g;
}

}  // namespace swstab
