#include "swstab/planewave.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace swstab {

RadialNodes::RadialNodes(const CouplingSpec& spec) {
    const auto& q = spec.sigma2.quadrature();
    double C = sphere_factor(spec.n);
    xi = q.nodes;
    mu.resize(xi.size());
    s2hat.resize(xi.size());
    for (size_t j = 0; j < xi.size(); ++j) {
        mu[j] = C * q.weights[j] * std::pow(xi[j], spec.n - 1);
        s2hat[j] = spec.sigma2.fourier(xi[j]);
    }
}

int FieldState::field_index(const Mode& m) const {
    auto it = std::lower_bound(field_modes.begin(), field_modes.end(), m);
    if (it == field_modes.end() || *it != m) return -1;
    return int(it - field_modes.begin());
}

void FieldState::check_reality(double tol) const {
    for (size_t a = 0; a < field_modes.size(); ++a) {
        int b = field_index(neg(field_modes[a]));
        if (b < 0) throw SpecError("field state: mode set not symmetric");
        for (int j = 0; j < n_xi; ++j) {
            if (std::abs(phi(int(a), j) - std::conj(phi(b, j))) > tol * (1 + std::abs(phi(int(a), j))) ||
                std::abs(pi(int(a), j) - std::conj(pi(b, j))) > tol * (1 + std::abs(pi(int(a), j))))
                throw SpecError("field state: phi_hat(-m) must equal conj(phi_hat(m))");
        }
    }
}

std::vector<Mode> coupled_modes(const Sigma1Spec& s1) {
    std::vector<Mode> out;
    for (const auto& kv : s1.coeffs()) out.push_back(kv.first);
    std::sort(out.begin(), out.end());
    return out;
}

FieldState empty_state(const CouplingSpec& spec, const Grid& grid) {
    FieldState st;
    st.U.assign(grid.size(), 0.0);
    st.field_modes = coupled_modes(spec.sigma1);
    for (const Mode& m : st.field_modes)
        if (sup_norm(m) > grid.spec().M_modes) throw SpecError("grid: M_modes below the sigma1 band limit");
    st.n_xi = int(spec.sigma2.quadrature().nodes.size());
    st.phi_hat.assign(st.field_modes.size() * st.n_xi, 0.0);
    st.pi_hat.assign(st.field_modes.size() * st.n_xi, 0.0);
    return st;
}

double dispersion_omega(const Mode& k, const CouplingConstants& kc) {
    return kc.upsilon_star - 0.5 * norm2(k);
}

PlaneWave make_plane_wave(const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc) {
    PlaneWave pw;
    pw.k = k;
    pw.omega = dispersion_omega(k, kc);
    pw.upsilon_star = kc.upsilon_star;
    pw.gamma = spec.gamma;
    pw.mean_sigma1 = spec.sigma1.mean();
    Sigma2Spec s2 = spec.sigma2;
    pw.gamma_hat = [s2](double r) { return s2.fourier(r) / (r * r); };
    return pw;
}

FieldState plane_wave_state(const PlaneWave& pw, const CouplingSpec& spec, const Grid& grid) {
    if (sup_norm(pw.k) > grid.spec().M_modes) throw SpecError("plane wave: grid does not resolve mode k");
    if (spec.d == 1 && pw.k[1] != 0) throw SpecError("plane wave: k has a second component in d=1");
    FieldState st = empty_state(spec, grid);
    for (int i = 0; i < grid.size(); ++i) {
        double ph = pw.k[0] * grid.x(i, 0) + pw.k[1] * grid.x(i, 1);
        st.U[i] = cplx(std::cos(ph), std::sin(ph));
    }
    int i0 = st.field_index({0, 0});
    const auto& xi = spec.sigma2.quadrature().nodes;
    for (int j = 0; j < st.n_xi; ++j) st.phi(i0, j) = -pw.gamma * pw.mean_sigma1 * pw.gamma_hat(xi[j]);
    return st;
}

std::vector<cplx> field_potential_modes(const FieldState& st, const CouplingSpec& spec, const RadialNodes& rn) {
    std::vector<cplx> out(st.field_modes.size());
    double vol = std::pow(2 * std::numbers::pi, spec.d);
    for (size_t a = 0; a < st.field_modes.size(); ++a) {
        cplx s = 0;
        const cplx* row = &st.phi_hat[a * st.n_xi];
        for (int j = 0; j < st.n_xi; ++j) s += rn.mu[j] * rn.s2hat[j] * row[j];
        out[a] = vol * spec.sigma1.coeff(st.field_modes[a]) * s;
    }
    return out;
}

namespace {
double kinetic_quarter(const std::vector<cplx>& Uh, const Grid& grid) {
    double s = 0;
    for (int i = 0; i < grid.size(); ++i) s += norm2(grid.mode(i)) * std::norm(Uh[i]);
    return 0.25 * grid.volume() * s;
}
}  // namespace

double energy_hsw(const FieldState& st, const CouplingSpec& spec, const Grid& grid) {
    RadialNodes rn(spec);
    std::vector<cplx> Uh = st.U;
    grid.forward(Uh);
    double kin = kinetic_quarter(Uh, grid);
    std::vector<cplx> rho(grid.size());
    for (int i = 0; i < grid.size(); ++i) rho[i] = std::norm(st.U[i]);
    grid.forward(rho);
    double c2 = spec.c * spec.c;
    double wave = 0;
    for (size_t a = 0; a < st.field_modes.size(); ++a)
        for (int j = 0; j < st.n_xi; ++j) {
            double x = rn.xi[j];
            wave += rn.mu[j] * (c2 * std::norm(st.pi(int(a), j)) + 0.25 * x * x * std::norm(st.phi(int(a), j)));
        }
    wave *= grid.volume();
    auto Phi = field_potential_modes(st, spec, rn);
    cplx cpl = 0;
    for (size_t a = 0; a < st.field_modes.size(); ++a) {
        int idx = grid.index_of(st.field_modes[a]);
        cpl += Phi[a] * std::conj(rho[idx]);
    }
    return kin + wave + 0.5 * spec.gamma * grid.volume() * cpl.real();
}

double energy_hha(const std::vector<cplx>& U, const CouplingSpec& spec, const Grid& grid, double kappa) {
    std::vector<cplx> Uh = U;
    grid.forward(Uh);
    double kin = kinetic_quarter(Uh, grid);
    std::vector<cplx> rho(grid.size());
    for (int i = 0; i < grid.size(); ++i) rho[i] = std::norm(U[i]);
    grid.forward(rho);
    double vol = grid.volume();
    double s = 0;
    for (const auto& [m, sig] : spec.sigma1.coeffs()) {
        int idx = grid.index_of(m);
        if (idx < 0) continue;
        s += vol * vol * sig * sig * std::norm(rho[idx]);
    }
    return kin - spec.gamma * spec.gamma * kappa / 4 * vol * s;
}

double l2_mass(const std::vector<cplx>& U, const Grid& grid) {
    double s = 0;
    for (const auto& v : U) s += std::norm(v);
    return 0.5 * s * grid.cell_volume();
}

std::array<double, 2> momentum(const std::vector<cplx>& U, const Grid& grid) {
    std::vector<cplx> Uh = U;
    grid.forward(Uh);
    std::array<double, 2> g{0, 0};
    for (int i = 0; i < grid.size(); ++i) {
        double a = std::norm(Uh[i]);
        g[0] += grid.mode(i)[0] * a;
        g[1] += grid.mode(i)[1] * a;
    }
    g[0] *= 0.5 * grid.volume();
    g[1] *= 0.5 * grid.volume();
    return g;
}

EnergyLedger energy_ledger(const FieldState& st, const CouplingSpec& spec, const Grid& grid, double kappa) {
    EnergyLedger e;
    e.h_sw = spec.hartree_limit() ? std::numeric_limits<double>::quiet_NaN() : energy_hsw(st, spec, grid);
    e.h_ha = energy_hha(st.U, spec, grid, kappa);
    e.l2_mass = l2_mass(st.U, grid);
    e.momentum = momentum(st.U, grid);
    return e;
}

}  // namespace swstab
