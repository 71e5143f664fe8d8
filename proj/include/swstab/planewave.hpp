#pragma once

#include <functional>
#include <vector>

#include "swstab/coupling.hpp"
#include "swstab/grid.hpp"

namespace swstab {

// Radial node data shared by the field solvers and energies: mu_j is the
// weight of a radial integral over R^n in Fourier variables, so that
// int f(|xi|) dxi/(2pi)^n ~ sum_j mu_j f(xi_j).
struct RadialNodes {
    std::vector<double> xi, mu, s2hat;
    explicit RadialNodes(const CouplingSpec& spec);
    int size() const { return int(xi.size()); }
};

struct FieldState {
    double t = 0;
    std::vector<cplx> U;            // values on the x-grid
    std::vector<Mode> field_modes;  // x-modes carrying a wave component
    int n_xi = 0;
    std::vector<cplx> phi_hat;      // psi_hat(t, m, xi_j), row per field mode
    std::vector<cplx> pi_hat;       // -(1/(2c^2)) d/dt psi_hat

    int field_index(const Mode& m) const;
    cplx& phi(int im, int j) { return phi_hat[size_t(im) * n_xi + j]; }
    cplx& pi(int im, int j) { return pi_hat[size_t(im) * n_xi + j]; }
    cplx phi(int im, int j) const { return phi_hat[size_t(im) * n_xi + j]; }
    cplx pi(int im, int j) const { return pi_hat[size_t(im) * n_xi + j]; }

    // d/dt psi_hat <-> Pi conversions
    static cplx pi_from_dt(cplx dpsi, double c) { return -dpsi / (2 * c * c); }
    static cplx dt_from_pi(cplx pi, double c) { return -2 * c * c * pi; }

    void check_reality(double tol = 1e-12) const;
};

// Modes m with sigma_{1,m} != 0, sorted.
std::vector<Mode> coupled_modes(const Sigma1Spec& s1);
FieldState empty_state(const CouplingSpec& spec, const Grid& grid);

struct PlaneWave {
    Mode k{};
    double omega = 0;
    double upsilon_star = 0;
    double gamma = 0;
    double mean_sigma1 = 0;
    std::function<double(double)> gamma_hat;  // sigma2_hat(r)/r^2
};

struct EnergyLedger {
    double h_sw = 0;
    double h_ha = 0;
    double l2_mass = 0;
    std::array<double, 2> momentum{};
};

double dispersion_omega(const Mode& k, const CouplingConstants& kc);
PlaneWave make_plane_wave(const Mode& k, const CouplingSpec& spec, const CouplingConstants& kc);
FieldState plane_wave_state(const PlaneWave& pw, const CouplingSpec& spec, const Grid& grid);

// Phi_m = (2pi)^d sigma_{1,m} int sigma2_hat psi_hat_m dxi/(2pi)^n, per field mode
std::vector<cplx> field_potential_modes(const FieldState& st, const CouplingSpec& spec, const RadialNodes& rn);

double energy_hsw(const FieldState& st, const CouplingSpec& spec, const Grid& grid);
double energy_hha(const std::vector<cplx>& U, const CouplingSpec& spec, const Grid& grid, double kappa);
double l2_mass(const std::vector<cplx>& U, const Grid& grid);
std::array<double, 2> momentum(const std::vector<cplx>& U, const Grid& grid);
EnergyLedger energy_ledger(const FieldState& st, const CouplingSpec& spec, const Grid& grid, double kappa);

}  // namespace swstab
