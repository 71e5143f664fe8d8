#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swstab/coupling.hpp"
#include "swstab/grid.hpp"
#include "swstab/planewave.hpp"
#include "swstab/sw_spec.hpp"

namespace swstab {

struct MonitorTrace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add(std::vector<double> row);
    std::vector<double> column(const std::string& name) const;
};

struct SolverOptions {
    double T = 1.0;
    double dt = 1e-3;
    int sample_every = 100;
    bool store_U = false;
    bool monitor = true;
    std::optional<PlaneWave> reference;  // fluctuation monitors are relative to this wave
    // called at each sample; returning false stops the run
    std::function<bool(const FieldState&)> on_sample;
};

struct RunResult {
    FieldState final_state;
    std::vector<double> times;
    std::vector<std::vector<cplx>> U;  // filled when store_U
    MonitorTrace trace;
    std::vector<std::string> diagnostics;
};

std::vector<std::string> monitor_columns(int d);

RunResult evolve_hartree(const std::vector<cplx>& U0, const CouplingSpec& spec, const CouplingConstants& kc,
                         const Grid& grid, const SolverOptions& opt);
RunResult evolve_sw_field(const FieldState& s0, const CouplingSpec& spec, const CouplingConstants& kc,
                          const Grid& grid, const SolverOptions& opt);

struct MemoryOptions {
    double tail_tol = 1e-14;  // relative size of p below which history is dropped
};
// init_field == nullptr means Phi_Init = 0
RunResult evolve_sw_memory(const std::vector<cplx>& U0, const FieldState* init_field, const CouplingSpec& spec,
                           const CouplingConstants& kc, const Grid& grid, const SolverOptions& opt,
                           const MemoryOptions& mopt = {});
// Phi_Cou modes for a constant-in-time density history rho_m, exact product-integration weights
double memory_weight_sum(const CouplingSpec& spec, double t, double dt);

// ---- linearized propagators ----------------------------------------------

struct LinearModeData {
    Mode m{};
    cplx Q, P;
};

struct LinearTrajectory {
    std::vector<double> times;
    std::vector<double> h1;       // H^1 norm of the perturbation
    std::vector<double> energy;   // conserved E0 functional
    std::vector<std::vector<LinearModeData>> modes;
    double bound = 0;             // 2 sqrt(E0(0)/margin)
};

LinearTrajectory evolve_linear_hartree(const std::vector<LinearModeData>& w0, const Mode& k,
                                       const std::vector<double>& times, const CouplingSpec& spec,
                                       const CouplingConstants& kc);
double hartree_linear_energy(const std::vector<LinearModeData>& w, const CouplingSpec& spec,
                             const CouplingConstants& kc);

struct LinearSWState {
    std::vector<Mode> modes;
    std::vector<cplx> Q, P;
    int n_xi = 0;
    std::vector<cplx> psi, dpsi;  // per (mode, node); dpsi = d/dt psi_hat
};

LinearSWState linear_sw_state(const std::vector<LinearModeData>& w0, const CouplingSpec& spec);
double sw_linear_energy(const LinearSWState& s, const CouplingSpec& spec);
LinearTrajectory evolve_linear_sw(const LinearSWState& s0, const Mode& k, double T, double dt, int sample_every,
                                  const CouplingSpec& spec, const CouplingConstants& kc);

struct Mode0Trajectory {
    std::vector<double> times;
    std::vector<cplx> Q0, P0;
    double predicted_slope = 0;
};

Mode0Trajectory evolve_linear_sw_mode0(cplx Q0, cplx P0, const std::function<cplx(double)>& phi0_hat,
                                       const std::function<cplx(double)>& pi0_hat,
                                       const std::vector<double>& times, const CouplingSpec& spec,
                                       const CouplingConstants& kc);
double least_squares_slope(const std::vector<double>& t, const std::vector<double>& y);

// ---- growth and limits ------------------------------------------------------

struct GrowthOptions {
    double window_low_factor = 10;  // window starts at this multiple of the amplitude
    double window_high = 1e-2;      // and ends at this absolute amplitude
    int sample_every = 20;
    int threads = 1;
};

struct GrowthMeasurement {
    bool fit_accepted = false;
    double a_measured = 0;
    double a_predicted = 0;
    double relative_gap = 0;
    double exit_time = -1;
    double window_start = 0, window_end = 0;
    Mode mode{};
    cplx lambda;
    std::vector<double> times, amplitude;
    std::vector<std::string> diagnostics;
};

// perturbation of the plane wave along the unstable eigenvector (m, lambda) with RMS size amplitude
FieldState unstable_perturbed_state(const PlaneWave& pw, const Mode& m, cplx lambda, double amplitude,
                                    const CouplingSpec& spec, const Grid& grid);
GrowthMeasurement measure_growth_rate(const Mode& k, double amplitude, double T, const CouplingSpec& spec,
                                      const CouplingConstants& kc, const Grid& grid, double dt,
                                      const GrowthOptions& gopt = {});

// U0 = e^{ik.x}(1 + amplitude (cos x_1 + 0.5 i sin 2x_1))
std::vector<cplx> reference_perturbed_wave(const Mode& k, double amplitude, const Grid& grid);
FieldState with_field_profile(const std::vector<cplx>& U0, const PlaneWave& pw, const CouplingSpec& spec,
                              const Grid& grid);

struct CLimitRow {
    double c = 0;
    double sup_error = 0;
    double p_c_integral = 0;
    double kappa_over_c2 = 0;
};

std::vector<CLimitRow> c_limit_study(const std::vector<cplx>& U0, const std::vector<double>& c_list, double T,
                                     double dt, int sample_every, const CouplingSpec& spec, const Grid& grid,
                                     int threads = 1);

// L2 distance on the grid
double l2_distance(const std::vector<cplx>& a, const std::vector<cplx>& b, const Grid& grid);

}  // namespace swstab
