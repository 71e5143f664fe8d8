#include "swstab/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>

namespace swstab {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

void GridSpec::validate() const {
    if (d != 1 && d != 2) throw SpecError("grid: d must be 1 or 2");
    if (N_x < 4 || (N_x & (N_x - 1)) != 0) throw SpecError("grid: N_x must be a power of two >= 4");
    if (M_modes < 1) throw SpecError("grid: M_modes must be >= 1");
    if (N_x < 2 * M_modes + 2) throw SpecError("grid: N_x must be >= 2*M_modes + 2");
    if (!(dt > 0)) throw SpecError("grid: dt must be > 0");
    if (!(T >= 0)) throw SpecError("grid: T must be >= 0");
}

struct Grid::Plans {
    fftw_plan fwd = nullptr, bwd = nullptr;
    fftw_complex* buf = nullptr;
};

Grid::Grid(const GridSpec& g) : g_(g) {
    g_.validate();
    N_ = g_.d == 1 ? g_.N_x : g_.N_x * g_.N_x;
    vol_ = std::pow(2 * std::numbers::pi, g_.d);
    modes_.resize(N_);
    keep_.resize(N_);
    auto wrap = [&](int i) { return i < g_.N_x / 2 ? i : i - g_.N_x; };
    for (int i = 0; i < N_; ++i) {
        Mode m{};
        if (g_.d == 1) m = {wrap(i), 0};
        else m = {wrap(i / g_.N_x), wrap(i % g_.N_x)};
        modes_[i] = m;
        keep_[i] = sup_norm(m) <= g_.M_modes;
    }
    plans_ = std::make_unique<Plans>();
    std::lock_guard<std::mutex> lk(planner_mutex());
    plans_->buf = fftw_alloc_complex(N_);
    if (g_.d == 1) {
        plans_->fwd = fftw_plan_dft_1d(N_, plans_->buf, plans_->buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_->bwd = fftw_plan_dft_1d(N_, plans_->buf, plans_->buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    } else {
        plans_->fwd = fftw_plan_dft_2d(g_.N_x, g_.N_x, plans_->buf, plans_->buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_->bwd = fftw_plan_dft_2d(g_.N_x, g_.N_x, plans_->buf, plans_->buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
}

Grid::~Grid() {
    std::lock_guard<std::mutex> lk(planner_mutex());
    fftw_destroy_plan(plans_->fwd);
    fftw_destroy_plan(plans_->bwd);
    fftw_free(plans_->buf);
}

int Grid::index_of(const Mode& m) const {
    int h = g_.N_x / 2;
    auto ok = [&](int a) { return a >= -h && a < h; };
    auto idx = [&](int a) { return a < 0 ? a + g_.N_x : a; };
    if (!ok(m[0]) || !ok(m[1])) return -1;
    if (g_.d == 1) return m[1] == 0 ? idx(m[0]) : -1;
    return idx(m[0]) * g_.N_x + idx(m[1]);
}

double Grid::x(int idx, int axis) const {
    double h = 2 * std::numbers::pi / g_.N_x;
    if (g_.d == 1) return axis == 0 ? h * idx : 0.0;
    return axis == 0 ? h * (idx / g_.N_x) : h * (idx % g_.N_x);
}

void Grid::forward(std::vector<cplx>& a) const {
    // new-array execute keeps one plan usable from several threads
    fftw_execute_dft(plans_->fwd, reinterpret_cast<fftw_complex*>(a.data()),
                     reinterpret_cast<fftw_complex*>(a.data()));
    double s = 1.0 / N_;
    for (auto& v : a) v *= s;
}

void Grid::backward(std::vector<cplx>& a) const {
    fftw_execute_dft(plans_->bwd, reinterpret_cast<fftw_complex*>(a.data()),
                     reinterpret_cast<fftw_complex*>(a.data()));
}

}  // namespace swstab
