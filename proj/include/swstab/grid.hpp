#pragma once

#include <memory>
#include <vector>

#include "swstab/coupling.hpp"

namespace swstab {

struct GridSpec {
    int d = 1;
    int N_x = 256;
    int M_modes = 85;
    double dt = 1e-3;
    double T = 1.0;

    void validate() const;
};

// Periodic grid on [0, 2pi)^d with FFTW transforms. Fourier coefficients use
// the convention f_m = N^{-1} sum_x f(x) e^{-i m.x}, so f(x) = sum_m f_m e^{i m.x}.
class Grid {
public:
    explicit Grid(const GridSpec& g);
    ~Grid();
    Grid(const Grid&) = delete;
    Grid& operator=(const Grid&) = delete;

    const GridSpec& spec() const { return g_; }
    int d() const { return g_.d; }
    int size() const { return N_; }
    double cell_volume() const { return vol_ / N_; }
    double volume() const { return vol_; }

    const Mode& mode(int idx) const { return modes_[idx]; }
    int index_of(const Mode& m) const;  // -1 when not representable
    double x(int idx, int axis) const;
    bool retained(int idx) const { return keep_[idx]; }

    void forward(std::vector<cplx>& a) const;   // values -> coefficients
    void backward(std::vector<cplx>& a) const;  // coefficients -> values

private:
    GridSpec g_;
    int N_;
    double vol_;
    std::vector<Mode> modes_;
    std::vector<char> keep_;
    struct Plans;
    std::unique_ptr<Plans> plans_;
};

}  // namespace swstab
