#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/spectral.hpp"
#include "qnd/state.hpp"

namespace qnd {

// ============================================================================
// Reduction kernels
// ============================================================================

enum class KernelShape { Gaussian, VonNeumannWindow };

// The impulsive position-measurement reduction w_a. Gaussian multiplies by
// exp(-(x-a)^2 / (2 da^2)); the von Neumann window keeps |x-a| <= da and
// zeroes the rest (proportionality constant taken as 1 -- anything else
// cancels under renormalization).
struct MeasurementKernel {
    KernelShape shape = KernelShape::Gaussian;
    double delta_a = 1.0;

    MeasurementKernel() = default;
    MeasurementKernel(KernelShape s, double da) : shape(s), delta_a(da) {
        if (!(delta_a > 0.0)) throw invalid_input("MeasurementKernel: delta_a must be positive");
    }

    static MeasurementKernel gaussian(double da) { return {KernelShape::Gaussian, da}; }
    static MeasurementKernel window(double da) { return {KernelShape::VonNeumannWindow, da}; }

    double weight(double x, double a) const {
        if (shape == KernelShape::Gaussian) {
            const double u = (x - a) / delta_a;
            return std::exp(-0.5 * u * u);
        }
        return (x >= a - delta_a && x <= a + delta_a) ? 1.0 : 0.0;
    }

    Eigen::VectorXd sample(const Eigen::VectorXd& x, double a) const {
        Eigen::VectorXd w(x.size());
        for (int i = 0; i < x.size(); ++i) w[i] = weight(x[i], a);
        return w;
    }

    std::string describe() const {
        return (shape == KernelShape::Gaussian ? std::string("gaussian") : std::string("window")) +
               "(delta_a=" + std::to_string(delta_a) + ")";
    }
};

// Pointwise reduction of a grid-sampled wavefunction; never increases norm.
inline Eigen::VectorXcd apply_kernel(const Eigen::VectorXcd& psi, const Eigen::VectorXd& x,
                                     double a, const MeasurementKernel& kernel) {
    if (psi.size() != x.size()) throw invalid_input("apply_kernel: psi and grid sizes differ");
    if (!psi.allFinite()) throw invalid_input("apply_kernel: non-finite wavefunction");
    return kernel.sample(x, a).asDiagonal() * psi;
}

inline Eigen::VectorXcd apply_kernel(const Eigen::VectorXcd& psi, const Grid1D& grid, double a,
                                     const MeasurementKernel& kernel) {
    return apply_kernel(psi, grid.points(), a, kernel);
}

// ============================================================================
// Kernel matrices in the eigenbasis
// ============================================================================

// W_ml(a) = <m| w_a |l> by trapezoid quadrature on the spectrum's grid.
// Because the basis is quadrature-orthonormal and 0 <= w_a <= 1 at the
// nodes, W(a) is symmetric with eigenvalues in [0, 1] up to roundoff.
struct KernelMatrix {
    double result = 0.0;
    Eigen::MatrixXd elements;

    Eigen::VectorXcd apply(const Eigen::VectorXcd& c) const { return elements * c; }
};

inline KernelMatrix kernel_matrix(const Spectrum& spectrum, const MeasurementKernel& kernel,
                                  double a) {
    const Eigen::VectorXd x = spectrum.grid.points();
    const Eigen::VectorXd w = spectrum.grid.quadrature_weights();
    const Eigen::VectorXd k = kernel.sample(x, a);
    KernelMatrix out;
    out.result = a;
    out.elements = spectrum.states.transpose() * (k.cwiseProduct(w)).asDiagonal() * spectrum.states;
    out.elements = 0.5 * (out.elements + out.elements.transpose()).eval();
    return out;
}

// Kernel matrices for a whole result grid, built once and reused across
// scan points. Construction per candidate a is independent.
struct KernelSet {
    Eigen::VectorXd a_grid;
    std::vector<Eigen::MatrixXd> mats;
    MeasurementKernel kernel;

    KernelSet() = default;
    KernelSet(const Spectrum& spectrum, const MeasurementKernel& k, Eigen::VectorXd grid)
        : a_grid(std::move(grid)), kernel(k) {
        mats.reserve(a_grid.size());
        const Eigen::VectorXd x = spectrum.grid.points();
        const Eigen::VectorXd w = spectrum.grid.quadrature_weights();
        const Eigen::MatrixXd basis_w = w.asDiagonal() * spectrum.states;
        for (int i = 0; i < a_grid.size(); ++i) {
            const Eigen::VectorXd kv = kernel.sample(x, a_grid[i]);
            Eigen::MatrixXd m = spectrum.states.transpose() * kv.asDiagonal() * basis_w;
            mats.push_back(0.5 * (m + m.transpose()));
        }
    }

    int size() const { return static_cast<int>(a_grid.size()); }
    double step() const {
        return a_grid.size() > 1 ? a_grid[1] - a_grid[0] : 1.0;
    }
};

// ============================================================================
// Renormalization
// ============================================================================

// Returns the unit-norm state and R = 1 / ||c||, the constant the reduced
// state is multiplied by.
inline std::pair<StateCoefficients, double> renormalize(const StateCoefficients& state) {
    const double n = state.norm();
    if (n == 0.0)
        throw annihilated_state("renormalize: state annihilated by the measurement kernel");
    StateCoefficients out(state.c / n, true);
    return {std::move(out), 1.0 / n};
}

}  // namespace qnd
