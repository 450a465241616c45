#pragma once

// Test-only reference computations. Everything here is deliberately
// independent of the solver paths under test: dense diagonalization goes
// through Eigen, integrals through direct summation, and wavepacket
// evolution through full-basis grid reconstruction.

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "qnd/grid.hpp"
#include "qnd/potential.hpp"
#include "qnd/spectral.hpp"

namespace oracle {

// Dense eigensolve of the same tridiagonal matrix via Eigen's QR path.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_eigensolve(
    const qnd::TridiagonalOperator& op, bool vectors = true) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(op.diag, op.off,
                              vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("dense_eigensolve failed");
    return {es.eigenvalues(), vectors ? es.eigenvectors() : Eigen::MatrixXd()};
}

// Low-lying continuum eigenvalues from a fine-grid dense solve.
inline Eigen::VectorXd fine_grid_levels(const qnd::PotentialSpec& pot, double half_width, int n,
                                        int count, double hbar = 1.0) {
    const qnd::Grid1D grid(-half_width, half_width, n);
    const auto op = qnd::build_hamiltonian(grid, pot, hbar);
    auto [evals, _] = dense_eigensolve(op, false);
    return evals.head(count);
}

inline double quadrature(const qnd::Grid1D& g, const Eigen::VectorXd& f) {
    const Eigen::VectorXd w = g.quadrature_weights();
    return w.dot(f);
}

// Full-basis grid propagator psi -> sum_k e^{-i E_k dt / hbar} |k><k| psi,
// built from an independently computed dense eigensystem.
struct GridEvolver {
    Eigen::VectorXd energies;
    Eigen::MatrixXd basis;  // grid.n x (n-2), quadrature-normalized
    qnd::Grid1D grid;
    double hbar;

    explicit GridEvolver(const qnd::TridiagonalOperator& op) : grid(op.grid), hbar(op.hbar) {
        auto [evals, evecs] = dense_eigensolve(op, true);
        energies = evals;
        basis = Eigen::MatrixXd::Zero(grid.n, op.dim());
        basis.middleRows(1, op.dim()) = evecs / std::sqrt(grid.spacing());
    }

    Eigen::VectorXcd evolve(const Eigen::VectorXcd& psi, double dt) const {
        const Eigen::VectorXd w = grid.quadrature_weights();
        Eigen::VectorXcd coeffs = basis.transpose() * (w.asDiagonal() * psi);
        for (int k = 0; k < coeffs.size(); ++k)
            coeffs[k] *= std::exp(std::complex<double>(0.0, -energies[k] * dt / hbar));
        return basis * coeffs;
    }
};

// chi-square critical values at alpha = 0.01 for the dof values the tests use
inline double chi2_crit_99(int dof) {
    switch (dof) {
        case 9: return 21.666;
        case 15: return 30.578;
        case 19: return 36.191;
        default: throw std::runtime_error("chi2_crit_99: dof not tabulated");
    }
}

}  // namespace oracle
