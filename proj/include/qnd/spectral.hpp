#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/grid.hpp"
#include "qnd/potential.hpp"
#include "qnd/rng.hpp"

namespace qnd {

// ============================================================================
// Discrete Hamiltonian
// ============================================================================

// Symmetric tridiagonal operator acting on the interior points of a Grid1D
// (Dirichlet conditions at both ends). diag has size n-2, off size n-3.
struct TridiagonalOperator {
    Eigen::VectorXd diag;
    Eigen::VectorXd off;
    Grid1D grid;
    double hbar = 1.0;
    double mass = 1.0;

    int dim() const { return static_cast<int>(diag.size()); }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
        const int n = dim();
        Eigen::VectorXd r(n);
        for (int i = 0; i < n; ++i) {
            double s = diag[i] * v[i];
            if (i > 0) s += off[i - 1] * v[i - 1];
            if (i + 1 < n) s += off[i] * v[i + 1];
            r[i] = s;
        }
        return r;
    }

    double norm_estimate() const {
        double m = 0.0;
        for (int i = 0; i < dim(); ++i) {
            double row = std::abs(diag[i]);
            if (i > 0) row += std::abs(off[i - 1]);
            if (i + 1 < dim()) row += std::abs(off[i]);
            m = std::max(m, row);
        }
        return m;
    }
};

// Three-point finite differences: diagonal hbar^2/(m h^2) + V(x_i),
// off-diagonal -hbar^2/(2 m h^2), interior points only.
inline TridiagonalOperator build_hamiltonian(const Grid1D& grid, const PotentialSpec& potential,
                                             double hbar = 1.0) {
    if (hbar <= 0.0) throw invalid_input("build_hamiltonian: hbar must be positive");
    const std::vector<double> v = potential.sample(grid);
    const double h = grid.spacing();
    const double m = potential.mass();
    const double kinetic = hbar * hbar / (m * h * h);

    TridiagonalOperator op;
    op.grid = grid;
    op.hbar = hbar;
    op.mass = m;
    const int ni = grid.n - 2;
    op.diag.resize(ni);
    op.off = Eigen::VectorXd::Constant(ni - 1, -0.5 * kinetic);
    for (int i = 0; i < ni; ++i) {
        const double vi = v[i + 1];
        if (!std::isfinite(vi))
            throw invalid_input("build_hamiltonian: non-finite potential value at x = " +
                                std::to_string(grid.point(i + 1)));
        op.diag[i] = kinetic + vi;
    }
    return op;
}

// ============================================================================
// Symmetric tridiagonal eigensolver
// ============================================================================
// Eigenvalues by Sturm-sequence bisection; eigenvectors by inverse iteration
// with partial pivoting and Gram-Schmidt against previously accepted levels.
// Near-full requests switch to an implicit-shift QL sweep that accumulates
// the rotations, which keeps dense cluster bases orthogonal.

namespace detail {

// Number of eigenvalues strictly below x (LDL^T sign count).
inline int sturm_count(const Eigen::VectorXd& d, const Eigen::VectorXd& e, double x) {
    const int n = static_cast<int>(d.size());
    const double tiny = 1e-300;
    int count = 0;
    double q = d[0] - x;
    if (q < 0) ++count;
    for (int i = 1; i < n; ++i) {
        double denom = q;
        if (denom == 0.0) denom = tiny;
        q = d[i] - x - e[i - 1] * e[i - 1] / denom;
        if (q < 0) ++count;
    }
    return count;
}

inline double bisect_eigenvalue(const Eigen::VectorXd& d, const Eigen::VectorXd& e, int k,
                                double lo, double hi) {
    // invariant: count(lo) <= k < count(hi)
    for (int it = 0; it < 128; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (sturm_count(d, e, mid) > k)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

// One pivoted tridiagonal solve (T - lambda I) y = rhs, dgtsv-style.
// Singular pivots are perturbed; inverse iteration expects near-singularity.
inline Eigen::VectorXd shifted_solve(const Eigen::VectorXd& diag, const Eigen::VectorXd& off,
                                     double lambda, Eigen::VectorXd rhs, double pivot_floor) {
    const int n = static_cast<int>(diag.size());
    Eigen::VectorXd d = diag.array() - lambda;
    Eigen::VectorXd du = off;            // superdiagonal
    Eigen::VectorXd dl = off;            // subdiagonal
    Eigen::VectorXd du2 = Eigen::VectorXd::Zero(std::max(0, n - 2));

    for (int i = 0; i < n - 1; ++i) {
        if (std::abs(d[i]) >= std::abs(dl[i])) {
            if (std::abs(d[i]) < pivot_floor) d[i] = (d[i] < 0 ? -pivot_floor : pivot_floor);
            const double fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            rhs[i + 1] -= fact * rhs[i];
            if (i < n - 2) du2[i] = 0.0;
            dl[i] = 0.0;
        } else {
            const double fact = d[i] / dl[i];
            d[i] = dl[i];
            const double temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if (i < n - 2) {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            const double tb = rhs[i];
            rhs[i] = rhs[i + 1];
            rhs[i + 1] = tb - fact * rhs[i + 1];
            dl[i] = 0.0;
        }
    }
    if (std::abs(d[n - 1]) < pivot_floor) d[n - 1] = (d[n - 1] < 0 ? -pivot_floor : pivot_floor);

    rhs[n - 1] /= d[n - 1];
    if (n > 1) rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / d[n - 2];
    for (int i = n - 3; i >= 0; --i)
        rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / d[i];
    return rhs;
}

// Implicit-shift QL with accumulated rotations. d becomes the eigenvalues,
// columns of z the eigenvectors. Classic O(n^3) path, used when most of the
// spectrum is requested.
inline void ql_implicit(Eigen::VectorXd& d, Eigen::VectorXd& e_in, Eigen::MatrixXd& z) {
    const int n = static_cast<int>(d.size());
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e.head(n - 1) = e_in;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m != l) {
                if (iter++ == 64) throw solver_failure("ql_implicit: too many iterations");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0 ? std::abs(r) : -std::abs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (int k = 0; k < n; ++k) {
                        f = z(k, i + 1);
                        z(k, i + 1) = s * z(k, i) + c * f;
                        z(k, i) = c * z(k, i) - s * f;
                    }
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace detail

// ============================================================================
// Spectrum
// ============================================================================

// Low-lying eigenpairs of the discretized Hamiltonian. Eigenfunctions are
// sampled on the full grid (zero at both ends) and normalized against the
// trapezoid quadrature, so states.col(i).dot(w.asDiagonal()*states.col(j))
// equals delta_ij. Level indices in the public API are 1-based.
struct Spectrum {
    Eigen::VectorXd energies;   // ascending
    Eigen::MatrixXd states;     // grid.n x M
    double hbar = 1.0;
    Grid1D grid;
    std::vector<std::string> warnings;

    int levels() const { return static_cast<int>(energies.size()); }

    double energy(int level_1based) const {
        check_level(level_1based);
        return energies[level_1based - 1];
    }

    Eigen::VectorXd state(int level_1based) const {
        check_level(level_1based);
        return states.col(level_1based - 1);
    }

    // Expand eigenbasis coefficients into a grid-sampled wavefunction.
    Eigen::VectorXcd to_grid(const Eigen::VectorXcd& coeffs) const {
        return states.leftCols(coeffs.size()) * coeffs;
    }

    // Project a grid-sampled wavefunction onto the stored basis.
    Eigen::VectorXcd project(const Eigen::VectorXcd& psi) const {
        const Eigen::VectorXd w = grid.quadrature_weights();
        return states.transpose() * w.asDiagonal() * psi;
    }

private:
    void check_level(int k) const {
        if (k < 1 || k > levels())
            throw invalid_input("Spectrum: level index " + std::to_string(k) +
                                " outside 1.." + std::to_string(levels()));
    }
};

struct SolveOptions {
    double residual_tol = 1e-8;        // on ||H phi - E phi|| / max(|E|, eps*||H||)
    double orthon_tol = 1e-8;
    int max_invit_iters = 12;
};

inline Spectrum solve_spectrum(const TridiagonalOperator& op, int levels,
                               const SolveOptions& options = {}) {
    const int ni = op.dim();
    if (levels < 1) throw invalid_input("solve_spectrum: need at least one level");
    if (levels > ni)
        throw invalid_input("solve_spectrum: requested " + std::to_string(levels) +
                            " levels but the interior grid supports only " + std::to_string(ni));

    const double scale = op.norm_estimate();
    Eigen::VectorXd evals(levels);
    Eigen::MatrixXd vecs(ni, levels);

    if (levels > 256 || levels > ni / 2) {
        // near-full request: QL with accumulated rotations
        Eigen::VectorXd d = op.diag;
        Eigen::VectorXd e = op.off;
        Eigen::MatrixXd z = Eigen::MatrixXd::Identity(ni, ni);
        detail::ql_implicit(d, e, z);
        std::vector<int> order(ni);
        for (int i = 0; i < ni; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return d[a] < d[b]; });
        for (int k = 0; k < levels; ++k) {
            evals[k] = d[order[k]];
            vecs.col(k) = z.col(order[k]);
        }
    } else {
        // Gershgorin bracket
        double lo = op.diag[0], hi = op.diag[0];
        for (int i = 0; i < ni; ++i) {
            double r = 0.0;
            if (i > 0) r += std::abs(op.off[i - 1]);
            if (i + 1 < ni) r += std::abs(op.off[i]);
            lo = std::min(lo, op.diag[i] - r);
            hi = std::max(hi, op.diag[i] + r);
        }
        for (int k = 0; k < levels; ++k)
            evals[k] = detail::bisect_eigenvalue(op.diag, op.off, k, lo, hi);

        const double pivot_floor = std::numeric_limits<double>::epsilon() * std::max(scale, 1.0);
        for (int k = 0; k < levels; ++k) {
            std::uint64_t s = 0x5DEECE66Dull + 77ull * static_cast<std::uint64_t>(k);
            Eigen::VectorXd v(ni);
            for (int i = 0; i < ni; ++i)
                v[i] = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53 - 0.5;
            v.normalize();

            double resid = std::numeric_limits<double>::infinity();
            for (int it = 0; it < options.max_invit_iters; ++it) {
                v = detail::shifted_solve(op.diag, op.off, evals[k], v, pivot_floor);
                for (int j = 0; j < k; ++j) v -= vecs.col(j).dot(v) * vecs.col(j);
                const double nv = v.norm();
                if (nv == 0.0) {
                    // degenerate restart direction; reseed
                    for (int i = 0; i < ni; ++i)
                        v[i] = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53 - 0.5;
                    continue;
                }
                v /= nv;
                resid = (op.apply(v) - evals[k] * v).norm();
                if (it >= 1 && resid <= 0.5 * options.residual_tol *
                                            std::max(std::abs(evals[k]), 1e-8 * scale))
                    break;
            }
            vecs.col(k) = v;
        }
    }

    // deterministic sign: first sample reaching half the max magnitude is positive
    for (int k = 0; k < levels; ++k) {
        const double peak = vecs.col(k).cwiseAbs().maxCoeff();
        for (int i = 0; i < ni; ++i) {
            if (std::abs(vecs(i, k)) >= 0.5 * peak) {
                if (vecs(i, k) < 0) vecs.col(k) = -vecs.col(k);
                break;
            }
        }
    }

    // verify the contract before returning
    double worst = 0.0;
    for (int k = 0; k < levels; ++k) {
        const double denom = std::max(std::abs(evals[k]),
                                      std::numeric_limits<double>::epsilon() * scale);
        worst = std::max(worst, (op.apply(vecs.col(k)) - evals[k] * vecs.col(k)).norm() / denom);
    }
    if (worst > options.residual_tol)
        throw solver_failure("solve_spectrum: residual " + std::to_string(worst) +
                                 " exceeds tolerance",
                             worst);
    Eigen::MatrixXd gram = vecs.transpose() * vecs;
    gram -= Eigen::MatrixXd::Identity(levels, levels);
    if (gram.cwiseAbs().maxCoeff() > options.orthon_tol)
        throw solver_failure("solve_spectrum: basis lost orthonormality", gram.cwiseAbs().maxCoeff());

    Spectrum spec;
    spec.hbar = op.hbar;
    spec.grid = op.grid;
    spec.energies = evals;
    spec.states = Eigen::MatrixXd::Zero(op.grid.n, levels);
    const double h = op.grid.spacing();
    spec.states.middleRows(1, ni) = vecs / std::sqrt(h);  // quadrature normalization

    // tail-mass diagnostic on the highest level (outer 10% of the grid)
    const int edge = std::max(1, op.grid.n / 10);
    const Eigen::VectorXd top = spec.states.col(levels - 1).cwiseAbs2();
    const Eigen::VectorXd w = op.grid.quadrature_weights();
    double tail = 0.0;
    for (int i = 0; i < edge; ++i) tail += w[i] * top[i] + w[op.grid.n - 1 - i] * top[op.grid.n - 1 - i];
    if (tail > 1e-8)
        spec.warnings.push_back("tail mass " + std::to_string(tail) +
                                " of level " + std::to_string(levels) +
                                " in the outer 10% of the grid; enlarge the domain");
    return spec;
}

inline Spectrum solve_spectrum(const Grid1D& grid, const PotentialSpec& potential, int levels,
                               double hbar = 1.0, const SolveOptions& options = {}) {
    return solve_spectrum(build_hamiltonian(grid, potential, hbar), levels, options);
}

// ============================================================================
// Spectral timescales and oracles
// ============================================================================

// T_ij = 2 pi hbar / |E_i - E_j|, the beat period of two eigenstates.
inline double reformation_time(const Spectrum& spec, int i, int j) {
    if (i == j) throw invalid_input("reformation_time: need two distinct levels");
    const double gap = std::abs(spec.energy(i) - spec.energy(j));
    const double scale = std::max(std::abs(spec.energy(i)), std::abs(spec.energy(j)));
    if (gap <= 1e-12 * std::max(scale, 1.0))
        throw degenerate_levels("reformation_time: levels " + std::to_string(i) + " and " +
                                std::to_string(j) + " are degenerate within tolerance");
    return 2.0 * M_PI * spec.hbar / gap;
}

// Analytic oscillator ladder E_k = hbar omega (k - 1/2), 1-based.
inline std::vector<double> harmonic_levels(double mass, double omega, double hbar, int count) {
    if (mass <= 0 || omega <= 0 || hbar <= 0)
        throw invalid_input("harmonic_levels: mass, omega, hbar must be positive");
    std::vector<double> e(count);
    for (int k = 1; k <= count; ++k) e[k - 1] = hbar * omega * (k - 0.5);
    return e;
}

// Domain heuristic: classical turning point of the highest requested level
// plus several well widths. A tail-mass warning from solve_spectrum is the
// signal that this was not enough.
inline Grid1D default_grid(const PotentialSpec& potential, int levels, double hbar = 1.0,
                           int points = 0) {
    double half = 10.0;
    const double m = potential.mass();
    if (const auto* h = std::get_if<Harmonic>(&potential.variant)) {
        const double etop = hbar * h->omega * (levels + 0.5);
        const double xt = std::sqrt(2.0 * etop / (m * h->omega * h->omega));
        half = xt + 6.0 * std::sqrt(hbar / (m * h->omega));
    } else if (const auto* d = std::get_if<DoubleWell>(&potential.variant)) {
        const double omega_well = std::sqrt(2.0 * d->mu / m);
        const double etop = hbar * omega_well * (levels + 1.0);
        const double u = d->mu / d->lambda +
                         2.0 / d->lambda * std::sqrt(0.25 * d->mu * d->mu + d->lambda * etop);
        half = std::sqrt(u) + 6.0 * std::sqrt(hbar / (m * omega_well));
    } else {
        throw invalid_input("default_grid: tabulated potentials carry their own grid");
    }
    if (points <= 0) {
        points = static_cast<int>(std::ceil(2.0 * half / 0.01)) + 1;
        points = std::clamp(points, 801, 20001);
    }
    if (points % 2 == 0) ++points;  // keep x = 0 on the grid for symmetric potentials
    return Grid1D(-half, half, points);
}

}  // namespace qnd
