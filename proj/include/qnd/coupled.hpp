#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/grid.hpp"
#include "qnd/measurement.hpp"
#include "qnd/rng.hpp"
#include "qnd/sequence.hpp"

namespace qnd {

// ============================================================================
// Two bilinearly coupled oscillators on a product number basis
// ============================================================================

struct CoupledConfig {
    double m1 = 1.0, m2 = 1.0;
    double omega1 = 1.0, omega2 = 1.3;
    double gamma = 0.3;       // H_int = gamma x1 x2
    double delta_a1 = 1.0;    // instrumental error of the x1 meter
    double hbar = 1.0;
    int n1 = 24, n2 = 24;     // per-mode truncation

    void validate() const {
        if (m1 <= 0 || m2 <= 0 || omega1 <= 0 || omega2 <= 0)
            throw invalid_input("CoupledConfig: masses and frequencies must be positive");
        if (n1 < 2 || n2 < 2) throw invalid_input("CoupledConfig: truncations must be >= 2");
        if (delta_a1 <= 0) throw invalid_input("CoupledConfig: delta_a1 must be positive");
        if (hbar <= 0) throw invalid_input("CoupledConfig: hbar must be positive");
        if (!(gamma * gamma < m1 * m2 * omega1 * omega1 * omega2 * omega2))
            throw invalid_input("CoupledConfig: gamma^2 must stay below m1 m2 w1^2 w2^2 "
                                "(potential loses positivity)");
    }

    int dim() const { return n1 * n2; }
    int index(int i1, int i2) const { return i1 * n2 + i2; }
};

// Ladder position matrix <k|x|k'> = sqrt(hbar/(2 m w)) (sqrt(k+1) on the
// first off-diagonals).
inline Eigen::MatrixXd position_matrix(double mass, double omega, double hbar, int n) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
    const double s = std::sqrt(hbar / (2.0 * mass * omega));
    for (int k = 0; k + 1 < n; ++k) x(k, k + 1) = x(k + 1, k) = s * std::sqrt(k + 1.0);
    return x;
}

// Exact <k|x^2|k'> elements (not the square of the truncated matrix).
inline Eigen::MatrixXd position_sq_matrix(double mass, double omega, double hbar, int n) {
    Eigen::MatrixXd x2 = Eigen::MatrixXd::Zero(n, n);
    const double s2 = hbar / (2.0 * mass * omega);
    for (int k = 0; k < n; ++k) x2(k, k) = s2 * (2.0 * k + 1.0);
    for (int k = 0; k + 2 < n; ++k)
        x2(k, k + 2) = x2(k + 2, k) = s2 * std::sqrt((k + 1.0) * (k + 2.0));
    return x2;
}

inline Eigen::MatrixXd coupled_hamiltonian(const CoupledConfig& cfg) {
    cfg.validate();
    const int d = cfg.dim();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    for (int i1 = 0; i1 < cfg.n1; ++i1)
        for (int i2 = 0; i2 < cfg.n2; ++i2)
            h(cfg.index(i1, i2), cfg.index(i1, i2)) =
                cfg.hbar * cfg.omega1 * (i1 + 0.5) + cfg.hbar * cfg.omega2 * (i2 + 0.5);
    const Eigen::MatrixXd x1 = position_matrix(cfg.m1, cfg.omega1, cfg.hbar, cfg.n1);
    const Eigen::MatrixXd x2 = position_matrix(cfg.m2, cfg.omega2, cfg.hbar, cfg.n2);
    for (int i1 = 0; i1 < cfg.n1; ++i1)
        for (int j1 = 0; j1 < cfg.n1; ++j1) {
            if (x1(i1, j1) == 0.0) continue;
            for (int i2 = 0; i2 < cfg.n2; ++i2)
                for (int j2 = 0; j2 < cfg.n2; ++j2)
                    if (x2(i2, j2) != 0.0)
                        h(cfg.index(i1, i2), cfg.index(j1, j2)) +=
                            cfg.gamma * x1(i1, j1) * x2(i2, j2);
        }
    return h;
}

// Classical normal-mode frequencies (w_minus, w_plus) of the quadratic form,
// general masses.
inline std::pair<double, double> normal_mode_frequencies(const CoupledConfig& cfg) {
    cfg.validate();
    const double g = cfg.gamma / std::sqrt(cfg.m1 * cfg.m2);
    const double a = cfg.omega1 * cfg.omega1, b = cfg.omega2 * cfg.omega2;
    const double mid = 0.5 * (a + b);
    const double off = std::sqrt(0.25 * (a - b) * (a - b) + g * g);
    return {std::sqrt(mid - off), std::sqrt(mid + off)};
}

// ============================================================================
// State on the product basis
// ============================================================================

struct CoupledState {
    Eigen::VectorXcd amplitudes;  // flattened, index = i1 * n2 + i2
    CoupledConfig config;

    Eigen::Map<const Eigen::MatrixXcd> matrix() const {
        // column-major map of a row-major layout: store as (n2 x n1), column i1
        return Eigen::Map<const Eigen::MatrixXcd>(amplitudes.data(), config.n2, config.n1);
    }

    double norm() const { return amplitudes.norm(); }

    void renormalize_in_place() {
        const double n = norm();
        if (n == 0.0) throw annihilated_state("CoupledState: zero norm");
        amplitudes /= n;
    }
};

// Diagonalized coupled system: propagation, ground state, meter matrices.
class CoupledSystem {
public:
    explicit CoupledSystem(const CoupledConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const Eigen::MatrixXd h = coupled_hamiltonian(cfg_);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
        if (es.info() != Eigen::Success)
            throw solver_failure("CoupledSystem: product-basis diagonalization failed");
        evals_ = es.eigenvalues();
        evecs_ = es.eigenvectors();
        build_mode1_basis();
    }

    const CoupledConfig& config() const { return cfg_; }
    const Eigen::VectorXd& energies() const { return evals_; }

    CoupledState ground_state() const {
        CoupledState s{evecs_.col(0).cast<std::complex<double>>(), cfg_};
        return s;
    }

    CoupledState evolve(const CoupledState& s, double dt) const {
        Eigen::VectorXcd coeffs = evecs_.transpose() * s.amplitudes;
        for (int k = 0; k < coeffs.size(); ++k)
            coeffs[k] *= std::exp(std::complex<double>(0.0, -evals_[k] * dt / cfg_.hbar));
        return CoupledState{evecs_ * coeffs, cfg_};
    }

    // <k| w_a |k'> on the mode-1 oscillator basis by trapezoid quadrature.
    Eigen::MatrixXd meter_matrix(double a, double delta_a) const {
        const MeasurementKernel kernel = MeasurementKernel::gaussian(delta_a);
        const Eigen::VectorXd kv = kernel.sample(x1_grid_, a);
        Eigen::MatrixXd g = basis1_.transpose() * (kv.cwiseProduct(w1_)).asDiagonal() * basis1_;
        return 0.5 * (g + g.transpose());
    }

    // Gaussian reduction of x1 with result a. Returns the unnormalized state
    // and the truncation leak of this reduction.
    std::pair<CoupledState, double> measure_x1(const CoupledState& s, double a,
                                               double delta_a) const {
        if (!s.amplitudes.allFinite()) throw invalid_input("measure_x1: non-finite state");
        const Eigen::MatrixXd g = meter_matrix(a, delta_a);
        // reshape: amplitudes[(i1, i2)] with i2 fastest => (n2 x n1) matrix, C = column i1
        Eigen::Map<const Eigen::MatrixXcd> c(s.amplitudes.data(), cfg_.n2, cfg_.n1);
        Eigen::MatrixXcd reduced = c * g.transpose();  // acts on the i1 index

        // leak: compare against the reduction applied on the mode-1 grid
        const MeasurementKernel kernel = MeasurementKernel::gaussian(delta_a);
        const Eigen::VectorXd kv = kernel.sample(x1_grid_, a);
        const Eigen::MatrixXcd on_grid = basis1_ * c.transpose();          // grid x n2
        const Eigen::MatrixXcd reduced_grid = kv.asDiagonal() * on_grid;   // grid x n2
        double grid_norm2 = 0.0;
        for (int j = 0; j < cfg_.n2; ++j)
            grid_norm2 += w1_.cwiseProduct(reduced_grid.col(j).cwiseAbs2()).sum();
        const double basis_norm2 = reduced.squaredNorm();
        const double leak =
            grid_norm2 > 0.0 ? std::max(0.0, 1.0 - basis_norm2 / grid_norm2) : 0.0;

        CoupledState out{Eigen::Map<Eigen::VectorXcd>(reduced.data(), cfg_.dim()), cfg_};
        return {std::move(out), leak};
    }

    const Eigen::VectorXd& mode1_grid() const { return x1_grid_; }
    const Eigen::MatrixXd& mode1_basis() const { return basis1_; }
    const Eigen::VectorXd& mode1_weights() const { return w1_; }

private:
    void build_mode1_basis() {
        const double xi_scale = std::sqrt(cfg_.hbar / (cfg_.m1 * cfg_.omega1));
        const double half = (std::sqrt(2.0 * cfg_.n1 + 1.0) + 8.0) * xi_scale;
        const int n = 2001;
        const Grid1D grid(-half, half, n);
        x1_grid_ = grid.points();
        w1_ = grid.quadrature_weights();
        basis1_.resize(n, cfg_.n1);
        // oscillator eigenfunctions by the stable upward recurrence
        const double norm0 = std::pow(cfg_.m1 * cfg_.omega1 / (M_PI * cfg_.hbar), 0.25);
        for (int i = 0; i < n; ++i) {
            const double xi = x1_grid_[i] / xi_scale;
            double hm2 = norm0 * std::exp(-0.5 * xi * xi);
            basis1_(i, 0) = hm2;
            double hm1 = std::sqrt(2.0) * xi * hm2;
            if (cfg_.n1 > 1) basis1_(i, 1) = hm1;
            for (int k = 2; k < cfg_.n1; ++k) {
                const double hk = std::sqrt(2.0 / k) * xi * hm1 - std::sqrt((k - 1.0) / k) * hm2;
                basis1_(i, k) = hk;
                hm2 = hm1;
                hm1 = hk;
            }
        }
    }

    CoupledConfig cfg_;
    Eigen::VectorXd evals_;
    Eigen::MatrixXd evecs_;
    Eigen::VectorXd x1_grid_;
    Eigen::VectorXd w1_;
    Eigen::MatrixXd basis1_;
};

// ============================================================================
// Conditioned x2 spread
// ============================================================================

// sqrt(2 Var(x2)) of the (renormalized) state: the factor-2 convention of the
// direct effective uncertainty carried over to the unmeasured mode.
inline double indirect_uncertainty(const CoupledState& s) {
    const double n2norm = s.amplitudes.squaredNorm();
    if (!(n2norm > 0.0)) throw invalid_input("indirect_uncertainty: zero state");
    const auto& cfg = s.config;
    const Eigen::MatrixXd x2 = position_matrix(cfg.m2, cfg.omega2, cfg.hbar, cfg.n2);
    const Eigen::MatrixXd x2sq = position_sq_matrix(cfg.m2, cfg.omega2, cfg.hbar, cfg.n2);
    // reduced mode-2 expectation: sum over i1 of <c_i1| O |c_i1>
    Eigen::Map<const Eigen::MatrixXcd> c(s.amplitudes.data(), cfg.n2, cfg.n1);
    double mean = 0.0, second = 0.0;
    for (int i1 = 0; i1 < cfg.n1; ++i1) {
        const Eigen::VectorXcd col = c.col(i1);
        mean += std::real(col.dot(x2 * col));
        second += std::real(col.dot(x2sq * col));
    }
    mean /= n2norm;
    second /= n2norm;
    return std::sqrt(2.0 * std::max(0.0, second - mean * mean));
}

// Spread of a hypothetical gaussian x2 meter's outcomes on the conditioned
// state (exploratory alternative definition; no conformance contract).
inline double indirect_outcome_spread(const CoupledState& s, double delta_a2) {
    const double var_x2 = 0.5 * indirect_uncertainty(s) * indirect_uncertainty(s);
    return std::sqrt(delta_a2 * delta_a2 + 2.0 * var_x2);
}

// ============================================================================
// Repeated indirect-measurement sequences
// ============================================================================

struct CoupledSequenceConfig {
    CoupledConfig system;
    int n_measurements = 10;
    double delta_t = 1.0;
    ResultPolicy policy = PolicyMostProbable{};
    DensityMode mode = DensityMode::Linear;
    int result_points = 801;

    void validate() const {
        system.validate();
        if (n_measurements < 0) throw invalid_input("CoupledSequenceConfig: n >= 0 required");
        if (!(delta_t > 0.0)) throw invalid_input("CoupledSequenceConfig: delta_t must be positive");
        if (result_points < 3) throw invalid_input("CoupledSequenceConfig: need >= 3 result points");
    }
};

struct CoupledTrace {
    struct Entry {
        int k = 0;
        double a1 = std::numeric_limits<double>::quiet_NaN();  // no result at k = 0
        double spread = 0.0;  // indirect uncertainty after the (renormalized) step
        double leak = 0.0;
    };
    std::vector<Entry> entries;
    CoupledState final_state;
};

inline CoupledTrace coupled_sequence(const CoupledSystem& system, const CoupledSequenceConfig& cfg) {
    cfg.validate();
    const auto& cc = system.config();

    CoupledState state = system.ground_state();
    CoupledTrace trace;
    trace.entries.push_back({0, std::numeric_limits<double>::quiet_NaN(),
                             indirect_uncertainty(state), 0.0});

    // candidate grid for the x1 results, frozen at run start
    const Eigen::MatrixXd x1 = position_matrix(cc.m1, cc.omega1, cc.hbar, cc.n1);
    const Eigen::MatrixXd x1sq = position_sq_matrix(cc.m1, cc.omega1, cc.hbar, cc.n1);
    Eigen::Map<const Eigen::MatrixXcd> c0(state.amplitudes.data(), cc.n2, cc.n1);
    double mean1 = 0.0, second1 = 0.0;
    for (int i2 = 0; i2 < cc.n2; ++i2) {
        const Eigen::RowVectorXcd row = c0.row(i2);
        mean1 += std::real((row.conjugate() * x1 * row.transpose())(0, 0));
        second1 += std::real((row.conjugate() * x1sq * row.transpose())(0, 0));
    }
    const double spread1 = std::sqrt(std::max(0.0, second1 - mean1 * mean1));
    const double half = 6.0 * std::max(cc.delta_a1, spread1);
    Eigen::VectorXd candidates(cfg.result_points);
    for (int i = 0; i < cfg.result_points; ++i)
        candidates[i] = mean1 - half + 2.0 * half * i / (cfg.result_points - 1);

    std::vector<Eigen::MatrixXd> meters;
    meters.reserve(cfg.result_points);
    for (int i = 0; i < cfg.result_points; ++i)
        meters.push_back(system.meter_matrix(candidates[i], cc.delta_a1));

    std::optional<rng_engine> rng;
    if (const auto* sampled = std::get_if<PolicySampled>(&cfg.policy))
        rng = make_engine(sampled->seed);

    const double p_exp = (cfg.mode == DensityMode::Linear) ? 1.0 : 2.0;
    for (int k = 1; k <= cfg.n_measurements; ++k) {
        if (k > 1) state = system.evolve(state, cfg.delta_t);

        Eigen::Map<const Eigen::MatrixXcd> c(state.amplitudes.data(), cc.n2, cc.n1);
        Eigen::VectorXd weights(cfg.result_points);
        for (int i = 0; i < cfg.result_points; ++i) {
            const double s = (c * meters[i].transpose()).squaredNorm();
            weights[i] = (p_exp == 1.0) ? s : s * s;
        }
        if (!(weights.sum() > 0.0))
            throw degenerate_density("coupled_sequence: all candidate results annihilate");

        int sel;
        if (std::holds_alternative<PolicyMostProbable>(cfg.policy)) {
            sel = 0;
            for (int i = 1; i < cfg.result_points; ++i)
                if (weights[i] > weights[sel] ||
                    (weights[i] == weights[sel] &&
                     std::abs(candidates[i]) < std::abs(candidates[sel])))
                    sel = i;
        } else if (rng) {
            const double u = uniform01(*rng) * weights.sum();
            double cum = 0.0;
            sel = cfg.result_points - 1;
            for (int i = 0; i < cfg.result_points; ++i) {
                cum += weights[i];
                if (u < cum) {
                    sel = i;
                    break;
                }
            }
        } else {
            const auto& fixed = std::get<PolicyFixed>(cfg.policy);
            if (static_cast<int>(fixed.results.size()) < k)
                throw invalid_input("coupled_sequence: fixed policy ran out of results");
            const double target = fixed.results[k - 1];
            sel = 0;
            for (int i = 1; i < cfg.result_points; ++i)
                if (std::abs(candidates[i] - target) < std::abs(candidates[sel] - target)) sel = i;
        }

        auto [reduced, leak] = system.measure_x1(state, candidates[sel], cc.delta_a1);
        if (!(reduced.norm() > 0.0))
            throw annihilated_state("coupled_sequence: reduction annihilated the state at step " +
                                    std::to_string(k));
        reduced.renormalize_in_place();
        state = std::move(reduced);
        trace.entries.push_back({k, candidates[sel], indirect_uncertainty(state), leak});
    }
    trace.final_state = std::move(state);
    return trace;
}

}  // namespace qnd
