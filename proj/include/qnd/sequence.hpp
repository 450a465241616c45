#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/measurement.hpp"
#include "qnd/rng.hpp"
#include "qnd/spectral.hpp"
#include "qnd/state.hpp"

namespace qnd {

// ============================================================================
// Quiescent-time evolution
// ============================================================================

// Diagonal of e^{-i H dt / hbar} on the truncated eigenbasis.
inline Eigen::VectorXcd free_propagator(const Spectrum& spectrum, double delta_t) {
    if (delta_t < 0.0) throw invalid_input("free_propagator: negative quiescent time");
    Eigen::VectorXcd u(spectrum.levels());
    for (int m = 0; m < spectrum.levels(); ++m)
        u[m] = std::exp(std::complex<double>(0.0, -spectrum.energies[m] * delta_t / spectrum.hbar));
    return u;
}

// One evolve-then-reduce factor of the record composition:
// c' = W(a) U(delta_t) c, unnormalized. The opening measurement of a run is
// this step with delta_t = 0 (the reduction precedes any evolution).
inline StateCoefficients step(const StateCoefficients& c, double a, const Spectrum& spectrum,
                              const MeasurementKernel& kernel, double delta_t) {
    if (!c.c.allFinite()) throw invalid_input("step: non-finite state");
    const Eigen::VectorXcd evolved = free_propagator(spectrum, delta_t).cwiseProduct(c.c);
    Eigen::VectorXcd reduced = kernel_matrix(spectrum, kernel, a).apply(evolved);
    StateCoefficients out(std::move(reduced));
    if (out.norm() == 0.0) throw annihilated_state("step: kernel annihilated the state");
    return out;
}

// ============================================================================
// Outcome densities
// ============================================================================

enum class DensityMode { Linear, Literal };

inline const char* to_string(DensityMode m) {
    return m == DensityMode::Linear ? "linear" : "literal";
}

// Unnormalized density of the next result over a candidate grid.
// Linear mode weights ||W(a) c||^2; literal mode squares that, following the
// printed form of the conditional probability.
struct OutcomeDensity {
    Eigen::VectorXd a_grid;
    Eigen::VectorXd weights;
    DensityMode mode = DensityMode::Linear;

    int size() const { return static_cast<int>(a_grid.size()); }
    double step() const { return a_grid[1] - a_grid[0]; }

    void validate() const {
        if (size() < 3) throw invalid_input("OutcomeDensity: need at least 3 grid points");
        if (weights.minCoeff() < 0.0) throw invalid_input("OutcomeDensity: negative weight");
        if (!(weights.sum() > 0.0))
            throw degenerate_density("OutcomeDensity: all candidate weights vanish");
    }
};

inline OutcomeDensity conditional_density(const StateCoefficients& c, const KernelSet& kernels,
                                          DensityMode mode) {
    if (!c.c.allFinite() || c.norm() == 0.0)
        throw invalid_input("conditional_density: state must be finite and nonzero");
    OutcomeDensity d;
    d.a_grid = kernels.a_grid;
    d.mode = mode;
    d.weights.resize(kernels.size());
    for (int i = 0; i < kernels.size(); ++i) {
        const double s = (kernels.mats[i] * c.c).squaredNorm();
        d.weights[i] = (mode == DensityMode::Linear) ? s : s * s;
    }
    if (!(d.weights.sum() > 0.0))
        throw degenerate_density("conditional_density: kernel family annihilates the state "
                                 "on the whole result grid");
    return d;
}

// Grid argmax; exact ties resolve to the smallest |a|, then the smaller a.
inline int most_probable_index(const OutcomeDensity& d) {
    const double peak = d.weights.maxCoeff();
    int best = -1;
    for (int i = 0; i < d.size(); ++i) {
        if (d.weights[i] != peak) continue;
        if (best < 0 ||
            std::abs(d.a_grid[i]) < std::abs(d.a_grid[best]) ||
            (std::abs(d.a_grid[i]) == std::abs(d.a_grid[best]) && d.a_grid[i] < d.a_grid[best]))
            best = i;
    }
    return best;
}

inline double most_probable(const OutcomeDensity& d) { return d.a_grid[most_probable_index(d)]; }

// Delta_a_eff^2 = 2 * sum (a - a_tilde)^2 P / sum P with trapezoid weights.
inline double effective_uncertainty(const OutcomeDensity& d, double a_tilde) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < d.size(); ++i) {
        const double tw = (i == 0 || i == d.size() - 1) ? 0.5 : 1.0;
        const double u = d.a_grid[i] - a_tilde;
        num += u * u * d.weights[i] * tw;
        den += d.weights[i] * tw;
    }
    return std::sqrt(2.0 * num / den);
}

// Inverse-CDF draw over the grid point masses; reproducible given the engine.
inline int sample_result_index(const OutcomeDensity& d, rng_engine& rng) {
    const double total = d.weights.sum();
    if (!(total > 0.0)) throw degenerate_density("sample_result: zero total weight");
    const double u = uniform01(rng) * total;
    double cum = 0.0;
    for (int i = 0; i < d.size(); ++i) {
        cum += d.weights[i];
        if (u < cum) return i;
    }
    return d.size() - 1;
}

inline double sample_result(const OutcomeDensity& d, rng_engine& rng) {
    return d.a_grid[sample_result_index(d, rng)];
}

// ============================================================================
// Records and run configuration
// ============================================================================

struct MeasurementRecord {
    std::vector<double> results;  // a_0 ... a_N
    double delta_t = 0.0;
    MeasurementKernel kernel;

    void validate() const {
        if (!(delta_t > 0.0)) throw invalid_input("MeasurementRecord: delta_t must be positive");
        if (results.empty()) throw invalid_input("MeasurementRecord: no results");
    }
};

struct PolicyMostProbable {};
struct PolicySampled {
    std::uint64_t seed = 1;
};
struct PolicyFixed {
    std::vector<double> results;
};
using ResultPolicy = std::variant<PolicyMostProbable, PolicySampled, PolicyFixed>;

inline std::string policy_name(const ResultPolicy& p) {
    if (std::holds_alternative<PolicyMostProbable>(p)) return "most_probable";
    if (std::holds_alternative<PolicySampled>(p)) return "sampled";
    return "fixed";
}

struct SequenceConfig {
    MeasurementKernel kernel;
    double delta_t = 1.0;
    int n_steps = 1;  // quiescent periods; the run performs n_steps + 1 measurements
    DensityMode mode = DensityMode::Linear;
    ResultPolicy policy = PolicyMostProbable{};
    // Candidate-result grid; empty => centered on the initial <x> with
    // half-width 6 max(delta_a, state spread), result_points samples.
    Eigen::VectorXd a_grid;
    int result_points = 801;

    void validate() const {
        if (!(delta_t > 0.0)) throw invalid_input("SequenceConfig: delta_t must be positive");
        if (n_steps < 0) throw invalid_input("SequenceConfig: n_steps must be >= 0");
        if (result_points < 3) throw invalid_input("SequenceConfig: need >= 3 result points");
        if (const auto* fixed = std::get_if<PolicyFixed>(&policy)) {
            if (static_cast<int>(fixed->results.size()) < n_steps + 1)
                throw invalid_input("SequenceConfig: fixed policy needs n_steps+1 results");
        }
    }
};

struct SequenceResult {
    MeasurementRecord record;
    std::vector<double> delta_a_eff;     // one entry per measurement, before selection
    std::vector<double> a_tilde;         // most probable result per measurement
    std::vector<double> norm_ratios;     // ||W c||^2 / ||c||^2 per measurement
    StateCoefficients final_state;       // unnormalized
    double likelihood = 1.0;             // squared-norm product of the record
    double max_leak = 0.0;               // worst truncation leak of a reduction
    bool peak_ambiguous = false;         // two density peaks within 1% somewhere
};

// Raised when a run dies mid-record; carries what was measured so far.
struct sequence_aborted : std::runtime_error {
    MeasurementRecord partial;
    std::string cause;  // "annihilated_state" or "degenerate_density"
    sequence_aborted(const std::string& what, MeasurementRecord rec, std::string c)
        : std::runtime_error(what), partial(std::move(rec)), cause(std::move(c)) {}
};

// ============================================================================
// State helpers
// ============================================================================

inline double state_mean_position(const Spectrum& spectrum, const StateCoefficients& c) {
    const Eigen::VectorXcd psi = spectrum.to_grid(c.c);
    const Eigen::VectorXd dens = psi.cwiseAbs2().real();
    const Eigen::VectorXd w = spectrum.grid.quadrature_weights();
    const double mass = w.dot(dens);
    double mean = 0.0;
    for (int i = 0; i < spectrum.grid.n; ++i) mean += w[i] * dens[i] * spectrum.grid.point(i);
    return mean / mass;
}

inline double state_spread(const Spectrum& spectrum, const StateCoefficients& c) {
    const Eigen::VectorXcd psi = spectrum.to_grid(c.c);
    const Eigen::VectorXd dens = psi.cwiseAbs2().real();
    const Eigen::VectorXd w = spectrum.grid.quadrature_weights();
    const double mass = w.dot(dens);
    double mean = 0.0, second = 0.0;
    for (int i = 0; i < spectrum.grid.n; ++i) {
        const double x = spectrum.grid.point(i);
        mean += w[i] * dens[i] * x;
        second += w[i] * dens[i] * x * x;
    }
    mean /= mass;
    second /= mass;
    return std::sqrt(std::max(0.0, second - mean * mean));
}

inline Eigen::VectorXd default_result_grid(const Spectrum& spectrum, const StateCoefficients& c,
                                           const MeasurementKernel& kernel, int points = 801) {
    const double center = state_mean_position(spectrum, c);
    const double half = 6.0 * std::max(kernel.delta_a, state_spread(spectrum, c));
    Eigen::VectorXd grid(points);
    for (int i = 0; i < points; ++i)
        grid[i] = center - half + 2.0 * half * i / (points - 1);
    return grid;
}

// (phi_1 - phi_2)/sqrt(2) with the sign fixed so the density peaks in the
// negative well.
inline StateCoefficients left_well_doublet(const Spectrum& spectrum, int basis_size = 0) {
    if (spectrum.levels() < 2) throw invalid_input("left_well_doublet: need two levels");
    if (basis_size <= 0) basis_size = spectrum.levels();
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(basis_size);
    c[0] = 1.0 / std::sqrt(2.0);
    c[1] = -1.0 / std::sqrt(2.0);
    const Eigen::VectorXd dens = spectrum.to_grid(c).cwiseAbs2().real();
    int peak = 0;
    for (int i = 1; i < dens.size(); ++i)
        if (dens[i] > dens[peak]) peak = i;
    if (spectrum.grid.point(peak) > 0.0) c[1] = -c[1];
    return StateCoefficients(std::move(c), true);
}

// Project a normalized gaussian packet onto the basis; also report the
// probability lost to truncation.
inline std::pair<StateCoefficients, double> gaussian_packet_state(const Spectrum& spectrum,
                                                                  double center, double sigma) {
    if (!(sigma > 0.0)) throw invalid_input("gaussian_packet_state: sigma must be positive");
    Eigen::VectorXcd psi(spectrum.grid.n);
    for (int i = 0; i < spectrum.grid.n; ++i) {
        const double u = (spectrum.grid.point(i) - center) / sigma;
        psi[i] = std::exp(-0.25 * u * u);
    }
    const Eigen::VectorXd w = spectrum.grid.quadrature_weights();
    psi /= std::sqrt(w.dot(psi.cwiseAbs2().real()));
    Eigen::VectorXcd c = spectrum.project(psi);
    const double leak = std::max(0.0, 1.0 - c.squaredNorm());
    return {StateCoefficients(std::move(c)), leak};
}

// ============================================================================
// Sequence runner
// ============================================================================

inline SequenceResult run_sequence(const Spectrum& spectrum, const StateCoefficients& initial,
                                   const SequenceConfig& config, const KernelSet& kernels);

inline SequenceResult run_sequence(const Spectrum& spectrum, const StateCoefficients& initial,
                                   const SequenceConfig& config) {
    config.validate();
    if (initial.size() != spectrum.levels())
        throw invalid_input("run_sequence: state size differs from the spectrum basis");

    const Eigen::VectorXd a_grid = config.a_grid.size() > 0
                                       ? config.a_grid
                                       : default_result_grid(spectrum, initial, config.kernel,
                                                             config.result_points);
    const KernelSet kernels(spectrum, config.kernel, a_grid);
    return run_sequence(spectrum, initial, config, kernels);
}

// Overload reusing a prebuilt kernel set (scans share it across points).
inline SequenceResult run_sequence(const Spectrum& spectrum, const StateCoefficients& initial,
                                   const SequenceConfig& config, const KernelSet& kernels) {
    config.validate();
    SequenceResult out;
    out.record.delta_t = config.delta_t;
    out.record.kernel = config.kernel;
    out.final_state = initial;

    const Eigen::VectorXcd phases = free_propagator(spectrum, config.delta_t);
    const Eigen::VectorXd w = spectrum.grid.quadrature_weights();
    const Eigen::VectorXd x = spectrum.grid.points();

    std::optional<rng_engine> rng;
    if (const auto* sampled = std::get_if<PolicySampled>(&config.policy))
        rng = make_engine(sampled->seed);

    Eigen::VectorXcd c = initial.c;
    for (int k = 0; k <= config.n_steps; ++k) {
        if (k > 0) c = phases.cwiseProduct(c);

        OutcomeDensity density;
        try {
            density = conditional_density(StateCoefficients(c), kernels, config.mode);
        } catch (const degenerate_density& e) {
            throw sequence_aborted(e.what(), out.record, "degenerate_density");
        }

        const int mp = most_probable_index(density);
        out.a_tilde.push_back(density.a_grid[mp]);
        out.delta_a_eff.push_back(effective_uncertainty(density, density.a_grid[mp]));

        // flag near-ties of separated peaks (multimodal densities)
        const double peak = density.weights[mp];
        for (int i = 0; i < density.size(); ++i) {
            if (std::abs(i - mp) > 2 && density.weights[i] > 0.99 * peak) {
                out.peak_ambiguous = true;
                break;
            }
        }

        int sel;
        if (std::holds_alternative<PolicyMostProbable>(config.policy)) {
            sel = mp;
        } else if (rng) {
            sel = sample_result_index(density, *rng);
        } else {
            const auto& fixed = std::get<PolicyFixed>(config.policy);
            const double target = fixed.results[k];
            sel = 0;
            for (int i = 1; i < density.size(); ++i)
                if (std::abs(density.a_grid[i] - target) < std::abs(density.a_grid[sel] - target))
                    sel = i;
        }

        // truncation leak of this reduction, measured on the grid
        const Eigen::VectorXcd psi = spectrum.to_grid(c);
        const Eigen::VectorXcd psi_red = config.kernel.sample(x, density.a_grid[sel])
                                             .asDiagonal() * psi;
        const double grid_norm2 = w.dot(psi_red.cwiseAbs2().real());

        const double pre_norm2 = c.squaredNorm();
        c = kernels.mats[sel] * c;
        const double post_norm2 = c.squaredNorm();
        if (!(post_norm2 > 0.0))
            throw sequence_aborted("run_sequence: reduction annihilated the state at step " +
                                       std::to_string(k),
                                   out.record, "annihilated_state");
        if (grid_norm2 > 0.0)
            out.max_leak = std::max(out.max_leak, std::max(0.0, 1.0 - post_norm2 / grid_norm2));

        out.record.results.push_back(density.a_grid[sel]);
        out.norm_ratios.push_back(post_norm2 / pre_norm2);
        out.likelihood *= post_norm2 / pre_norm2;
    }
    out.final_state = StateCoefficients(std::move(c));
    return out;
}

// ============================================================================
// Uncertainty curves
// ============================================================================

struct UncertaintyCurve {
    struct Point {
        double delta_t = 0.0;
        double delta_a_eff = 0.0;  // of the final measurement
        double a_tilde = 0.0;
        double leak = 0.0;
        bool ok = true;
        std::string note;
    };
    std::vector<Point> points;
    DensityMode mode = DensityMode::Linear;
};

namespace detail {
inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) body(i);
        });
    for (auto& th : pool) th.join();
}
}  // namespace detail

// One run per quiescent time; the candidate grid and kernel matrices are
// shared, and sampled runs draw from seeds derived per point.
inline UncertaintyCurve uncertainty_curve(const Spectrum& spectrum,
                                          const StateCoefficients& initial,
                                          const SequenceConfig& config,
                                          const std::vector<double>& dt_grid, int threads = 1) {
    if (dt_grid.empty()) throw invalid_input("uncertainty_curve: empty delta-T grid");
    for (double dt : dt_grid)
        if (!(dt > 0.0)) throw invalid_input("uncertainty_curve: quiescent times must be positive");
    config.validate();

    const Eigen::VectorXd a_grid = config.a_grid.size() > 0
                                       ? config.a_grid
                                       : default_result_grid(spectrum, initial, config.kernel,
                                                             config.result_points);
    const KernelSet kernels(spectrum, config.kernel, a_grid);

    UncertaintyCurve curve;
    curve.mode = config.mode;
    curve.points.resize(dt_grid.size());

    const std::uint64_t master_seed =
        std::holds_alternative<PolicySampled>(config.policy)
            ? std::get<PolicySampled>(config.policy).seed
            : 0;

    detail::parallel_for(static_cast<int>(dt_grid.size()), threads, [&](int i) {
        SequenceConfig point_config = config;
        point_config.delta_t = dt_grid[i];
        point_config.a_grid = a_grid;
        if (std::holds_alternative<PolicySampled>(point_config.policy))
            point_config.policy = PolicySampled{derive_seed(master_seed, static_cast<std::uint64_t>(i))};
        auto& p = curve.points[i];
        p.delta_t = dt_grid[i];
        try {
            const SequenceResult r = run_sequence(spectrum, initial, point_config, kernels);
            p.delta_a_eff = r.delta_a_eff.back();
            p.a_tilde = r.a_tilde.back();
            p.leak = r.max_leak;
        } catch (const sequence_aborted& e) {
            p.ok = false;
            p.note = e.cause;
            p.delta_a_eff = std::numeric_limits<double>::quiet_NaN();
            p.a_tilde = std::numeric_limits<double>::quiet_NaN();
        }
    });
    return curve;
}

}  // namespace qnd
