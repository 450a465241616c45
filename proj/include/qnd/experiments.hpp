#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qnd/errors.hpp"
#include "qnd/rng.hpp"
#include "qnd/sequence.hpp"
#include "qnd/spectral.hpp"

namespace qnd {

// ============================================================================
// Canonical QND check
// ============================================================================

// Amplitude of [x(t+dT), x(t)] / i for a free oscillator: (hbar/(m w)) sin(w dT).
// Vanishes at multiples of the half period, where position is QND.
inline double commutator_amplitude(double mass, double omega, double hbar, double delta_t) {
    if (mass <= 0.0 || omega <= 0.0) throw invalid_input("commutator_amplitude: need m, omega > 0");
    return hbar / (mass * omega) * std::sin(omega * delta_t);
}

// ============================================================================
// Harmonic-oscillator scan
// ============================================================================

struct HarmonicScanConfig {
    double mass = 1.0;
    double omega = 1.0;
    double hbar = 1.0;
    MeasurementKernel kernel = MeasurementKernel::gaussian(std::sqrt(0.5));
    int n_steps = 8;
    std::vector<double> dt_grid;  // empty => scan_points over (0, 2 pi / omega]
    int scan_points = 64;
    ResultPolicy policy = PolicyMostProbable{};
    DensityMode mode = DensityMode::Linear;
    int basis_size = 32;
    Grid1D grid{-10.0, 10.0, 2001};
    bool use_default_grid = true;
    int threads = 1;
};

struct HarmonicScanResult {
    UncertaintyCurve curve;
    std::vector<double> dt_grid;
    Spectrum spectrum;
};

inline HarmonicScanResult qnd_harmonic_scan(const HarmonicScanConfig& cfg) {
    const PotentialSpec pot(Harmonic{cfg.mass, cfg.omega});
    const Grid1D grid = cfg.use_default_grid ? default_grid(pot, cfg.basis_size, cfg.hbar)
                                             : cfg.grid;
    Spectrum spec = solve_spectrum(grid, pot, cfg.basis_size, cfg.hbar);

    // the scan leans on the equally-spaced ladder; reject badly resolved grids
    const auto ladder = harmonic_levels(cfg.mass, cfg.omega, cfg.hbar, cfg.basis_size);
    for (int k = 1; k <= cfg.basis_size; ++k) {
        if (std::abs(spec.energy(k) - ladder[k - 1]) / ladder[k - 1] > 1e-3)
            throw solver_failure("qnd_harmonic_scan: discretized level " + std::to_string(k) +
                                 " strays from the analytic ladder; refine the grid");
    }

    std::vector<double> dts = cfg.dt_grid;
    if (dts.empty()) {
        dts.resize(cfg.scan_points);
        for (int k = 0; k < cfg.scan_points; ++k)
            dts[k] = (k + 1) * 2.0 * M_PI / (cfg.omega * cfg.scan_points);
    }

    SequenceConfig run;
    run.kernel = cfg.kernel;
    run.n_steps = cfg.n_steps;
    run.mode = cfg.mode;
    run.policy = cfg.policy;
    const auto initial = StateCoefficients::eigenstate(1, cfg.basis_size);
    HarmonicScanResult out{uncertainty_curve(spec, initial, run, dts, cfg.threads), dts,
                           std::move(spec)};
    return out;
}

// ============================================================================
// SQuID double-well scan
// ============================================================================

struct SquidScanConfig {
    double mu = 1.0;
    double lambda = 1.0;
    double mass = 1.0;
    double hbar = 1.0;
    MeasurementKernel kernel = MeasurementKernel::gaussian(0.65);
    int n_steps = 4;
    int scan_points = 96;
    double dt_max_t12 = 2.5;            // scan (0, dt_max_t12 * T12]
    std::vector<double> dt_grid;        // absolute override
    ResultPolicy policy = PolicyMostProbable{};
    DensityMode mode = DensityMode::Linear;
    int basis_size = 16;
    int threads = 1;
    // optional fixed interrogation at the occupied well bottom: the policy
    // becomes fixed(-sqrt(mu/lambda), ...) repeated for every measurement
    bool interrogate_well = false;
};

struct SquidScanResult {
    UncertaintyCurve curve;
    std::vector<double> dt_grid;
    double t12 = 0.0;
    double splitting = 0.0;
    double well_position = 0.0;
    Spectrum spectrum;
};

inline SquidScanResult squid_scan(const SquidScanConfig& cfg) {
    const DoubleWell dw{cfg.mu, cfg.lambda, cfg.mass};
    const PotentialSpec pot(dw);
    const Grid1D grid = default_grid(pot, cfg.basis_size, cfg.hbar);
    Spectrum spec = solve_spectrum(grid, pot, cfg.basis_size, cfg.hbar);

    SquidScanResult out;
    out.t12 = reformation_time(spec, 1, 2);
    out.splitting = spec.energy(2) - spec.energy(1);
    out.well_position = dw.well_position();

    std::vector<double> dts = cfg.dt_grid;
    if (dts.empty()) {
        dts.resize(cfg.scan_points);
        for (int k = 0; k < cfg.scan_points; ++k)
            dts[k] = (k + 1) * cfg.dt_max_t12 * out.t12 / cfg.scan_points;
    }

    SequenceConfig run;
    run.kernel = cfg.kernel;
    run.n_steps = cfg.n_steps;
    run.mode = cfg.mode;
    run.policy = cfg.policy;
    if (cfg.interrogate_well)
        run.policy = PolicyFixed{std::vector<double>(cfg.n_steps + 1, -dw.well_position())};

    const auto initial = left_well_doublet(spec, cfg.basis_size);
    out.curve = uncertainty_curve(spec, initial, run, dts, cfg.threads);
    out.dt_grid = std::move(dts);
    out.spectrum = std::move(spec);
    return out;
}

// Interior local minima of a curve, ordered by depth.
inline std::vector<int> local_minima_by_depth(const UncertaintyCurve& curve) {
    std::vector<int> mins;
    const auto& p = curve.points;
    for (int i = 1; i + 1 < static_cast<int>(p.size()); ++i) {
        if (!p[i].ok || !p[i - 1].ok || !p[i + 1].ok) continue;
        if (p[i].delta_a_eff < p[i - 1].delta_a_eff && p[i].delta_a_eff <= p[i + 1].delta_a_eff)
            mins.push_back(i);
    }
    std::sort(mins.begin(), mins.end(),
              [&](int a, int b) { return p[a].delta_a_eff < p[b].delta_a_eff; });
    return mins;
}

// ============================================================================
// Temporal (Leggett-Garg) correlations
// ============================================================================

// Three two-measurement ensembles -- (t1,t2), (t2,t3), (t1,t3) -- each started
// from the same preparation. Results dichotomize through q = sign(a) with
// q(0) = +1, counted. K = C12 + C23 - C13 against the macrorealist bound 1.
struct LeggettGargConfig {
    DoubleWell potential{1.0, 1.0, 1.0};
    double hbar = 1.0;
    double tau12 = 1.0;
    double tau23 = 1.0;
    MeasurementKernel kernel = MeasurementKernel::window(1.0);
    long trials = 10000;
    std::uint64_t seed = 1;
    DensityMode mode = DensityMode::Linear;
    int basis_size = 2;
    Eigen::VectorXd candidates;  // empty => default result grid of the prepared state
    int result_points = 801;

    void validate() const {
        if (!(tau12 > 0.0) || !(tau23 > 0.0))
            throw invalid_input("LeggettGargConfig: quiescent times must be positive");
        if (trials < 1) throw invalid_input("LeggettGargConfig: trials must be >= 1");
    }
};

struct LeggettGargResult {
    double c12 = 0.0, c23 = 0.0, c13 = 0.0;
    double se12 = 0.0, se23 = 0.0, se13 = 0.0;
    double k_statistic = 0.0;
    double se_k = 0.0;
    bool violation = false;
    long zero_sign_count = 0;
    long trials_per_pair = 0;
    // per-trial dichotomized outcomes, one row per (pair, trial)
    struct TrialRow {
        int pair;  // 12, 23, 13
        long trial;
        int q_first;
        int q_second;
    };
    std::vector<TrialRow> rows;
};

namespace detail {

struct PairEstimate {
    double mean = 0.0;
    double se = 0.0;
};

}  // namespace detail

inline LeggettGargResult leggett_garg_run(const LeggettGargConfig& cfg, const Spectrum& spectrum) {
    cfg.validate();
    const int m = cfg.basis_size;
    if (m > spectrum.levels())
        throw invalid_input("leggett_garg_run: basis size exceeds the solved spectrum");

    Spectrum truncated = spectrum;
    if (m < spectrum.levels()) {
        truncated.energies = spectrum.energies.head(m);
        truncated.states = spectrum.states.leftCols(m);
    }

    const StateCoefficients prepared = left_well_doublet(truncated, m);
    const Eigen::VectorXd candidates =
        cfg.candidates.size() > 0
            ? cfg.candidates
            : default_result_grid(truncated, prepared, cfg.kernel, cfg.result_points);
    const KernelSet kernels(truncated, cfg.kernel, candidates);

    const double p_exp = (cfg.mode == DensityMode::Linear) ? 1.0 : 2.0;
    LeggettGargResult out;
    out.trials_per_pair = cfg.trials;
    out.rows.reserve(3 * cfg.trials);

    const struct {
        int label;
        double delay1, delay2;
    } pairs[3] = {{12, 0.0, cfg.tau12},
                  {23, cfg.tau12, cfg.tau23},
                  {13, 0.0, cfg.tau12 + cfg.tau23}};

    detail::PairEstimate est[3];
    for (int pi = 0; pi < 3; ++pi) {
        const Eigen::VectorXcd u1 = free_propagator(truncated, pairs[pi].delay1);
        const Eigen::VectorXcd u2 = free_propagator(truncated, pairs[pi].delay2);
        double sum = 0.0;
        for (long t = 0; t < cfg.trials; ++t) {
            rng_engine rng = make_engine(
                derive_seed(cfg.seed, static_cast<std::uint64_t>(pi) * 0x100000000ull +
                                          static_cast<std::uint64_t>(t)));
            Eigen::VectorXcd c = u1.cwiseProduct(prepared.c);

            auto draw = [&](const Eigen::VectorXcd& state) {
                Eigen::VectorXd w(kernels.size());
                for (int i = 0; i < kernels.size(); ++i) {
                    const double s = (kernels.mats[i] * state).squaredNorm();
                    w[i] = (p_exp == 1.0) ? s : s * s;
                }
                const double total = w.sum();
                if (!(total > 0.0))
                    throw degenerate_density("leggett_garg_run: all outcomes annihilate the state");
                double u = uniform01(rng) * total, cum = 0.0;
                for (int i = 0; i < kernels.size(); ++i) {
                    cum += w[i];
                    if (u < cum) return i;
                }
                return kernels.size() - 1;
            };

            const int i1 = draw(c);
            const double a1 = candidates[i1];
            int q1 = a1 > 0.0 ? 1 : (a1 < 0.0 ? -1 : 1);
            if (a1 == 0.0) ++out.zero_sign_count;
            c = kernels.mats[i1] * c;
            c /= c.norm();

            c = u2.cwiseProduct(c);
            const int i2 = draw(c);
            const double a2 = candidates[i2];
            int q2 = a2 > 0.0 ? 1 : (a2 < 0.0 ? -1 : 1);
            if (a2 == 0.0) ++out.zero_sign_count;

            sum += q1 * q2;
            out.rows.push_back({pairs[pi].label, t, q1, q2});
        }
        est[pi].mean = sum / cfg.trials;
        est[pi].se = std::sqrt(std::max(0.0, 1.0 - est[pi].mean * est[pi].mean) /
                               static_cast<double>(cfg.trials));
    }

    out.c12 = est[0].mean;
    out.c23 = est[1].mean;
    out.c13 = est[2].mean;
    out.se12 = est[0].se;
    out.se23 = est[1].se;
    out.se13 = est[2].se;
    out.k_statistic = out.c12 + out.c23 - out.c13;
    out.se_k = std::sqrt(out.se12 * out.se12 + out.se23 * out.se23 + out.se13 * out.se13);
    out.violation = out.k_statistic > 1.0 + 2.0 * out.se_k;
    return out;
}

}  // namespace qnd
