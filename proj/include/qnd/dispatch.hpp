#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "qnd/config.hpp"
#include "qnd/coupled.hpp"
#include "qnd/csv.hpp"
#include "qnd/experiments.hpp"
#include "qnd/sequence.hpp"
#include "qnd/spectral.hpp"
#include "qnd/version.hpp"

namespace qnd {

enum class Experiment { Spectrum, QndHarmonic, SquidScan, LeggettGarg, Coupled, Sequence };

inline const char* experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Spectrum: return "spectrum";
        case Experiment::QndHarmonic: return "qnd-harmonic";
        case Experiment::SquidScan: return "squid-scan";
        case Experiment::LeggettGarg: return "leggett-garg";
        case Experiment::Coupled: return "coupled";
        case Experiment::Sequence: return "sequence";
    }
    return "?";
}

inline Experiment experiment_from_name(const std::string& name) {
    for (Experiment e : {Experiment::Spectrum, Experiment::QndHarmonic, Experiment::SquidScan,
                         Experiment::LeggettGarg, Experiment::Coupled, Experiment::Sequence})
        if (name == experiment_name(e)) return e;
    throw invalid_input("unknown experiment '" + name + "'");
}

struct RunSettings {
    Experiment experiment = Experiment::Spectrum;
    ConfigDoc doc;
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    int threads = 1;
};

struct RunManifest {
    std::vector<std::string> artifacts;
    std::vector<std::string> warnings;
    nlohmann::json summary;
    std::string text;  // human-readable report lines
    std::filesystem::path manifest_path;
};

namespace detail {

inline DensityMode read_mode(ConfigReader& r) {
    const std::string m = r.get_string("mode", "linear");
    if (m == "linear") return DensityMode::Linear;
    if (m == "literal") return DensityMode::Literal;
    throw invalid_input("config: mode must be linear or literal, got '" + m + "'");
}

inline MeasurementKernel read_kernel(ConfigReader& r, const std::string& default_type,
                                     double default_da) {
    const std::string type = r.get_string("kernel.type", default_type);
    const double da = r.require_positive("kernel.delta_a", r.get_double("kernel.delta_a", default_da));
    if (type == "gaussian") return MeasurementKernel::gaussian(da);
    if (type == "window") return MeasurementKernel::window(da);
    throw invalid_input("config: kernel.type must be gaussian or window, got '" + type + "'");
}

inline ResultPolicy read_policy(ConfigReader& r, std::uint64_t seed, int n_steps) {
    const std::string p = r.get_string("policy", "most_probable");
    if (p == "most_probable") return PolicyMostProbable{};
    if (p == "sampled") return PolicySampled{seed};
    if (p == "fixed") {
        auto results = r.get_double_list("sequence.results");
        if (static_cast<int>(results.size()) == 1)
            results.assign(n_steps + 1, results.front());
        if (static_cast<int>(results.size()) < n_steps + 1)
            throw invalid_input("config: sequence.results must list one value or n+1 values "
                                "for the fixed policy");
        return PolicyFixed{std::move(results)};
    }
    throw invalid_input("config: policy must be most_probable, sampled or fixed, got '" + p + "'");
}

struct PotentialInput {
    PotentialSpec spec;
    std::optional<Grid1D> grid;  // grids embedded in tabulated files
};

inline PotentialInput read_potential(ConfigReader& r, const std::string& default_type) {
    const std::string type = r.get_string("potential.type", default_type);
    const double mass = r.require_positive("potential.mass", r.get_double("potential.mass", 1.0));
    if (type == "harmonic") {
        const double omega =
            r.require_positive("potential.omega", r.get_double("potential.omega", 1.0));
        return {PotentialSpec(Harmonic{mass, omega}), std::nullopt};
    }
    if (type == "double_well") {
        const double mu = r.require_positive("potential.mu", r.get_double("potential.mu", 1.0));
        const double lambda =
            r.require_positive("potential.lambda", r.get_double("potential.lambda", 1.0));
        return {PotentialSpec(DoubleWell{mu, lambda, mass}), std::nullopt};
    }
    if (type == "tabulated") {
        const std::string file = r.get_string("potential.file", "");
        if (file.empty()) throw invalid_input("config: potential.file required for tabulated");
        std::ifstream in(file);
        if (!in) throw invalid_input("config: cannot read potential.file '" + file + "'");
        std::vector<double> xs, vs;
        std::string line;
        while (std::getline(in, line)) {
            const std::string t = ConfigDoc::trim(line);
            if (t.empty() || t[0] == '#' || std::isalpha(static_cast<unsigned char>(t[0]))) continue;
            const size_t comma = t.find(',');
            if (comma == std::string::npos)
                throw invalid_input("potential file: expected 'x,V' rows");
            xs.push_back(std::stod(t.substr(0, comma)));
            vs.push_back(std::stod(t.substr(comma + 1)));
        }
        if (xs.size() < 3) throw invalid_input("potential file: need at least 3 samples");
        const double h = xs[1] - xs[0];
        for (size_t i = 1; i < xs.size(); ++i)
            if (std::abs(xs[i] - xs[i - 1] - h) > 1e-9 * std::max(1.0, std::abs(h)))
                throw invalid_input("potential file: grid must be uniform");
        const Grid1D grid(xs.front(), xs.back(), static_cast<int>(xs.size()));
        return {PotentialSpec(Tabulated{std::move(vs), mass}), grid};
    }
    throw invalid_input("config: potential.type must be harmonic, double_well or tabulated, got '" +
                        type + "'");
}

inline Grid1D read_grid(ConfigReader& r, const PotentialInput& pot, int levels, double hbar) {
    const bool has_any = r.has("grid.min") || r.has("grid.max") || r.has("grid.points");
    const double gmin = r.get_double("grid.min", -10.0);
    const double gmax = r.get_double("grid.max", 10.0);
    const long gn = r.get_long("grid.points", 2001);
    if (pot.grid) return *pot.grid;  // tabulated file wins
    if (has_any) {
        r.require_at_least("grid.points", gn, 3);
        return Grid1D(gmin, gmax, static_cast<int>(gn));
    }
    return default_grid(pot.spec, levels, hbar);
}

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

// Runs the configured experiment, writes its CSV artifacts plus a JSON
// manifest into out_dir, and returns the manifest data. Throws qnd errors;
// the CLI maps them onto exit codes.
inline RunManifest dispatch(const RunSettings& settings) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();
    fs::create_directories(settings.out_dir);

    ConfigReader r(settings.doc);
    // an explicit experiment key must agree with the subcommand
    const std::string declared = r.get_string("experiment", experiment_name(settings.experiment));
    if (declared != experiment_name(settings.experiment))
        throw invalid_input("config: experiment '" + declared + "' does not match the subcommand '" +
                            std::string(experiment_name(settings.experiment)) + "'");

    const double hbar = r.require_positive("hbar", r.get_double("hbar", 1.0));
    const std::uint64_t seed =
        settings.seed_override ? *settings.seed_override : r.get_u64("seed", 1);

    RunManifest man;
    nlohmann::json& summary = man.summary;
    summary["hbar"] = hbar;
    std::vector<std::pair<std::string, CsvTable>> outputs;
    std::ostringstream report;
    report.precision(6);

    switch (settings.experiment) {
        case Experiment::Spectrum: {
            const auto pot = detail::read_potential(r, "harmonic");
            const int levels = static_cast<int>(
                r.require_at_least("spectrum.levels", r.get_long("spectrum.levels", 10), 1));
            const Grid1D grid = detail::read_grid(r, pot, levels, hbar);
            const auto spec = solve_spectrum(grid, pot.spec, levels, hbar);
            man.warnings = spec.warnings;

            CsvTable energies{{"index", "energy"}, {}};
            for (int k = 1; k <= levels; ++k)
                energies.add_row({std::to_string(k), format_g17(spec.energy(k))});
            outputs.emplace_back("energies.csv", std::move(energies));

            CsvTable funcs;
            funcs.header.push_back("x");
            for (int k = 1; k <= levels; ++k) funcs.header.push_back("phi_" + std::to_string(k));
            for (int i = 0; i < grid.n; ++i) {
                std::vector<std::string> row{format_g17(grid.point(i))};
                for (int k = 1; k <= levels; ++k) row.push_back(format_g17(spec.states(i, k - 1)));
                funcs.add_row(std::move(row));
            }
            outputs.emplace_back("eigenfunctions.csv", std::move(funcs));

            summary["potential"] = pot.spec.describe();
            summary["levels"] = levels;
            summary["grid"] = {{"min", grid.x_min}, {"max", grid.x_max}, {"points", grid.n}};
            summary["e1"] = spec.energy(1);
            summary["e_max"] = spec.energy(levels);
            report << "spectrum: " << levels << " levels of " << pot.spec.describe() << "\n"
                   << "  E1 = " << spec.energy(1) << ", E" << levels << " = " << spec.energy(levels)
                   << "\n";
            break;
        }

        case Experiment::QndHarmonic: {
            HarmonicScanConfig cfg;
            cfg.mass = r.require_positive("potential.mass", r.get_double("potential.mass", 1.0));
            cfg.omega = r.require_positive("potential.omega", r.get_double("potential.omega", 1.0));
            cfg.hbar = hbar;
            const double sigma_ground = std::sqrt(hbar / (2.0 * cfg.mass * cfg.omega));
            cfg.kernel = detail::read_kernel(r, "gaussian", sigma_ground);
            cfg.n_steps =
                static_cast<int>(r.require_at_least("sequence.n", r.get_long("sequence.n", 8), 0));
            cfg.scan_points = static_cast<int>(
                r.require_at_least("scan.points", r.get_long("scan.points", 64), 2));
            const double dt_max = r.get_double("scan.dt_max", 2.0 * M_PI / cfg.omega);
            r.require_positive("scan.dt_max", dt_max);
            cfg.dt_grid.resize(cfg.scan_points);
            for (int k = 0; k < cfg.scan_points; ++k)
                cfg.dt_grid[k] = (k + 1) * dt_max / cfg.scan_points;
            cfg.basis_size = static_cast<int>(
                r.require_at_least("basis.size", r.get_long("basis.size", 32), 2));
            cfg.mode = detail::read_mode(r);
            cfg.policy = detail::read_policy(r, seed, cfg.n_steps);
            cfg.threads = settings.threads;

            const auto res = qnd_harmonic_scan(cfg);
            man.warnings = res.spectrum.warnings;

            CsvTable curve{{"dT", "da_eff", "a_tilde", "leak"}, {}};
            for (size_t i = 0; i < res.dt_grid.size(); ++i) {
                const auto& p = res.curve.points[i];
                curve.add_row({format_g17(res.dt_grid[i]), format_g17(p.delta_a_eff),
                               format_g17(p.a_tilde), format_g17(p.leak)});
            }
            outputs.emplace_back("curve.csv", std::move(curve));

            int imin = 0;
            for (size_t i = 1; i < res.curve.points.size(); ++i)
                if (res.curve.points[i].delta_a_eff < res.curve.points[imin].delta_a_eff)
                    imin = static_cast<int>(i);
            summary["mode"] = to_string(cfg.mode);
            summary["basis_size"] = cfg.basis_size;
            summary["n_measurements"] = cfg.n_steps + 1;
            summary["kernel"] = cfg.kernel.describe();
            summary["half_period"] = M_PI / cfg.omega;
            summary["min_dt"] = res.dt_grid[imin];
            summary["min_da_eff"] = res.curve.points[imin].delta_a_eff;
            report << "qnd-harmonic: minimum da_eff = " << res.curve.points[imin].delta_a_eff
                   << " at dT = " << res.dt_grid[imin] << " (half period = " << M_PI / cfg.omega
                   << ")\n";
            break;
        }

        case Experiment::SquidScan: {
            SquidScanConfig cfg;
            cfg.mass = r.require_positive("potential.mass", r.get_double("potential.mass", 1.0));
            cfg.mu = r.require_positive("potential.mu", r.get_double("potential.mu", 1.0));
            cfg.lambda =
                r.require_positive("potential.lambda", r.get_double("potential.lambda", 1.0));
            cfg.hbar = hbar;
            cfg.kernel = detail::read_kernel(r, "gaussian", 0.65);
            cfg.n_steps =
                static_cast<int>(r.require_at_least("sequence.n", r.get_long("sequence.n", 4), 0));
            cfg.scan_points = static_cast<int>(
                r.require_at_least("scan.points", r.get_long("scan.points", 96), 2));
            cfg.dt_max_t12 = r.get_double("scan.dt_max_t12", 2.5);
            r.require_positive("scan.dt_max_t12", cfg.dt_max_t12);
            cfg.basis_size = static_cast<int>(
                r.require_at_least("basis.size", r.get_long("basis.size", 16), 2));
            cfg.mode = detail::read_mode(r);
            cfg.interrogate_well = r.get_bool("squid.interrogate_well", false);
            if (!cfg.interrogate_well) cfg.policy = detail::read_policy(r, seed, cfg.n_steps);
            cfg.threads = settings.threads;

            const auto res = squid_scan(cfg);
            man.warnings = res.spectrum.warnings;

            CsvTable curve{{"dT", "da_eff", "a_tilde", "leak"}, {}};
            for (size_t i = 0; i < res.dt_grid.size(); ++i) {
                const auto& p = res.curve.points[i];
                curve.add_row({format_g17(res.dt_grid[i]), format_g17(p.delta_a_eff),
                               format_g17(p.a_tilde), format_g17(p.leak)});
            }
            outputs.emplace_back("curve.csv", std::move(curve));

            const auto mins = local_minima_by_depth(res.curve);
            summary["mode"] = to_string(cfg.mode);
            summary["basis_size"] = cfg.basis_size;
            summary["kernel"] = cfg.kernel.describe();
            summary["t12"] = res.t12;
            summary["splitting"] = res.splitting;
            summary["well_position"] = res.well_position;
            summary["interrogate_well"] = cfg.interrogate_well;
            if (!mins.empty()) summary["deepest_min_dt_over_t12"] = res.dt_grid[mins[0]] / res.t12;
            report << "squid-scan: T12 = " << res.t12 << " (splitting " << res.splitting << ")\n";
            if (mins.size() >= 2)
                report << "  two deepest minima at dT/T12 = " << res.dt_grid[mins[0]] / res.t12
                       << ", " << res.dt_grid[mins[1]] / res.t12 << "\n";
            break;
        }

        case Experiment::LeggettGarg: {
            LeggettGargConfig cfg;
            const double mass =
                r.require_positive("potential.mass", r.get_double("potential.mass", 1.0));
            const double mu = r.require_positive("potential.mu", r.get_double("potential.mu", 1.0));
            const double lambda =
                r.require_positive("potential.lambda", r.get_double("potential.lambda", 1.0));
            cfg.potential = DoubleWell{mu, lambda, mass};
            cfg.hbar = hbar;
            cfg.basis_size = static_cast<int>(
                r.require_at_least("basis.size", r.get_long("basis.size", 2), 2));
            cfg.kernel = detail::read_kernel(r, "window", cfg.potential.well_separation());
            cfg.trials = r.require_at_least("lg.trials", r.get_long("lg.trials", 20000), 1);
            cfg.mode = detail::read_mode(r);
            cfg.seed = seed;
            cfg.result_points = static_cast<int>(
                r.require_at_least("result.points", r.get_long("result.points", 801), 2));
            if (r.get_bool("lg.two_point", true)) {
                Eigen::VectorXd cand(2);
                cand << -cfg.potential.well_separation(), cfg.potential.well_separation();
                cfg.candidates = cand;
            }

            const PotentialSpec pot(cfg.potential);
            const Grid1D grid = default_grid(pot, std::max(cfg.basis_size, 4), hbar);
            const auto spec = solve_spectrum(grid, pot, std::max(cfg.basis_size, 4), hbar);
            const double t12 = reformation_time(spec, 1, 2);
            cfg.tau12 = r.require_positive("lg.tau12_t12", r.get_double("lg.tau12_t12", 0.5)) * t12;
            cfg.tau23 = r.require_positive("lg.tau23_t12", r.get_double("lg.tau23_t12", 0.5)) * t12;

            const auto res = leggett_garg_run(cfg, spec);
            man.warnings = spec.warnings;

            CsvTable trials{{"pair", "trial", "q_first", "q_second"}, {}};
            for (const auto& row : res.rows)
                trials.add_row({std::to_string(row.pair), std::to_string(row.trial),
                                std::to_string(row.q_first), std::to_string(row.q_second)});
            outputs.emplace_back("lg_trials.csv", std::move(trials));

            summary["t12"] = t12;
            summary["tau12"] = cfg.tau12;
            summary["tau23"] = cfg.tau23;
            summary["trials_per_pair"] = res.trials_per_pair;
            summary["kernel"] = cfg.kernel.describe();
            summary["mode"] = to_string(cfg.mode);
            summary["basis_size"] = cfg.basis_size;
            summary["c12"] = res.c12;
            summary["c23"] = res.c23;
            summary["c13"] = res.c13;
            summary["se12"] = res.se12;
            summary["se23"] = res.se23;
            summary["se13"] = res.se13;
            summary["k_statistic"] = res.k_statistic;
            summary["se_k"] = res.se_k;
            summary["violation"] = res.violation;
            summary["zero_sign_count"] = res.zero_sign_count;
            report << "leggett-garg: C12 = " << res.c12 << " +- " << res.se12 << ", C23 = "
                   << res.c23 << " +- " << res.se23 << ", C13 = " << res.c13 << " +- " << res.se13
                   << "\n  K = " << res.k_statistic << " +- " << res.se_k
                   << (res.violation ? "  (violates K <= 1)" : "  (no violation)") << "\n";
            break;
        }

        case Experiment::Coupled: {
            CoupledSequenceConfig cfg;
            cfg.system.m1 = r.require_positive("coupled.m1", r.get_double("coupled.m1", 1.0));
            cfg.system.m2 = r.require_positive("coupled.m2", r.get_double("coupled.m2", 1.0));
            cfg.system.omega1 =
                r.require_positive("coupled.omega1", r.get_double("coupled.omega1", 1.0));
            cfg.system.omega2 =
                r.require_positive("coupled.omega2", r.get_double("coupled.omega2", 1.3));
            cfg.system.gamma = r.get_double("coupled.gamma", 0.3);
            cfg.system.delta_a1 =
                r.require_positive("coupled.delta_a1", r.get_double("coupled.delta_a1", 1.0));
            cfg.system.hbar = hbar;
            cfg.system.n1 = static_cast<int>(
                r.require_at_least("coupled.n1", r.get_long("coupled.n1", 24), 2));
            cfg.system.n2 = static_cast<int>(
                r.require_at_least("coupled.n2", r.get_long("coupled.n2", 24), 2));
            cfg.n_measurements =
                static_cast<int>(r.require_at_least("sequence.n", r.get_long("sequence.n", 10), 0));
            cfg.delta_t =
                r.get_double("sequence.dt", M_PI / cfg.system.omega1);
            r.require_positive("sequence.dt", cfg.delta_t);
            cfg.mode = detail::read_mode(r);
            cfg.policy = detail::read_policy(r, seed, cfg.n_measurements);
            cfg.result_points = static_cast<int>(
                r.require_at_least("result.points", r.get_long("result.points", 801), 3));
            const double x2_meter = r.get_double("coupled.x2_meter_delta_a", 0.0);
            cfg.system.validate();

            const CoupledSystem system(cfg.system);
            const auto trace = coupled_sequence(system, cfg);

            CsvTable tr;
            tr.header = {"k", "a1_k", "indirect_spread_k", "leak_k"};
            const bool exploratory = x2_meter > 0.0;
            if (exploratory) tr.header.push_back("x2_outcome_spread_k");
            for (const auto& e : trace.entries) {
                std::vector<std::string> row{std::to_string(e.k), format_g17(e.a1),
                                             format_g17(e.spread), format_g17(e.leak)};
                if (exploratory)
                    row.push_back(format_g17(std::sqrt(x2_meter * x2_meter + e.spread * e.spread)));
                tr.add_row(std::move(row));
            }
            outputs.emplace_back("trace.csv", std::move(tr));

            const auto [wm, wp] = normal_mode_frequencies(cfg.system);
            summary["normal_mode_minus"] = wm;
            summary["normal_mode_plus"] = wp;
            summary["gamma"] = cfg.system.gamma;
            summary["delta_a1"] = cfg.system.delta_a1;
            summary["n1"] = cfg.system.n1;
            summary["n2"] = cfg.system.n2;
            summary["mode"] = to_string(cfg.mode);
            summary["initial_spread"] = trace.entries.front().spread;
            summary["final_spread"] = trace.entries.back().spread;
            if (exploratory) summary["x2_meter_delta_a"] = x2_meter;
            double max_leak = 0.0;
            for (const auto& e : trace.entries) max_leak = std::max(max_leak, e.leak);
            summary["max_leak"] = max_leak;
            if (max_leak > 1e-3)
                man.warnings.push_back("coupled: reduction leak " + std::to_string(max_leak) +
                                       " above 1e-3; raise coupled.n1/n2");
            report << "coupled: indirect spread " << trace.entries.front().spread << " -> "
                   << trace.entries.back().spread << " over " << cfg.n_measurements
                   << " x1 measurements (normal modes " << wm << ", " << wp << ")\n";
            break;
        }

        case Experiment::Sequence: {
            const auto pot = detail::read_potential(r, "harmonic");
            const int basis = static_cast<int>(
                r.require_at_least("basis.size", r.get_long("basis.size", 32), 2));
            const Grid1D grid = detail::read_grid(r, pot, basis, hbar);
            const auto spec = solve_spectrum(grid, pot.spec, basis, hbar);

            SequenceConfig cfg;
            cfg.n_steps =
                static_cast<int>(r.require_at_least("sequence.n", r.get_long("sequence.n", 8), 0));
            cfg.delta_t = r.get_double("sequence.dt", 1.0);
            r.require_positive("sequence.dt", cfg.delta_t);
            const double sigma_default = std::sqrt(hbar / (2.0 * pot.spec.mass()));
            cfg.kernel = detail::read_kernel(r, "gaussian", sigma_default);
            cfg.mode = detail::read_mode(r);
            cfg.policy = detail::read_policy(r, seed, cfg.n_steps);
            cfg.result_points = static_cast<int>(
                r.require_at_least("result.points", r.get_long("result.points", 801), 3));

            StateCoefficients initial = StateCoefficients::eigenstate(1, basis);
            double prep_leak = 0.0;
            const std::string init_type = r.get_string("initial.type", "ground");
            if (init_type == "ground") {
            } else if (init_type == "level") {
                const long level = r.require_at_least("initial.level",
                                                      r.get_long("initial.level", 1), 1);
                initial = StateCoefficients::eigenstate(static_cast<int>(level), basis);
            } else if (init_type == "left_well") {
                initial = left_well_doublet(spec, basis);
            } else if (init_type == "gaussian") {
                const double center = r.get_double("initial.center", 0.0);
                const double sigma =
                    r.require_positive("initial.sigma", r.get_double("initial.sigma", 1.0));
                auto [state, leak] = gaussian_packet_state(spec, center, sigma);
                initial = std::move(state);
                prep_leak = leak;
            } else {
                throw invalid_input("config: initial.type must be ground, level, left_well or "
                                    "gaussian, got '" + init_type + "'");
            }

            const auto res = run_sequence(spec, initial, cfg);
            man.warnings = spec.warnings;

            CsvTable rec{{"k", "t_k", "a_k", "da_eff_k"}, {}};
            for (size_t k = 0; k < res.record.results.size(); ++k)
                rec.add_row({std::to_string(k), format_g17(k * cfg.delta_t),
                             format_g17(res.record.results[k]), format_g17(res.delta_a_eff[k])});
            outputs.emplace_back("record.csv", std::move(rec));

            summary["potential"] = pot.spec.describe();
            summary["mode"] = to_string(cfg.mode);
            summary["basis_size"] = basis;
            summary["grid"] = {{"min", grid.x_min}, {"max", grid.x_max}, {"points", grid.n}};
            summary["kernel"] = cfg.kernel.describe();
            summary["policy"] = policy_name(cfg.policy);
            summary["delta_t"] = cfg.delta_t;
            summary["n_measurements"] = cfg.n_steps + 1;
            summary["likelihood"] = res.likelihood;
            summary["max_leak"] = std::max(res.max_leak, prep_leak);
            summary["peak_ambiguous"] = res.peak_ambiguous;
            if (prep_leak > 1e-8)
                man.warnings.push_back("initial-state projection leaked " +
                                       std::to_string(prep_leak) + " of the packet");
            report << "sequence: " << res.record.results.size() << " measurements, final da_eff = "
                   << res.delta_a_eff.back() << ", max leak = " << summary["max_leak"].get<double>()
                   << "\n";
            break;
        }
    }

    r.finish();

    // artifacts first, manifest last; the manifest only lists files that exist
    for (auto& [name, table] : outputs) {
        write_csv(settings.out_dir / name, table);
        man.artifacts.push_back(name);
    }

    const auto t_end = std::chrono::steady_clock::now();
    const double seconds = std::chrono::duration<double>(t_end - t_start).count();

    nlohmann::json manifest;
    manifest["experiment"] = experiment_name(settings.experiment);
    manifest["library_version"] = kVersion;
    manifest["seed"] = seed;
    manifest["threads"] = settings.threads;
    manifest["config_hash"] = detail::hex64(fnv1a_hash(settings.doc.raw_text +
                                                       "\nseed=" + std::to_string(seed)));
    manifest["config_echo"] = settings.doc.values;
    manifest["artifacts"] = man.artifacts;
    manifest["timing_seconds"] = seconds;
    manifest["warnings"] = man.warnings;
    manifest["summary"] = summary;
    man.manifest_path = settings.out_dir / "manifest.json";
    write_text_atomic(man.manifest_path, manifest.dump(2) + "\n");

    man.text = report.str();
    return man;
}

}  // namespace qnd
