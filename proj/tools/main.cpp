// qnd: repeated impulsive position measurements of 1-D quantum systems.
// One subcommand per experiment; see configs/ for annotated examples.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "qnd/dispatch.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir = "qnd-out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

int run(qnd::Experiment experiment, const CliOptions& opts) {
    qnd::RunSettings settings;
    settings.experiment = experiment;
    settings.out_dir = opts.out_dir;
    settings.threads = opts.threads;
    if (opts.seed_set) settings.seed_override = opts.seed;

    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) {
            std::cerr << "error: cannot read config file '" << opts.config_path << "'\n";
            return 2;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        settings.doc = qnd::ConfigDoc::parse(buf.str());
    }

    const qnd::RunManifest manifest = qnd::dispatch(settings);
    std::cout << manifest.text;
    for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "artifacts in " << opts.out_dir << ":";
    for (const auto& a : manifest.artifacts) std::cout << " " << a;
    std::cout << " manifest.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Restricted-path-integral simulations of repeated impulsive "
                 "position measurements"};
    app.require_subcommand(1);

    CliOptions opts;
    qnd::Experiment chosen = qnd::Experiment::Spectrum;

    for (qnd::Experiment e :
         {qnd::Experiment::Spectrum, qnd::Experiment::QndHarmonic, qnd::Experiment::SquidScan,
          qnd::Experiment::LeggettGarg, qnd::Experiment::Coupled, qnd::Experiment::Sequence}) {
        CLI::App* sub = app.add_subcommand(qnd::experiment_name(e), "");
        sub->add_option("--config", opts.config_path, "key = value configuration file");
        sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", opts.seed, "random seed (overrides the config)")
            ->each([&](const std::string&) { opts.seed_set = true; });
        sub->add_option("--threads", opts.threads,
                        "parallelism hint; never changes the results")
            ->check(CLI::PositiveNumber);
        sub->callback([&, e] { chosen = e; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return run(chosen, opts);
    } catch (const qnd::invalid_input& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const qnd::solver_failure& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const qnd::sequence_aborted& e) {
        std::cerr << "degenerate run: " << e.what() << " (" << e.partial.results.size()
                  << " results completed)\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "degenerate run: " << e.what() << "\n";
        return 4;
    }
}
