// biot-estimate: adaptive three-field Biot solver with guaranteed a
// posteriori error bounds by equilibrated stress/flux reconstruction.

#include <CLI11.hpp>
#include <cstdlib>

#include "biot/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Adaptive Biot consolidation solver with guaranteed error bounds"};
    app.require_subcommand(1);

    std::string config_path, out_dir, sweep;

    CLI::App* solve = app.add_subcommand("solve", "one solve/equilibrate/estimate pass");
    solve->add_option("--config", config_path, "JSON configuration")->required();
    solve->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* study = app.add_subcommand("study", "refinement study writing a history CSV");
    study->add_option("--config", config_path, "JSON configuration")->required();
    study->add_option("--out", out_dir, "output directory (overrides config)");
    study->add_option("--sweep", sweep, "parameter sweep: lambda or dorfler");

    CLI::App* chk = app.add_subcommand("check", "run the invariant suite on small fixtures");
    chk->add_option("--config", config_path, "JSON configuration (optional)");
    chk->add_option("--out", out_dir, "output directory (overrides config)");

    CLI11_PARSE(app, argc, argv);

    try {
        biot::RunConfig cfg;
        if (!config_path.empty()) cfg = biot::load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (const char* env = std::getenv("BIOT_ESTIMATE_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1) cfg.n_threads = std::min(cfg.n_threads, cap);
        }
        if (solve->parsed()) return biot::cmd_solve(cfg);
        if (study->parsed()) return biot::cmd_study(cfg, sweep);
        return biot::cmd_check(cfg);
    } catch (const biot::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const biot::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
