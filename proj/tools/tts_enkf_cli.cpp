// tts_enkf: run, sweep and validate filter scenarios from JSON configs.
//
// exit status: 0 ok, 1 configuration error, 2 a run diverged (N/C)

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ttsenkf/config.hpp"

#ifndef TTS_ENKF_PRESET_DIR
#define TTS_ENKF_PRESET_DIR "presets"
#endif

namespace fs = std::filesystem;
using namespace ttsenkf;

namespace {

constexpr int kOk = 0, kConfigError = 1, kDiverged = 2;

// Bare file names fall back to the shipped preset directory.
std::string resolve_config(const std::string& path) {
    if (fs::exists(path)) return path;
    const fs::path shipped = fs::path(TTS_ENKF_PRESET_DIR) / path;
    if (fs::path(path).parent_path().empty() && fs::exists(shipped)) return shipped.string();
    throw ConfigError("config file not found: " + path);
}

ScenarioConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
    ScenarioConfig c = load_config(resolve_config(path));
    if (seed) c.seed = *seed;
    const auto violations = validate(c);
    if (!violations.empty()) {
        std::string msg = "invalid config:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw ConfigError(msg);
    }
    return c;
}

void emit(const fs::path& dir, const std::string& name, const std::string& content, bool quiet) {
    write_file_atomic((dir / name).string(), content);
    if (!quiet) std::cout << "wrote " << (dir / name).string() << "\n";
}

void print_report(const RunReport& r) {
    std::cout << r.method << " N=" << r.config.N << " eps=" << r.config.epsilon << ": ";
    if (r.diverged) {
        std::cout << "N/C at step " << r.diverged_step << " (" << r.divergence_reason << ")\n";
        return;
    }
    std::cout << "MAE%";
    for (std::size_t i = 0; i < r.state_names.size(); ++i) std::cout << " " << r.state_names[i] << "=" << r.mae_state[i];
    std::cout << "\n";
    if (!r.plant_error.empty()) std::cout << "  " << r.plant_error << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-time-scale ensemble Kalman filter scenarios"};
    app.require_subcommand(1);

    std::string config, out = ".", axis;
    std::optional<std::uint64_t> seed;
    int repetitions = 1;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "Run one scenario and write trajectory/summary CSVs");
    auto* sweep = app.add_subcommand("sweep", "Run a scenario over one axis and write a comparison table");
    auto* presets = app.add_subcommand("presets", "List shipped presets");
    auto* check = app.add_subcommand("validate", "Check a config and print every violation");

    for (auto* sub : {run, sweep, check}) sub->add_option("--config", config, "Scenario JSON")->required();
    for (auto* sub : {run, sweep}) {
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--seed", seed, "Override run.seed");
        sub->add_flag("--quiet", quiet, "Only report errors");
    }
    sweep->add_option("--axis", axis, "KEY=V1,V2,... with KEY in N, epsilon, method")->required();
    sweep->add_option("--repetitions", repetitions, "Timed repetitions per cell")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*presets) {
            for (const auto& p : shipped_presets())
                std::cout << p.id << "\t" << (fs::path(TTS_ENKF_PRESET_DIR) / p.file).string() << "\t"
                          << p.description << "\n";
            return kOk;
        }

        if (*check) {
            ScenarioConfig c;
            try {
                c = load_config(resolve_config(config));
            } catch (const ConfigError& e) {
                std::cout << e.what() << "\n";
                return kConfigError;
            }
            const auto violations = validate(c);
            for (const auto& v : violations) std::cout << v << "\n";
            if (violations.empty()) std::cout << "ok\n";
            return violations.empty() ? kOk : kConfigError;
        }

        fs::create_directories(out);
        const fs::path dir(out);

        if (*run) {
            const ScenarioConfig c = load(config, seed);
            const RunReport r = run_scenario(c);
            emit(dir, "config.json", config_to_json(c), quiet);
            emit(dir, "trajectory.csv", trajectory_csv(r), quiet);
            emit(dir, "summary.csv", summary_csv({r}), quiet);
            if (r.has_prediction) {
                emit(dir, "prediction.csv", prediction_csv(r), quiet);
                emit(dir, "prediction_summary.csv", prediction_summary_csv({r}), quiet);
            }
            if (!quiet) print_report(r);
            return r.diverged ? kDiverged : kOk;
        }

        if (*sweep) {
            const ScenarioConfig c = load(config, seed);
            const SweepAxis ax = parse_axis(axis);
            const SweepResult s = run_sweep(c, ax, repetitions);
            emit(dir, "config.json", config_to_json(c), quiet);
            emit(dir, "comparison.csv", comparison_csv(s), quiet);
            emit(dir, "summary.csv", summary_csv(s.reports), quiet);
            if (c.l > 0) emit(dir, "prediction_summary.csv", prediction_summary_csv(s.reports), quiet);
            bool any = false;
            for (const auto& r : s.reports) {
                if (!quiet) print_report(r);
                any = any || r.diverged;
            }
            return any ? kDiverged : kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
    return kOk;
}
