#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttsenkf/filters.hpp"
#include "ttsenkf/prediction.hpp"

namespace ttsenkf {

/// 100 * mean|truth - est| / mean|truth| per row (channel). Columns are time.
std::vector<double> mae_percent(const Matrix& truth, const Matrix& estimate);

enum class EfMethod { Dlm, Pf, TtsEnkf };

struct EfParams {
    std::uint64_t n_s = 0, n_f = 0, n_y = 0;
    std::uint64_t c1 = 10, c2 = 3, c3 = 50, c4 = 100;
    std::uint64_t N = 0;
};

/// Equivalent-flop count of one filter iteration.
std::uint64_t ef_complexity(EfMethod method, const EfParams& p);

struct ScenarioConfig {
    std::string plant = "linear";  // linear | turbine
    std::string preset;            // empty selects the plant's default preset
    FilterKind filter = FilterKind::TtsEnkf;
    int N = 100;
    double epsilon = 0.005;
    double iota = 0.001;
    long horizon = 5000;
    int l = 0;
    std::vector<int> windows;  // prediction windows; empty means {l}
    std::uint64_t seed = 1;

    std::optional<Matrix> Q1, Q2, R;
    bool truth_process_noise = true;
    bool truth_measurement_noise = true;
    int truth_substeps = 0;  // 0 picks ceil(iota / (0.25 eps))

    FilterOptions options;
    PredictionOptions prediction;
    Vector init_bias;
    double init_spread = 0.01;  // relative 1-sigma spread of the initial ensemble

    // Optional plant parameter overrides (name -> value) for the turbine.
    std::vector<std::pair<std::string, double>> plant_params;

    EfParams ef;  // dimensions and N are filled in from the plant
    bool measure_time = false;
    int repetitions = 1;
    std::string time_unit = "s";
};

/// Human-readable violations of the ScenarioConfig invariants.
std::vector<std::string> validate(const ScenarioConfig& cfg);

struct Timing {
    bool measured = false;
    double best = 0.0, average = 0.0, worst = 0.0;  // seconds per iteration
    long iterations = 0;
};

struct PredictionWindow {
    int l = 0;
    std::vector<double> mae_slow, mae_fast;  // empty when the prediction failed before l
};

struct RunReport {
    ScenarioConfig config;
    std::string method;
    std::vector<std::string> state_names, output_names;

    Matrix truth_x, estimate_x;  // n x (horizon + 1), column k is step k
    Matrix truth_y, estimate_y;  // noise-free outputs and h(estimate)
    std::vector<double> mae_state, mae_output;  // empty when diverged

    bool diverged = false;
    long diverged_step = -1;
    std::string divergence_reason;
    long substitutions = 0;
    long resamples = 0;
    bool degenerate = false;
    std::string plant_error;

    std::optional<std::uint64_t> ef_flops;
    Timing timing;

    bool has_prediction = false;
    PredictionTrajectory prediction;
    Matrix prediction_truth_x1, prediction_truth_x2;  // offsets 0..l
    std::vector<PredictionWindow> windows;
};

/// Ground truth of the full sampled-data model plus noisy measurements.
struct TruthRun {
    Matrix x;  // n x (steps + 1)
    Matrix y;  // n_y x (steps + 1); column 0 unused
    Matrix y_clean;
};

struct Scenario {
    NspModel model;
    FilterInit init;
    std::vector<std::string> state_names, output_names;
};

Scenario build_scenario(const ScenarioConfig& cfg);

TruthRun simulate_truth(const NspModel& model, const Vector& x1_0, const Vector& x2_0, double iota, long steps,
                        std::uint64_t seed, bool process_noise, bool measurement_noise, int substeps = 0);

RunReport run_scenario(const ScenarioConfig& cfg);

struct SweepAxis {
    std::string key;  // N | epsilon | method
    std::vector<std::string> values;
};

/// Names accepted in ScenarioConfig::plant_params.
std::vector<std::string> turbine_param_names();

SweepAxis parse_axis(const std::string& spec);  // "KEY=V1,V2,..."

struct SweepResult {
    SweepAxis axis;
    std::vector<RunReport> reports;  // one per axis value, in axis order
};

/// Cells use seed base.seed + index. Repetitions only affect timing.
SweepResult run_sweep(const ScenarioConfig& base, const SweepAxis& axis, int repetitions, int threads = 0);

/// Worker cap from TTS_ENKF_THREADS (default: hardware concurrency).
int thread_cap();

// CSV emission
std::string trajectory_csv(const RunReport& r);
std::string summary_csv(const std::vector<RunReport>& reports);
std::string prediction_csv(const RunReport& r);
std::string prediction_summary_csv(const std::vector<RunReport>& reports);
std::string comparison_csv(const SweepResult& s);

}  // namespace ttsenkf
