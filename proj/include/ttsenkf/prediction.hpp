#pragma once

#include <vector>

#include "ttsenkf/filters.hpp"

namespace ttsenkf {

struct PredictionOptions {
    bool pseudo_update = true;
    /// Fast pseudo-observation and fast time update use the slow mean of the
    /// previous offset (false: the current offset).
    bool fast_obs_previous_offset = true;
};

/// Columns are offsets 0..l; offset 0 is the filter posterior.
struct PredictionTrajectory {
    Matrix x1, x2;
    std::vector<double> slow_spread, fast_spread;  // sqrt(trace P)
    long anchor_k = 0;
    long failed_offset = -1;  // first divergent offset, or -1
    std::string failure;

    int length() const { return static_cast<int>(x1.cols()) - 1; }
};

/// Pre/post-update ensembles of the two-time-scale predictor at offset l.
struct PredictionState {
    Matrix slow_minus, slow_plus;
    Matrix fast_minus, fast_plus;
    Vector x1_bar_plus, x1_bar_plus_prev, x2_bar_plus;
    long l = 0;
    long anchor_k = 0;
};

class TtsPredictor {
public:
    TtsPredictor(const NspModel& model, double iota, const Matrix& slow, const Matrix& fast, std::uint64_t seed,
                 long anchor_k, PredictionOptions opts = {});
    /// Starts from the filter posterior, reusing its psi0 warm starts.
    explicit TtsPredictor(TtsEnkf& filter, PredictionOptions opts = {});

    void predict_slow_step();
    void predict_fast_step();
    /// predict_slow_step then predict_fast_step.
    void advance();

    const PredictionState& state() const { return ps_; }
    long substitutions() const { return substitutions_; }

private:
    Vector member_psi(Eigen::Index i, const Vector& x1);
    void pseudo_update(Matrix& members, const Matrix& outputs, const Vector& y_pseudo);

    const NspModel* model_;
    double iota_;
    NoiseFactors factors_;
    std::uint64_t seed_;
    PredictionOptions opts_;
    PredictionState ps_;
    std::vector<QuasiSteadyMap> maps_;
    QuasiSteadyMap mean_map_;
    long substitutions_ = 0;
};

/// l offsets of slow then fast prediction from a TTS-EnKF posterior.
PredictionTrajectory predict_l_steps(TtsEnkf& filter, int l, PredictionOptions opts = {});

/// Baselines: the exact-EnKF variant propagates the full ensemble and applies
/// pseudo-observations y = h(mean); the PF variant propagates particles with
/// their weights frozen.
PredictionTrajectory open_loop_predict(const Filter& filter, int l, PredictionOptions opts = {});

}  // namespace ttsenkf
