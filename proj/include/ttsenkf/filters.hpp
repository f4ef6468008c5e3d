#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ttsenkf/model.hpp"

namespace ttsenkf {

enum class FilterKind { TtsEnkf, ExactEnkf, Pf };

std::string to_string(FilterKind k);
FilterKind filter_kind_from_string(const std::string& s);  // throws ConfigError

/// Slow mean held constant during the fast time update.
enum class FreezePoint { Posterior, Prior };

struct FilterOptions {
    bool perturbed_observations = true;
    bool psi_at_prior = true;  // psi0 in the slow output taken at the previous members
    FreezePoint freeze = FreezePoint::Posterior;

    double condition_limit = 1e12;
    double innovation_growth = 1e3;
    int innovation_strikes = 3;

    double resample_fraction = 0.5;  // resample when ESS < fraction * N
    bool regularize = true;
    double jitter_scale = 1.0;  // multiplies the Gaussian-kernel bandwidth
};

struct FilterInit {
    Vector x1, x2;
    Vector bias;  // empty means zero
    Matrix P0;    // empty means diag((0.01 * nominal magnitude)^2)
};

struct Diagnostics {
    bool diverged = false;
    long diverged_step = -1;
    std::string reason;
    double initial_innovation = -1.0;
    double last_innovation = 0.0;
    double last_condition = 1.0;
    int strikes = 0;
    long substitutions = 0;  // psi0 failures replaced by the mean's psi0
    long resamples = 0;
    bool degenerate = false;

    void flag(long step, const std::string& why);
    /// Innovation-growth and conditioning checks after an analysis.
    void observe(long step, double innovation_norm, double condition, const FilterOptions& opts);
};

struct FilterState {
    Matrix slow;  // n_s x N
    Matrix fast;  // n_f x N
    Vector x1_hat, x2_hat;
    long k = 0;
    Matrix K_slow, K_fast;
    Diagnostics diag;
};

/// Draws N members of N(x0 + b, P0).
Matrix initial_ensemble(const FilterInit& init, int N, std::uint64_t seed);

class Filter {
public:
    Filter(const NspModel& model, double iota, int N, std::uint64_t seed, FilterOptions opts);
    virtual ~Filter() = default;

    /// One full cycle for measurement y_{k+1}. After divergence this is a no-op.
    virtual void step(const Vector& y) = 0;
    virtual FilterKind kind() const = 0;

    /// [x1_hat; x2_hat]
    Vector estimate() const;
    const FilterState& state() const { return st_; }
    FilterState& state() { return st_; }
    bool diverged() const { return st_.diag.diverged; }
    const NspModel& model() const { return *model_; }
    const DiscreteStepper& stepper() const { return stepper_; }
    const NoiseFactors& factors() const { return factors_; }
    const FilterOptions& options() const { return opts_; }
    int members() const { return N_; }
    std::uint64_t seed() const { return seed_; }

protected:
    const NspModel* model_;
    DiscreteStepper stepper_;
    NoiseFactors factors_;
    int N_;
    std::uint64_t seed_;
    FilterOptions opts_;
    FilterState st_;
};

/// EnKF on the full sampled-data model.
class ExactEnkf final : public Filter {
public:
    ExactEnkf(const NspModel& model, double iota, int N, std::uint64_t seed, const FilterInit& init,
              FilterOptions opts = {});
    void step(const Vector& y) override;
    FilterKind kind() const override { return FilterKind::ExactEnkf; }

    /// Forecast through discrete_step with fresh noise.
    void forecast();
    /// Perturbed-observation analysis on the full state.
    void analysis(const Vector& y);
};

/// Reduced slow filter plus boundary-layer fast filter, recombined.
class TtsEnkf final : public Filter {
public:
    TtsEnkf(const NspModel& model, double iota, int N, std::uint64_t seed, const FilterInit& init,
            FilterOptions opts = {});
    void step(const Vector& y) override;
    FilterKind kind() const override { return FilterKind::TtsEnkf; }

    void slow_time_update();
    void slow_measurement_update(const Vector& y);
    void fast_time_update();
    void fast_measurement_update(const Vector& y);

    /// Forecast slow ensemble and its perturbation matrix from the last time update.
    const Matrix& slow_forecast() const { return st_.slow; }
    const Matrix& slow_forecast_perturbations() const { return X1_pert_; }
    const Matrix& psi_prior() const { return psi_prior_; }
    std::vector<QuasiSteadyMap>& psi_maps() { return maps_; }
    QuasiSteadyMap& mean_map() { return mean_map_; }

private:
    Vector member_psi(Eigen::Index i, const Vector& x1);

    std::vector<QuasiSteadyMap> maps_;
    QuasiSteadyMap mean_map_;
    Matrix psi_prior_;
    Matrix X1_pert_;
    Vector x1_prior_mean_;
    bool mean_psi_valid_ = false;
    Vector mean_psi_;
};

/// Normalized w_i * exp(loglik_i - max loglik). Throws DegeneracyError when
/// every weight vanishes or the result is not finite.
Vector normalize_weights(const Vector& prior_weights, const Vector& loglik);

/// 1 / sum w_i^2
double effective_sample_size(const Vector& w);

/// Systematic resampling with offset u0 in [0, 1). Returns parent indices.
std::vector<Eigen::Index> systematic_resample(const Vector& w, double u0);

/// Bootstrap particle filter on the full sampled-data model.
class ParticleFilter final : public Filter {
public:
    ParticleFilter(const NspModel& model, double iota, int N, std::uint64_t seed, const FilterInit& init,
                   FilterOptions opts = {});
    void step(const Vector& y) override;
    FilterKind kind() const override { return FilterKind::Pf; }

    const Vector& weights() const { return w_; }
    Vector& weights() { return w_; }

private:
    Vector w_;
    Eigen::LLT<Matrix> R_llt_;
};

std::unique_ptr<Filter> make_filter(FilterKind kind, const NspModel& model, double iota, int N, std::uint64_t seed,
                                    const FilterInit& init, FilterOptions opts = {});

}  // namespace ttsenkf
