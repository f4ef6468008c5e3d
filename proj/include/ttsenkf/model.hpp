#pragma once

#include <functional>
#include <string>
#include <utility>

#include "ttsenkf/ensemble.hpp"

namespace ttsenkf {

struct NoiseSpec {
    Matrix Q1;  // slow process noise, q1 x q1
    Matrix Q2;  // fast process noise, q2 x q2
    Matrix R;   // measurement noise, n_y x n_y

    void validate() const;
};

/// Cholesky-type factors of a NoiseSpec, computed once per run.
struct NoiseFactors {
    Matrix L1, L2, LR;
    explicit NoiseFactors(const NoiseSpec& n);
};

/// x1' = f1 + g1 w1,  eps x2' = f2 + eps g2 w2,  y = h + v.
struct NspModel {
    using VecFn = std::function<Vector(const Vector& x1, const Vector& x2, double eps)>;
    using MatFn = std::function<Matrix(const Vector& x1, const Vector& x2, double eps)>;

    std::string name;
    int n_s = 0, n_f = 0, n_y = 0, q1 = 0, q2 = 0;
    double epsilon = 0.0;
    VecFn f1, f2, h;
    MatFn g1, g2;

    MatFn df2_dx2;                                  // optional analytic Jacobian of f2
    std::function<Vector(const Vector&)> psi_guess;  // optional cold start for psi0
    /// Throws PlantDomainError outside the physical domain. Optional.
    std::function<void(const Vector&, const Vector&)> check_domain;
    /// Drift must vanish at the origin (checked by validate()).
    bool origin_equilibrium = false;

    NoiseSpec noise;

    void validate() const;
    int n() const { return n_s + n_f; }
};

struct DiscreteStepper {
    const NspModel* model = nullptr;
    double iota = 0.0;

    DiscreteStepper(const NspModel& m, double iota);
    double alpha() const { return iota / model->epsilon; }
};

/// x1' = x1 + iota (f1 + g1 w1),  x2' = x2 + (iota/eps) f2 + iota g2 w2.
std::pair<Vector, Vector> discrete_step(const DiscreteStepper& stepper, const Vector& x1, const Vector& x2,
                                        const Vector& w1, const Vector& w2);

/// The same interval split into `substeps` Euler steps with the noise held
/// constant. Used for ground truth when iota/eps is large.
std::pair<Vector, Vector> discrete_step_substepped(const DiscreteStepper& stepper, const Vector& x1,
                                                   const Vector& x2, const Vector& w1, const Vector& w2,
                                                   int substeps);

/// psi0(x1): root of f2(x1, ., 0) by damped Newton with a warm start.
class QuasiSteadyMap {
public:
    struct Options {
        double tolerance = 1e-9;
        int max_iterations = 50;
    };

    explicit QuasiSteadyMap(const NspModel& model) : QuasiSteadyMap(model, Options{}) {}
    QuasiSteadyMap(const NspModel& model, Options opts);

    Vector solve(const Vector& x1);

    void warm_start(const Vector& x2) { cache_ = x2; has_cache_ = true; }
    void reset() { has_cache_ = false; }
    bool has_cache() const { return has_cache_; }

    int last_iterations() const { return last_iterations_; }
    double last_residual() const { return last_residual_; }
    const Options& options() const { return opts_; }

private:
    Matrix jacobian(const Vector& x1, const Vector& x2) const;

    const NspModel* model_;
    Options opts_;
    Vector cache_;
    bool has_cache_ = false;
    int last_iterations_ = 0;
    double last_residual_ = 0.0;
};

/// Free-function form for one-off evaluations (cold start every call).
Vector solve_quasi_steady(const NspModel& model, const Vector& x1);

/// x1 + iota f1(x1, psi0, 0) + iota g1(x1, psi0, 0) w1. psi0 is written to
/// `psi_out` when non-null.
Vector reduced_slow_step(const NspModel& model, QuasiSteadyMap& psi, const Vector& x1, const Vector& w1,
                         double iota, Vector* psi_out = nullptr);

/// Same step with psi0(x1) already known.
Vector reduced_slow_step_at(const NspModel& model, const Vector& x1, const Vector& psi0, const Vector& w1,
                            double iota);

/// x2 + iota f2(x1_frozen, x2, 0) + iota g2 w2.
Vector boundary_layer_step(const NspModel& model, const Vector& x1_frozen, const Vector& x2, const Vector& w2,
                           double iota);

/// Zeroth-order output h(x1, x2, 0).
inline Vector h0(const NspModel& model, const Vector& x1, const Vector& x2) { return model.h(x1, x2, 0.0); }

/// Throws NumericalError naming the first non-finite channel.
void require_finite(const Vector& v, const char* label);

}  // namespace ttsenkf
