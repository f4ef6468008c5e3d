#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "ttsenkf/bench.hpp"
#include "ttsenkf/filters.hpp"
#include "ttsenkf/turbine.hpp"

using namespace ttsenkf;
using testutil::scalar_model;
using testutil::v1;
using testutil::vec;

namespace {

FilterInit init_at(const Vector& x1, const Vector& x2, double spread) {
    FilterInit in;
    in.x1 = x1;
    in.x2 = x2;
    in.P0 = spread * spread * Matrix::Identity(x1.size() + x2.size(), x1.size() + x2.size());
    return in;
}

LinearTtsPlant quiet_linear(double q1, double q2, double r) {
    LinearTtsPlant p = default_linear_plant(0.005);
    p.noise.Q1 = q1 * Matrix::Identity(2, 2);
    p.noise.Q2 = q2 * Matrix::Identity(2, 2);
    p.noise.R = r * Matrix::Identity(3, 3);
    return p;
}

Matrix full(const Filter& f) {
    Matrix X(f.state().slow.rows() + f.state().fast.rows(), f.members());
    X << f.state().slow, f.state().fast;
    return X;
}

double rms_rel_to_kalman(FilterKind kind, int N, std::uint64_t seed) {
    const LinearTtsPlant plant = default_linear_plant(0.005);
    const NspModel model = plant.model();
    const double iota = 0.001;
    const long steps = 50;
    ScenarioConfig cfg;
    const Scenario sc = build_scenario(cfg);
    const TruthRun t = simulate_truth(model, plant.x1_0, plant.x2_0, iota, steps, seed, true, true, 1);
    Vector m0(4);
    m0 << plant.x1_0, plant.x2_0;
    const Matrix kf = testutil::kalman_reference(plant, iota, t.y, m0, sc.init.P0);
    auto f = make_filter(kind, model, iota, N, seed, sc.init);
    double dev = 0.0;
    for (long k = 1; k <= steps; ++k) {
        f->step(t.y.col(k));
        dev += (f->estimate() - kf.col(k)).squaredNorm();
    }
    if (f->diverged()) return INFINITY;
    return std::sqrt(dev / t.x.rightCols(steps).squaredNorm());
}

}  // namespace

// ------------------------------------------------------------ exact EnKF

TEST(ExactEnkf, HugeRKeepsForecast) {
    const LinearTtsPlant p = quiet_linear(1.0, 100.0, 1e12);
    const NspModel m = p.model();
    ExactEnkf f(m, 0.001, 50, 4, init_at(p.x1_0, p.x2_0, 0.05));
    f.state().k = 1;
    f.forecast();
    const Matrix before = full(f);
    f.analysis(vec({5.0, -3.0, 2.0}));
    const Matrix after = full(f);
    EXPECT_LE((after - before).cwiseAbs().maxCoeff() / before.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(ExactEnkf, IdenticalMembersKeepForecast) {
    const LinearTtsPlant p = quiet_linear(0.0, 0.0, 1e-4);
    const NspModel m = p.model();
    ExactEnkf f(m, 0.001, 8, 2, init_at(p.x1_0, p.x2_0, 0.0));
    f.state().k = 1;
    f.forecast();
    const Matrix before = full(f);
    f.analysis(vec({5.0, -3.0, 2.0}));
    EXPECT_EQ(full(f), before);
    EXPECT_TRUE(f.state().K_slow.isZero(0.0));
}

TEST(ExactEnkf, MatchesKalmanFilter) { EXPECT_LE(rms_rel_to_kalman(FilterKind::ExactEnkf, 5000, 1), 0.03); }

TEST(ExactEnkf, MeanIsEstimate) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    ExactEnkf f(m, 0.001, 20, 3, init_at(p.x1_0, p.x2_0, 0.01));
    f.step(vec({1.0, -1.0, 0.5}));
    EXPECT_TRUE(f.state().x1_hat.isApprox(ensemble_mean(f.state().slow), 1e-15));
    EXPECT_TRUE(f.state().x2_hat.isApprox(ensemble_mean(f.state().fast), 1e-15));
}

TEST(ExactEnkf, RejectsSingleMember) {
    const NspModel m = default_linear_plant().model();
    EXPECT_THROW(ExactEnkf(m, 0.001, 1, 1, init_at(vec({1, 1}), vec({0, 0}), 0.0)), InvalidInput);
}

// ------------------------------------------------------------ TTS slow filter

TEST(TtsSlow, EquilibriumWithoutNoise) {
    const LinearTtsPlant p = quiet_linear(0.0, 0.0, 1e-4);
    const NspModel m = p.model();
    TtsEnkf f(m, 0.001, 6, 1, init_at(Vector::Zero(2), Vector::Zero(2), 0.0));
    const Matrix prior = f.state().slow;
    f.slow_time_update();
    EXPECT_EQ(f.slow_forecast(), prior);
}

TEST(TtsSlow, ForecastMeanIsSchurStep) {
    const LinearTtsPlant p = quiet_linear(0.0, 0.0, 1e-4);
    const NspModel m = p.model();
    TtsEnkf f(m, 0.001, 40, 9, init_at(p.x1_0, p.x2_0, 0.1));
    const Vector prior_mean = ensemble_mean(f.state().slow);
    f.slow_time_update();
    const Matrix A0 = p.A11 - p.A12 * p.A22.inverse() * p.A21;
    const Vector ref = prior_mean + 0.001 * A0 * prior_mean;
    // the reduced flow is linear here, so the spread does not bias the mean
    EXPECT_LE((ensemble_mean(f.slow_forecast()) - ref).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((f.slow_forecast_perturbations() - perturbations(f.slow_forecast())).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TtsSlow, TwoSymmetricMembers) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsEnkf f(m, 0.001, 2, 5, init_at(p.x1_0, p.x2_0, 0.1));
    f.slow_time_update();
    const Matrix& X = f.slow_forecast_perturbations();
    // rounding of the midpoint is relative to the member magnitude
    EXPECT_LE((X.col(0) + X.col(1)).cwiseAbs().maxCoeff(), 1e-15 * f.slow_forecast().cwiseAbs().maxCoeff());
    // dyadic members about a dyadic mean: exact
    Matrix E(2, 2);
    E << 1.25, 0.75, -2.0, -1.0;
    const Matrix P = perturbations(E);
    EXPECT_EQ(P.col(0), -P.col(1));
}

TEST(TtsSlow, ScalarGainArithmetic) {
    // y = 2 x1: two members at c +- 1/sqrt(2) give X X^T = 1, X Y^T = 2, Y Y^T = 4
    const auto m = scalar_model([](double, double) { return 0.0; }, [](double, double b) { return -b; }, 0.1, 0.0,
                                0.0, 1.0, [](double a, double) { return 2.0 * a; });
    FilterOptions o;
    o.perturbed_observations = false;
    TtsEnkf f(m, 0.01, 2, 1, init_at(v1(0.0), v1(0.0), 0.0), o);
    const double d = 1.0 / std::sqrt(2.0), c = 3.0;
    f.state().slow.row(0) << c + d, c - d;
    f.slow_time_update();
    const Matrix fc = f.slow_forecast();
    f.slow_measurement_update(v1(7.0));
    EXPECT_NEAR(f.state().K_slow(0, 0), 0.4, 1e-15);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(f.state().slow(0, i), fc(0, i) + 0.4 * (7.0 - 2.0 * fc(0, i)), 1e-14);
    EXPECT_NEAR(f.state().x1_hat(0), ensemble_mean(f.state().slow)(0), 1e-15);
}

TEST(TtsSlow, IdenticalOutputsKeepForecast) {
    // output ignores x1, so every member predicts the same y
    const auto m = scalar_model([](double a, double) { return -a; }, [](double, double b) { return -b; }, 0.1, 1.0,
                                0.0, 1.0, [](double, double b) { return b; });
    TtsEnkf f(m, 0.01, 10, 3, init_at(v1(1.0), v1(0.0), 0.2));
    f.slow_time_update();
    const Matrix fc = f.slow_forecast();
    f.slow_measurement_update(v1(4.0));
    EXPECT_EQ(f.state().slow, fc);
}

TEST(TtsSlow, RootFailureFallsBackToMeanPsi) {
    // psi0(x1) = sqrt(x1) exists only for x1 >= 0
    NspModel m = scalar_model([](double, double) { return 0.0; }, [](double a, double b) { return a - b * b; });
    m.psi_guess = [](const Vector&) { return v1(1.0); };
    TtsEnkf f(m, 0.01, 3, 1, init_at(v1(0.0), v1(0.0), 0.0));
    f.state().slow.row(0) << 1.0, 2.0, -0.5;
    f.slow_time_update();
    EXPECT_EQ(f.state().diag.substitutions, 1);
    EXPECT_NEAR(f.psi_prior()(0, 2), std::sqrt((1.0 + 2.0 - 0.5) / 3.0), 1e-9);
    EXPECT_NEAR(f.psi_prior()(0, 1), std::sqrt(2.0), 1e-9);
}

TEST(TtsSlow, AccuracyWithinTwiceExact) {
    ScenarioConfig c;
    c.plant = "linear";
    c.N = 100;
    double tts = 0.0, exact = 0.0;
    for (std::uint64_t s = 1; s <= 3; ++s) {
        c.seed = s;
        c.filter = FilterKind::TtsEnkf;
        const RunReport a = run_scenario(c);
        c.filter = FilterKind::ExactEnkf;
        const RunReport b = run_scenario(c);
        ASSERT_FALSE(a.diverged);
        ASSERT_FALSE(b.diverged);
        tts += a.mae_state[0] + a.mae_state[1];
        exact += b.mae_state[0] + b.mae_state[1];
    }
    EXPECT_LE(tts, 2.0 * exact) << "tts " << tts << " exact " << exact;
}

// ------------------------------------------------------------ TTS fast filter

TEST(TtsFast, LayerFixedPoint) {
    const LinearTtsPlant p = quiet_linear(0.0, 0.0, 1e-4);
    const NspModel m = p.model();
    TtsEnkf f(m, 0.001, 5, 2, init_at(p.x1_0, p.x2_0, 0.0));
    f.state().x1_hat = vec({0.3, 0.7});
    f.state().fast = p.psi0(f.state().x1_hat).replicate(1, 5);
    const Matrix before = f.state().fast;
    f.fast_time_update();
    EXPECT_LE((f.state().fast - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TtsFast, HandExpansionWithNoise) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsEnkf f(m, 0.001, 4, 11, init_at(p.x1_0, p.x2_0, 0.05));
    f.state().k = 3;
    const Vector xh = f.state().x1_hat;
    const Matrix before = f.state().fast;
    f.fast_time_update();
    const Matrix L = p.noise.Q2.llt().matrixL();
    for (int i = 0; i < 4; ++i) {
        Rng r = stream_key(11, Stream::Fast, 3).member(i);
        Vector z(2);
        z(0) = r.normal();
        z(1) = r.normal();
        const Vector ref = before.col(i) + 0.001 * (p.A21 * xh + p.A22 * before.col(i)) + 0.001 * (L * z);
        EXPECT_LE((f.state().fast.col(i) - ref).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(TtsFast, DeterministicForecast) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsEnkf a(m, 0.001, 16, 21, init_at(p.x1_0, p.x2_0, 0.05));
    TtsEnkf b(m, 0.001, 16, 21, init_at(p.x1_0, p.x2_0, 0.05));
    a.fast_time_update();
    b.fast_time_update();
    EXPECT_EQ(a.state().fast, b.state().fast);
}

TEST(TtsFast, ScalarGainQuarter) {
    // y = x1 + 3 x2 with fast members +- 1/sqrt(6): X Y^T = 1, Y Y^T = 3
    const auto m = scalar_model([](double, double) { return 0.0; }, [](double, double b) { return -b; }, 0.1, 0.0,
                                0.0, 1.0, [](double a, double b) { return a + 3.0 * b; });
    FilterOptions o;
    o.perturbed_observations = false;
    TtsEnkf f(m, 0.01, 2, 1, init_at(v1(0.0), v1(0.0), 0.0), o);
    const double d = 1.0 / std::sqrt(6.0);
    f.state().x1_hat = v1(0.5);
    f.state().fast.row(0) << d, -d;
    const Matrix fc = f.state().fast;
    f.fast_measurement_update(v1(2.0));
    EXPECT_NEAR(f.state().K_fast(0, 0), 0.25, 1e-15);
    for (int i = 0; i < 2; ++i)
        EXPECT_NEAR(f.state().fast(0, i), fc(0, i) + 0.25 * (2.0 - (0.5 + 3.0 * fc(0, i))), 1e-14);
}

TEST(TtsFast, IdenticalOutputsKeepForecast) {
    const auto m = scalar_model([](double, double) { return 0.0; }, [](double, double b) { return -b; }, 0.1, 0.0,
                                0.0, 1.0, [](double a, double) { return a; });
    TtsEnkf f(m, 0.01, 6, 1, init_at(v1(0.0), v1(0.0), 0.3));
    const Matrix fc = f.state().fast;
    f.fast_measurement_update(v1(2.0));
    EXPECT_EQ(f.state().fast, fc);
}

TEST(TtsFast, EstimateHasFullDimension) {
    const TurbinePlant tp;
    const NspModel m = tp.model();
    TtsEnkf f(m, 0.001, 10, 1, init_at(tp.design_x1(), tp.design_x2(), 0.0));
    EXPECT_EQ(f.estimate().size(), 6);
    f.step(tp.outputs(tp.design_x1(), tp.design_x2()));
    EXPECT_FALSE(f.diverged()) << f.state().diag.reason;
    EXPECT_EQ(f.estimate().size(), 6);
}

// ------------------------------------------------------------ particle filter

TEST(ParticleFilter, UniformStaysUniform) {
    const Vector w = normalize_weights(Vector::Constant(4, 0.25), Vector::Constant(4, -3.0));
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w(i), 0.25);

    const LinearTtsPlant p = quiet_linear(0.0, 0.0, 1e-4);
    const NspModel m = p.model();
    ParticleFilter f(m, 0.001, 8, 1, init_at(p.x1_0, p.x2_0, 0.0));
    f.step(vec({1.0, 0.5, 0.2}));
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(f.weights()(i), 1.0 / 8, 1e-16);
}

TEST(ParticleFilter, HandNormalization) {
    const Vector w = normalize_weights(vec({0.5, 0.5}), vec({std::log(0.3), std::log(0.1)}));
    EXPECT_NEAR(w(0), 0.75, 1e-15);
    EXPECT_NEAR(w(1), 0.25, 1e-15);
}

TEST(ParticleFilter, SystematicResampleByHand) {
    const auto idx = systematic_resample(vec({0.5, 0.25, 0.25}), 0.5);
    ASSERT_EQ(idx.size(), 3u);
    EXPECT_EQ(idx[0], 0);
    EXPECT_EQ(idx[1], 0);
    EXPECT_EQ(idx[2], 2);
}

TEST(ParticleFilter, MatchesKalmanFilter) { EXPECT_LE(rms_rel_to_kalman(FilterKind::Pf, 1000, 1), 0.05); }

TEST(ParticleFilter, WeightInvariants) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    ParticleFilter f(m, 0.001, 200, 3, init_at(p.x1_0, p.x2_0, 0.05));
    const TruthRun t = simulate_truth(m, p.x1_0, p.x2_0, 0.001, 40, 3, true, true, 1);
    long seen = 0;
    for (long k = 1; k <= 40; ++k) {
        f.step(t.y.col(k));
        ASSERT_FALSE(f.diverged());
        EXPECT_NEAR(f.weights().sum(), 1.0, 1e-12);
        EXPECT_TRUE((f.weights().array() >= 0.0).all());
        if (f.state().diag.resamples > seen) {
            seen = f.state().diag.resamples;
            for (int i = 0; i < 200; ++i) EXPECT_EQ(f.weights()(i), 1.0 / 200);
        }
    }
    EXPECT_GT(seen, 0);
}

TEST(ParticleFilter, DegeneracyIsRecorded) {
    EXPECT_THROW(normalize_weights(Vector::Constant(3, 1.0 / 3),
                                   Vector::Constant(3, -std::numeric_limits<double>::infinity())),
                 DegeneracyError);
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    ParticleFilter f(m, 0.001, 10, 1, init_at(p.x1_0, p.x2_0, 0.05));
    const Matrix before = full(f);
    f.step(vec({std::nan(""), 0.0, 0.0}));
    EXPECT_TRUE(f.diverged());
    EXPECT_TRUE(f.state().diag.degenerate);
    EXPECT_EQ(full(f), before);
}

// ------------------------------------------------------------ divergence

TEST(Divergence, BackupRetainedAndLaterStepsIgnored) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    for (FilterKind kind : {FilterKind::ExactEnkf, FilterKind::TtsEnkf}) {
        auto f = make_filter(kind, m, 0.001, 10, 1, init_at(p.x1_0, p.x2_0, 0.05));
        f->step(vec({1.0, 0.5, 0.2}));
        const Matrix good = full(*f);
        f->step(vec({std::numeric_limits<double>::infinity(), 0.0, 0.0}));
        EXPECT_TRUE(f->diverged()) << to_string(kind);
        EXPECT_EQ(f->state().diag.diverged_step, 2);
        EXPECT_EQ(full(*f), good);
        f->step(vec({1.0, 0.5, 0.2}));
        EXPECT_EQ(full(*f), good);
        EXPECT_EQ(f->state().k, 2);
    }
}

TEST(Divergence, InnovationStrikes) {
    FilterOptions o;
    Diagnostics d;
    d.observe(1, 1.0, 1.0, o);
    d.observe(2, 2000.0, 1.0, o);
    d.observe(3, 2000.0, 1.0, o);
    d.observe(4, 10.0, 1.0, o);  // resets the count
    EXPECT_FALSE(d.diverged);
    d.observe(5, 2000.0, 1.0, o);
    d.observe(6, 2000.0, 1.0, o);
    EXPECT_FALSE(d.diverged);
    d.observe(7, 2000.0, 1.0, o);
    EXPECT_TRUE(d.diverged);
    EXPECT_EQ(d.diverged_step, 7);
}

TEST(Divergence, ConditionAndNonFinite) {
    FilterOptions o;
    Diagnostics a;
    a.observe(1, 1.0, 1e13, o);
    EXPECT_TRUE(a.diverged);
    Diagnostics b;
    b.observe(4, std::nan(""), 1.0, o);
    EXPECT_TRUE(b.diverged);
    EXPECT_EQ(b.diverged_step, 4);
}

TEST(FilterKindNames, RoundTrip) {
    for (FilterKind k : {FilterKind::TtsEnkf, FilterKind::ExactEnkf, FilterKind::Pf})
        EXPECT_EQ(filter_kind_from_string(to_string(k)), k);
    EXPECT_THROW(filter_kind_from_string("kalman"), ConfigError);
}
