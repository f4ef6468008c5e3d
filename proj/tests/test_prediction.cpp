#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "ttsenkf/bench.hpp"
#include "ttsenkf/prediction.hpp"

using namespace ttsenkf;
using testutil::vec;

namespace {

FilterInit init_at(const Vector& x1, const Vector& x2, double spread) {
    FilterInit in;
    in.x1 = x1;
    in.x2 = x2;
    in.P0 = spread * spread * Matrix::Identity(x1.size() + x2.size(), x1.size() + x2.size());
    return in;
}

LinearTtsPlant noiseless_linear() {
    LinearTtsPlant p = default_linear_plant(0.005);
    p.noise.Q1 = Matrix::Zero(2, 2);
    p.noise.Q2 = Matrix::Zero(2, 2);
    return p;
}

// a filter that has seen a few measurements of its own noise-free truth
TtsEnkf warmed_filter(const NspModel& m, const LinearTtsPlant& p, int N, std::uint64_t seed, long steps) {
    TtsEnkf f(m, 0.001, N, seed, init_at(p.x1_0, p.x2_0, 0.05));
    const TruthRun t = simulate_truth(m, p.x1_0, p.x2_0, 0.001, steps, seed, false, true, 1);
    for (long k = 1; k <= steps; ++k) f.step(t.y.col(k));
    return f;
}

ScenarioConfig linear_prediction_config(std::uint64_t seed, int l) {
    ScenarioConfig c;
    c.plant = "linear";
    c.N = 100;
    c.horizon = 1000;
    c.l = l;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(PredictSlow, SingleMemberIsPurePropagation) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsPredictor pr(m, 0.001, p.x1_0.replicate(1, 1), p.x2_0.replicate(1, 1), 3, 0);
    for (int j = 0; j < 5; ++j) {
        pr.predict_slow_step();
        EXPECT_EQ(pr.state().slow_plus, pr.state().slow_minus);
        pr.predict_fast_step();
        EXPECT_EQ(pr.state().fast_plus, pr.state().fast_minus);
    }
}

TEST(PredictSlow, ZeroNoiseCollapsesToReducedSteps) {
    const LinearTtsPlant p = noiseless_linear();
    const NspModel m = p.model();
    TtsPredictor pr(m, 0.001, p.x1_0.replicate(1, 6), p.x2_0.replicate(1, 6), 7, 0);
    QuasiSteadyMap q(m);
    Vector x = p.x1_0;
    for (int j = 0; j < 25; ++j) {
        pr.advance();
        x = reduced_slow_step(m, q, x, Vector::Zero(2), 0.001);
        for (int i = 0; i < 6; ++i) EXPECT_EQ(pr.state().slow_plus.col(i), x) << "offset " << j + 1;
    }
    EXPECT_EQ(pr.state().x1_bar_plus, x);
}

TEST(PredictFast, LayerFixedPointWithoutNoise) {
    const LinearTtsPlant p = noiseless_linear();
    const NspModel m = p.model();
    const Vector x1 = vec({0.4, 0.9});
    TtsPredictor pr(m, 0.001, x1.replicate(1, 4), p.psi0(x1).replicate(1, 4), 1, 0);
    // the fast step freezes x1 at the previous offset's mean, which is still x1
    pr.predict_fast_step();
    EXPECT_LE((pr.state().fast_minus - p.psi0(x1).replicate(1, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PredictLSteps, OneStepIsOneComposition) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsEnkf f = warmed_filter(m, p, 30, 5, 20);
    const PredictionTrajectory t = predict_l_steps(f, 1);
    TtsPredictor pr(f);
    pr.predict_slow_step();
    pr.predict_fast_step();
    EXPECT_EQ(t.x1.col(1), pr.state().x1_bar_plus);
    EXPECT_EQ(t.x2.col(1), pr.state().x2_bar_plus);
}

TEST(PredictLSteps, DeterministicAndAnchored) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsEnkf f = warmed_filter(m, p, 30, 5, 20);
    const PredictionTrajectory a = predict_l_steps(f, 40);
    const PredictionTrajectory b = predict_l_steps(f, 40);
    EXPECT_EQ(a.x1, b.x1);
    EXPECT_EQ(a.x2, b.x2);
    EXPECT_EQ(a.length(), 40);
    EXPECT_EQ(a.failed_offset, -1);
    EXPECT_EQ(a.anchor_k, 20);
    EXPECT_EQ(Vector(a.x1.col(0)), f.state().x1_hat);
    EXPECT_EQ(Vector(a.x2.col(0)), f.state().x2_hat);
    TtsPredictor pr(f);
    EXPECT_EQ(pr.state().slow_plus, f.state().slow);
    EXPECT_EQ(pr.state().fast_plus, f.state().fast);
    EXPECT_EQ(pr.state().l, 0);
}

TEST(PredictLSteps, TurbineEfficiencyKeepsFalling) {
    ScenarioConfig c;
    c.plant = "turbine";
    c.N = 50;
    c.horizon = 200;
    c.l = 500;
    c.Q1 = Matrix::Zero(2, 2);
    c.Q2 = Matrix::Zero(4, 4);
    c.truth_process_noise = false;
    const RunReport r = run_scenario(c);
    ASSERT_FALSE(r.diverged) << r.divergence_reason;
    ASSERT_TRUE(r.has_prediction);
    ASSERT_EQ(r.prediction.length(), 500) << r.prediction.failure;
    for (int j = 1; j <= 500; ++j) {
        EXPECT_LT(r.prediction.x1(0, j), r.prediction.x1(0, j - 1)) << "offset " << j;
        EXPECT_LT(r.prediction_truth_x1(0, j), r.prediction_truth_x1(0, j - 1)) << "offset " << j;
    }
    EXPECT_LE(std::abs(r.prediction.x1(0, 500) / r.prediction_truth_x1(0, 500) - 1.0), 0.01);
}

TEST(PredictLSteps, PseudoUpdateNoWorseThanOpenLoop) {
    double with = 0.0, without = 0.0, spread_with = 0.0, spread_without = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        ScenarioConfig c = linear_prediction_config(s, 100);
        const RunReport a = run_scenario(c);
        c.prediction.pseudo_update = false;
        const RunReport b = run_scenario(c);
        ASSERT_TRUE(a.has_prediction && b.has_prediction);
        ASSERT_FALSE(a.windows[0].mae_slow.empty() || b.windows[0].mae_slow.empty());
        with += a.windows[0].mae_slow[0] + a.windows[0].mae_slow[1];
        without += b.windows[0].mae_slow[0] + b.windows[0].mae_slow[1];
        spread_with += a.prediction.slow_spread.back();
        spread_without += b.prediction.slow_spread.back();
    }
    EXPECT_LE(with, 1.05 * without) << "with " << with << " without " << without;
    EXPECT_LE(spread_with, spread_without);
}

TEST(PredictLSteps, SlowErrorIsLinearInHorizon) {
    const std::vector<int> ls = {100, 200, 300, 400, 500};
    std::vector<double> e(ls.size(), 0.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
        ScenarioConfig c = linear_prediction_config(500 + s, 500);
        c.windows = ls;
        const RunReport r = run_scenario(c);
        ASSERT_FALSE(r.diverged);
        for (std::size_t i = 0; i < ls.size(); ++i) {
            ASSERT_FALSE(r.windows[i].mae_slow.empty());
            e[i] += (r.windows[i].mae_slow[0] + r.windows[i].mae_slow[1]) / 2.0 / 20.0;
        }
    }
    // least squares e = a + b l
    const double n = static_cast<double>(ls.size());
    const double lm = std::accumulate(ls.begin(), ls.end(), 0.0) / n;
    const double em = std::accumulate(e.begin(), e.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < ls.size(); ++i) {
        sxy += (ls[i] - lm) * (e[i] - em);
        sxx += (ls[i] - lm) * (ls[i] - lm);
        syy += (e[i] - em) * (e[i] - em);
    }
    const double b = sxy / sxx;
    const double r2 = sxy * sxy / (sxx * syy);
    EXPECT_GT(b, 0.0);
    EXPECT_GE(r2, 0.8) << "slope " << b;
}

TEST(OpenLoop, ZeroLengthIsCurrentEstimate) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    ExactEnkf f(m, 0.001, 20, 1, init_at(p.x1_0, p.x2_0, 0.05));
    const PredictionTrajectory t = open_loop_predict(f, 0);
    EXPECT_EQ(t.length(), 0);
    EXPECT_EQ(Vector(t.x1.col(0)), f.state().x1_hat);
    EXPECT_EQ(Vector(t.x2.col(0)), f.state().x2_hat);
}

TEST(OpenLoop, PfWithoutNoiseFollowsDeterministicFlow) {
    const LinearTtsPlant p = noiseless_linear();
    const NspModel m = p.model();
    ParticleFilter f(m, 0.001, 12, 4, init_at(p.x1_0, p.x2_0, 0.05));
    f.step(vec({1.0, 0.4, 1.2}));
    const PredictionTrajectory t = open_loop_predict(f, 30);
    Matrix X1 = f.state().slow, X2 = f.state().fast;
    DiscreteStepper st(m, 0.001);
    for (int j = 1; j <= 30; ++j) {
        for (int i = 0; i < 12; ++i) {
            auto [a, b] = discrete_step(st, X1.col(i), X2.col(i), Vector::Zero(2), Vector::Zero(2));
            X1.col(i) = a;
            X2.col(i) = b;
        }
        EXPECT_LE((t.x1.col(j) - X1 * f.weights()).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LE((t.x2.col(j) - X2 * f.weights()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(OpenLoop, TtsFilterRejected) {
    const LinearTtsPlant p = default_linear_plant();
    const NspModel m = p.model();
    TtsEnkf f(m, 0.001, 4, 1, init_at(p.x1_0, p.x2_0, 0.05));
    EXPECT_THROW(open_loop_predict(f, 3), InvalidInput);
}

TEST(OpenLoop, PfWorseThanTtsOnTurbineAt500) {
    ScenarioConfig c;
    c.plant = "turbine";
    c.N = 100;
    c.l = 500;
    double tts = 0.0, pf = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        c.seed = s;
        c.filter = FilterKind::TtsEnkf;
        const RunReport a = run_scenario(c);
        c.filter = FilterKind::Pf;
        const RunReport b = run_scenario(c);
        ASSERT_FALSE(a.diverged || b.diverged);
        ASSERT_FALSE(a.windows[0].mae_slow.empty() || b.windows[0].mae_slow.empty());
        tts += a.windows[0].mae_slow[0] + a.windows[0].mae_slow[1];
        pf += b.windows[0].mae_slow[0] + b.windows[0].mae_slow[1];
    }
    EXPECT_GT(pf, tts) << "500-step slow MAE% sum: pf " << pf / 5 << " tts " << tts / 5;
}
