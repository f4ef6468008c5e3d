#include "ttsenkf/prediction.hpp"

#include <cmath>

namespace ttsenkf {

namespace {

double spread(const Matrix& E) {
    if (E.cols() < 2) return 0.0;
    return perturbations(E).norm();  // Frobenius norm = sqrt(trace(A A^T))
}

std::uint64_t prediction_seed(std::uint64_t seed, long anchor_k) {
    return hash_combine(seed, static_cast<std::uint64_t>(anchor_k));
}

void record(PredictionTrajectory& t, int col, const Vector& x1, const Vector& x2, double s1, double s2) {
    t.x1.col(col) = x1;
    t.x2.col(col) = x2;
    t.slow_spread[col] = s1;
    t.fast_spread[col] = s2;
}

PredictionTrajectory make_trajectory(int ns, int nf, int l, long anchor_k) {
    PredictionTrajectory t;
    t.x1 = Matrix::Zero(ns, l + 1);
    t.x2 = Matrix::Zero(nf, l + 1);
    t.slow_spread.assign(l + 1, 0.0);
    t.fast_spread.assign(l + 1, 0.0);
    t.anchor_k = anchor_k;
    return t;
}

void truncate(PredictionTrajectory& t, int upto) {
    t.x1.conservativeResize(Eigen::NoChange, upto + 1);
    t.x2.conservativeResize(Eigen::NoChange, upto + 1);
    t.slow_spread.resize(upto + 1);
    t.fast_spread.resize(upto + 1);
}

}  // namespace

TtsPredictor::TtsPredictor(const NspModel& model, double iota, const Matrix& slow, const Matrix& fast,
                           std::uint64_t seed, long anchor_k, PredictionOptions opts)
    : model_(&model), iota_(iota), factors_(model.noise), seed_(prediction_seed(seed, anchor_k)), opts_(opts),
      mean_map_(model) {
    if (slow.cols() != fast.cols() || slow.cols() < 1) throw InvalidInput("prediction ensembles must match");
    ps_.slow_plus = ps_.slow_minus = slow;
    ps_.fast_plus = ps_.fast_minus = fast;
    ps_.x1_bar_plus = ps_.x1_bar_plus_prev = ensemble_mean(slow);
    ps_.x2_bar_plus = ensemble_mean(fast);
    ps_.anchor_k = anchor_k;
    maps_.reserve(slow.cols());
    for (Eigen::Index i = 0; i < slow.cols(); ++i) maps_.emplace_back(model);
}

TtsPredictor::TtsPredictor(TtsEnkf& f, PredictionOptions opts)
    : TtsPredictor(f.model(), f.stepper().iota, f.state().slow, f.state().fast, f.seed(), f.state().k, opts) {
    ps_.x1_bar_plus = ps_.x1_bar_plus_prev = f.state().x1_hat;
    ps_.x2_bar_plus = f.state().x2_hat;
    maps_ = f.psi_maps();
    mean_map_ = f.mean_map();
}

Vector TtsPredictor::member_psi(Eigen::Index i, const Vector& x1) {
    try {
        return maps_[i].solve(x1);
    } catch (const RootFindError&) {
    } catch (const PlantDomainError&) {
    }
    substitutions_ += 1;
    const Vector p = mean_map_.solve(ensemble_mean(ps_.slow_minus));
    maps_[i].warm_start(p);
    return p;
}

void TtsPredictor::pseudo_update(Matrix& members, const Matrix& outputs, const Vector& y) {
    if (!opts_.pseudo_update || members.cols() < 2) return;
    const Matrix A = perturbations(members), B = perturbations(outputs);
    const Matrix K = kalman_gain(sample_cov(A, B), sample_cov(B, B), model_->noise.R);
    members += K * (y.replicate(1, members.cols()) - outputs);
}

void TtsPredictor::predict_slow_step() {
    const NspModel& m = *model_;
    const Eigen::Index N = ps_.slow_plus.cols();
    ps_.l += 1;
    ps_.x1_bar_plus_prev = ps_.x1_bar_plus;
    const StreamKey key = stream_key(seed_, Stream::PredictSlow, static_cast<std::uint64_t>(ps_.l));
    ps_.slow_minus.resize(m.n_s, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        Rng r = key.member(i);
        const Vector x1 = ps_.slow_plus.col(i);
        ps_.slow_minus.col(i) =
            reduced_slow_step_at(m, x1, member_psi(i, x1), gaussian_draw(factors_.L1, r), iota_);
    }
    const Vector mean_minus = ensemble_mean(ps_.slow_minus);
    const Vector y_s = h0(m, mean_minus, mean_map_.solve(mean_minus));
    Matrix Y(m.n_y, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector x1 = ps_.slow_minus.col(i);
        Y.col(i) = h0(m, x1, member_psi(i, x1));
    }
    ps_.slow_plus = ps_.slow_minus;
    pseudo_update(ps_.slow_plus, Y, y_s);
    require_finite(ps_.slow_plus.reshaped(), "predicted x1");
    ps_.x1_bar_plus = ensemble_mean(ps_.slow_plus);
}

void TtsPredictor::predict_fast_step() {
    const NspModel& m = *model_;
    const Eigen::Index N = ps_.fast_plus.cols();
    const Vector x1 = opts_.fast_obs_previous_offset ? ps_.x1_bar_plus_prev : ps_.x1_bar_plus;
    const StreamKey key = stream_key(seed_, Stream::PredictFast, static_cast<std::uint64_t>(ps_.l));
    ps_.fast_minus.resize(m.n_f, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        Rng r = key.member(i);
        ps_.fast_minus.col(i) =
            boundary_layer_step(m, x1, ps_.fast_plus.col(i), gaussian_draw(factors_.L2, r), iota_);
    }
    const Vector y_f = h0(m, x1, ensemble_mean(ps_.fast_minus));
    Matrix Y(m.n_y, N);
    for (Eigen::Index i = 0; i < N; ++i) Y.col(i) = h0(m, x1, ps_.fast_minus.col(i));
    ps_.fast_plus = ps_.fast_minus;
    pseudo_update(ps_.fast_plus, Y, y_f);
    require_finite(ps_.fast_plus.reshaped(), "predicted x2");
    ps_.x2_bar_plus = ensemble_mean(ps_.fast_plus);
}

void TtsPredictor::advance() {
    predict_slow_step();
    predict_fast_step();
}

PredictionTrajectory predict_l_steps(TtsEnkf& filter, int l, PredictionOptions opts) {
    if (l < 0) throw InvalidInput("prediction length must be nonnegative");
    const NspModel& m = filter.model();
    PredictionTrajectory t = make_trajectory(m.n_s, m.n_f, l, filter.state().k);
    record(t, 0, filter.state().x1_hat, filter.state().x2_hat, spread(filter.state().slow),
           spread(filter.state().fast));
    TtsPredictor p(filter, opts);
    for (int j = 1; j <= l; ++j) {
        try {
            p.advance();
        } catch (const std::exception& e) {
            t.failed_offset = j;
            t.failure = e.what();
            truncate(t, j - 1);
            return t;
        }
        const auto& s = p.state();
        record(t, j, s.x1_bar_plus, s.x2_bar_plus, spread(s.slow_plus), spread(s.fast_plus));
    }
    return t;
}

PredictionTrajectory open_loop_predict(const Filter& filter, int l, PredictionOptions opts) {
    if (l < 0) throw InvalidInput("prediction length must be nonnegative");
    if (filter.kind() == FilterKind::TtsEnkf) throw InvalidInput("open_loop_predict needs an exact-EnKF or PF filter");
    const NspModel& m = filter.model();
    const FilterState& st = filter.state();
    const long anchor = st.k;
    PredictionTrajectory t = make_trajectory(m.n_s, m.n_f, l, anchor);
    record(t, 0, st.x1_hat, st.x2_hat, spread(st.slow), spread(st.fast));

    const std::uint64_t seed = prediction_seed(filter.seed(), anchor);
    const NoiseFactors& nf = filter.factors();
    const DiscreteStepper& stepper = filter.stepper();
    Matrix X1 = st.slow, X2 = st.fast;
    const Eigen::Index N = X1.cols();
    Vector w = Vector::Constant(N, 1.0 / static_cast<double>(N));
    const bool pf = filter.kind() == FilterKind::Pf;
    if (pf) w = static_cast<const ParticleFilter&>(filter).weights();

    for (int j = 1; j <= l; ++j) {
        try {
            const StreamKey ks = stream_key(seed, Stream::PredictSlow, j);
            const StreamKey kf = stream_key(seed, Stream::PredictFast, j);
            for (Eigen::Index i = 0; i < N; ++i) {
                Rng r1 = ks.member(i), r2 = kf.member(i);
                const Vector w1 = gaussian_draw(nf.L1, r1);
                const Vector w2 = gaussian_draw(nf.L2, r2);
                auto [a, b] = discrete_step(stepper, X1.col(i), X2.col(i), w1, w2);
                X1.col(i) = a;
                X2.col(i) = b;
            }
            if (!pf && opts.pseudo_update && N >= 2) {
                Matrix X(m.n(), N);
                X << X1, X2;
                Matrix Y(m.n_y, N);
                for (Eigen::Index i = 0; i < N; ++i) Y.col(i) = m.h(X1.col(i), X2.col(i), m.epsilon);
                const Vector xbar = ensemble_mean(X);
                const Vector y = m.h(xbar.head(m.n_s), xbar.tail(m.n_f), m.epsilon);
                const Matrix A = perturbations(X), B = perturbations(Y);
                const Matrix K = kalman_gain(sample_cov(A, B), sample_cov(B, B), m.noise.R);
                X += K * (y.replicate(1, N) - Y);
                X1 = X.topRows(m.n_s);
                X2 = X.bottomRows(m.n_f);
            }
        } catch (const std::exception& e) {
            t.failed_offset = j;
            t.failure = e.what();
            truncate(t, j - 1);
            return t;
        }
        record(t, j, X1 * w, X2 * w, spread(X1), spread(X2));
    }
    return t;
}

}  // namespace ttsenkf
