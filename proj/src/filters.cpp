#include "ttsenkf/filters.hpp"

#include <cmath>
#include <numeric>

namespace ttsenkf {

std::string to_string(FilterKind k) {
    switch (k) {
        case FilterKind::TtsEnkf: return "tts-enkf";
        case FilterKind::ExactEnkf: return "exact-enkf";
        case FilterKind::Pf: return "pf";
    }
    return "?";
}

FilterKind filter_kind_from_string(const std::string& s) {
    if (s == "tts-enkf") return FilterKind::TtsEnkf;
    if (s == "exact-enkf") return FilterKind::ExactEnkf;
    if (s == "pf") return FilterKind::Pf;
    throw ConfigError("unknown filter kind '" + s + "' (expected tts-enkf, exact-enkf or pf)");
}

void Diagnostics::flag(long step, const std::string& why) {
    if (diverged) return;
    diverged = true;
    diverged_step = step;
    reason = why;
}

void Diagnostics::observe(long step, double innovation_norm, double condition, const FilterOptions& opts) {
    last_innovation = innovation_norm;
    last_condition = condition;
    if (!std::isfinite(innovation_norm)) return flag(step, "non-finite innovation");
    if (condition > opts.condition_limit) return flag(step, "ill-conditioned innovation covariance");
    if (initial_innovation < 0.0) {
        if (innovation_norm > 0.0) initial_innovation = innovation_norm;
        return;
    }
    if (innovation_norm > opts.innovation_growth * initial_innovation) {
        if (++strikes >= opts.innovation_strikes) flag(step, "innovation growth");
    } else {
        strikes = 0;
    }
}

namespace {

Vector nominal_spread(const Vector& x0) {
    const double big = x0.size() ? x0.cwiseAbs().maxCoeff() : 0.0;
    Vector s(x0.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        const double mag = x0(i) != 0.0 ? std::abs(x0(i)) : big;
        s(i) = 0.01 * mag;
    }
    return s;
}

Matrix stack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
}

Vector stack(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

Matrix repeat(const Vector& y, Eigen::Index N) { return y.replicate(1, N); }

}  // namespace

Matrix initial_ensemble(const FilterInit& init, int N, std::uint64_t seed) {
    const Vector x0 = stack(init.x1, init.x2);
    Vector mean = x0;
    if (init.bias.size()) {
        if (init.bias.size() != x0.size()) throw InvalidInput("initial bias has the wrong dimension");
        mean += init.bias;
    }
    Matrix P0 = init.P0;
    if (P0.size() == 0) P0 = nominal_spread(x0).array().square().matrix().asDiagonal();
    if (P0.rows() != x0.size()) throw InvalidInput("initial covariance has the wrong dimension");
    const Matrix L = covariance_factor(P0);
    const StreamKey key = stream_key(seed, Stream::Init, 0);
    Matrix E(x0.size(), N);
    for (int i = 0; i < N; ++i) {
        Rng rng = key.member(static_cast<std::uint64_t>(i));
        E.col(i) = mean + gaussian_draw(L, rng);
    }
    return E;
}

Filter::Filter(const NspModel& model, double iota, int N, std::uint64_t seed, FilterOptions opts)
    : model_(&model), stepper_(model, iota), factors_(model.noise), N_(N), seed_(seed), opts_(opts) {
    if (N < 1) throw InvalidInput("ensemble size must be positive");
}

Vector Filter::estimate() const { return stack(st_.x1_hat, st_.x2_hat); }

// ---------------------------------------------------------------- exact EnKF

ExactEnkf::ExactEnkf(const NspModel& model, double iota, int N, std::uint64_t seed, const FilterInit& init,
                     FilterOptions opts)
    : Filter(model, iota, N, seed, opts) {
    if (N < 2) throw InvalidInput("N >= 2 required for the EnKF");
    const Matrix E = initial_ensemble(init, N, seed);
    st_.slow = E.topRows(model.n_s);
    st_.fast = E.bottomRows(model.n_f);
    st_.x1_hat = ensemble_mean(st_.slow);
    st_.x2_hat = ensemble_mean(st_.fast);
}

void ExactEnkf::forecast() {
    const StreamKey ks = stream_key(seed_, Stream::Slow, st_.k);
    const StreamKey kf = stream_key(seed_, Stream::Fast, st_.k);
    for (int i = 0; i < N_; ++i) {
        Rng r1 = ks.member(i), r2 = kf.member(i);
        const Vector w1 = gaussian_draw(factors_.L1, r1);
        const Vector w2 = gaussian_draw(factors_.L2, r2);
        auto [a, b] = discrete_step(stepper_, st_.slow.col(i), st_.fast.col(i), w1, w2);
        st_.slow.col(i) = a;
        st_.fast.col(i) = b;
    }
}

void ExactEnkf::analysis(const Vector& y) {
    const NspModel& m = *model_;
    Matrix Y(m.n_y, N_);
    for (int i = 0; i < N_; ++i) Y.col(i) = m.h(st_.slow.col(i), st_.fast.col(i), m.epsilon);
    const Matrix X = stack(st_.slow, st_.fast);
    const Matrix A = perturbations(X), B = perturbations(Y);
    const Matrix Pxy = sample_cov(A, B), Pyy = sample_cov(B, B);
    const double cond = innovation_condition(Pyy, m.noise.R);
    const Matrix K = kalman_gain(Pxy, Pyy, m.noise.R);
    const Matrix D = opts_.perturbed_observations
                         ? perturb_observations(y, m.noise.R, N_, stream_key(seed_, Stream::Observation, st_.k))
                         : repeat(y, N_);
    const Matrix Xa = X + K * (D - Y);
    if (!Xa.allFinite()) throw NumericalError("non-finite analysis ensemble");
    st_.slow = Xa.topRows(m.n_s);
    st_.fast = Xa.bottomRows(m.n_f);
    st_.K_slow = K.topRows(m.n_s);
    st_.K_fast = K.bottomRows(m.n_f);
    st_.x1_hat = ensemble_mean(st_.slow);
    st_.x2_hat = ensemble_mean(st_.fast);
    st_.diag.observe(st_.k, (y - ensemble_mean(Y)).norm(), cond, opts_);
}

void ExactEnkf::step(const Vector& y) {
    if (st_.diag.diverged) return;
    const FilterState backup = st_;
    st_.k += 1;
    try {
        forecast();
        analysis(y);
    } catch (const std::exception& e) {
        Diagnostics d = st_.diag;
        const long k = st_.k;
        st_ = backup;
        st_.k = k;
        st_.diag = d;
        st_.diag.flag(k, e.what());
    }
}

// ---------------------------------------------------------------- TTS-EnKF

TtsEnkf::TtsEnkf(const NspModel& model, double iota, int N, std::uint64_t seed, const FilterInit& init,
                 FilterOptions opts)
    : Filter(model, iota, N, seed, opts), mean_map_(model) {
    if (N < 2) throw InvalidInput("N >= 2 required for the EnKF");
    const Matrix E = initial_ensemble(init, N, seed);
    st_.slow = E.topRows(model.n_s);
    st_.fast = E.bottomRows(model.n_f);
    st_.x1_hat = ensemble_mean(st_.slow);
    st_.x2_hat = ensemble_mean(st_.fast);
    maps_.reserve(N);
    for (int i = 0; i < N; ++i) maps_.emplace_back(model);
    psi_prior_ = Matrix::Zero(model.n_f, N);
}

Vector TtsEnkf::member_psi(Eigen::Index i, const Vector& x1) {
    try {
        return maps_[i].solve(x1);
    } catch (const RootFindError&) {
    } catch (const PlantDomainError&) {
    }
    // Fall back to the ensemble mean's psi0.
    st_.diag.substitutions += 1;
    if (!mean_psi_valid_) {
        mean_psi_ = mean_map_.solve(ensemble_mean(st_.slow));
        mean_psi_valid_ = true;
    }
    maps_[i].warm_start(mean_psi_);
    return mean_psi_;
}

void TtsEnkf::slow_time_update() {
    const NspModel& m = *model_;
    const StreamKey ks = stream_key(seed_, Stream::Slow, st_.k);
    mean_psi_valid_ = false;
    x1_prior_mean_ = ensemble_mean(st_.slow);
    Matrix next(m.n_s, N_);
    for (int i = 0; i < N_; ++i) {
        const Vector x1 = st_.slow.col(i);
        const Vector p = member_psi(i, x1);
        psi_prior_.col(i) = p;
        Rng r = ks.member(i);
        next.col(i) = reduced_slow_step_at(m, x1, p, gaussian_draw(factors_.L1, r), stepper_.iota);
    }
    st_.slow = std::move(next);
    X1_pert_ = perturbations(st_.slow);
}

void TtsEnkf::slow_measurement_update(const Vector& y) {
    const NspModel& m = *model_;
    Matrix Y(m.n_y, N_);
    for (int i = 0; i < N_; ++i) {
        const Vector x1 = st_.slow.col(i);
        const Vector p = opts_.psi_at_prior ? Vector(psi_prior_.col(i)) : member_psi(i, x1);
        Y.col(i) = h0(m, x1, p);
    }
    if (X1_pert_.cols() != N_) X1_pert_ = perturbations(st_.slow);
    const Matrix B = perturbations(Y);
    const Matrix Pxy = sample_cov(X1_pert_, B), Pyy = sample_cov(B, B);
    const double cond = innovation_condition(Pyy, m.noise.R);
    st_.K_slow = kalman_gain(Pxy, Pyy, m.noise.R);
    const Matrix D = opts_.perturbed_observations
                         ? perturb_observations(y, m.noise.R, N_, stream_key(seed_, Stream::Observation, st_.k))
                         : repeat(y, N_);
    st_.slow += st_.K_slow * (D - Y);
    if (!st_.slow.allFinite()) throw NumericalError("non-finite slow ensemble");
    st_.x1_hat = ensemble_mean(st_.slow);
    st_.diag.observe(st_.k, (y - ensemble_mean(Y)).norm(), cond, opts_);
}

void TtsEnkf::fast_time_update() {
    const NspModel& m = *model_;
    const Vector frozen = opts_.freeze == FreezePoint::Posterior || x1_prior_mean_.size() == 0 ? st_.x1_hat
                                                                                               : x1_prior_mean_;
    const StreamKey kf = stream_key(seed_, Stream::Fast, st_.k);
    for (int i = 0; i < N_; ++i) {
        Rng r = kf.member(i);
        st_.fast.col(i) =
            boundary_layer_step(m, frozen, st_.fast.col(i), gaussian_draw(factors_.L2, r), stepper_.iota);
    }
}

void TtsEnkf::fast_measurement_update(const Vector& y) {
    const NspModel& m = *model_;
    Matrix Y(m.n_y, N_);
    for (int i = 0; i < N_; ++i) Y.col(i) = h0(m, st_.x1_hat, st_.fast.col(i));
    const Matrix A = perturbations(st_.fast), B = perturbations(Y);
    const Matrix Pxy = sample_cov(A, B), Pyy = sample_cov(B, B);
    const double cond = innovation_condition(Pyy, m.noise.R);
    st_.K_fast = kalman_gain(Pxy, Pyy, m.noise.R);
    const Matrix D = opts_.perturbed_observations
                         ? perturb_observations(y, m.noise.R, N_, stream_key(seed_, Stream::ObservationFast, st_.k))
                         : repeat(y, N_);
    st_.fast += st_.K_fast * (D - Y);
    if (!st_.fast.allFinite()) throw NumericalError("non-finite fast ensemble");
    st_.x2_hat = ensemble_mean(st_.fast);
    if (cond > opts_.condition_limit) st_.diag.flag(st_.k, "ill-conditioned fast innovation covariance");
}

void TtsEnkf::step(const Vector& y) {
    if (st_.diag.diverged) return;
    const FilterState backup = st_;
    st_.k += 1;
    try {
        slow_time_update();
        slow_measurement_update(y);
        fast_time_update();
        fast_measurement_update(y);
    } catch (const std::exception& e) {
        Diagnostics d = st_.diag;
        const long k = st_.k;
        st_ = backup;
        st_.k = k;
        st_.diag = d;
        st_.diag.flag(k, e.what());
    }
}

// ---------------------------------------------------------------- particle filter

Vector normalize_weights(const Vector& prior, const Vector& loglik) {
    if (prior.size() != loglik.size()) throw InvalidInput("normalize_weights: size mismatch");
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < loglik.size(); ++i)
        if (prior(i) > 0.0 && loglik(i) > top) top = loglik(i);
    if (!std::isfinite(top)) throw DegeneracyError("particle weights degenerate: no finite likelihood");
    Vector w(prior.size());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w(i) = prior(i) > 0.0 ? prior(i) * std::exp(loglik(i) - top) : 0.0;
        if (!std::isfinite(w(i))) w(i) = 0.0;
        sum += w(i);
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) throw DegeneracyError("particle weights degenerate: all zero");
    return w / sum;
}

double effective_sample_size(const Vector& w) { return 1.0 / w.squaredNorm(); }

std::vector<Eigen::Index> systematic_resample(const Vector& w, double u0) {
    const Eigen::Index N = w.size();
    std::vector<Eigen::Index> idx(N);
    double c = w(0);
    Eigen::Index j = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double u = (u0 + static_cast<double>(i)) / static_cast<double>(N);
        while (u > c && j < N - 1) c += w(++j);
        idx[i] = j;
    }
    return idx;
}

ParticleFilter::ParticleFilter(const NspModel& model, double iota, int N, std::uint64_t seed,
                               const FilterInit& init, FilterOptions opts)
    : Filter(model, iota, N, seed, opts), R_llt_(model.noise.R) {
    const Matrix E = initial_ensemble(init, N, seed);
    st_.slow = E.topRows(model.n_s);
    st_.fast = E.bottomRows(model.n_f);
    w_ = Vector::Constant(N, 1.0 / N);
    st_.x1_hat = ensemble_mean(st_.slow);
    st_.x2_hat = ensemble_mean(st_.fast);
}

void ParticleFilter::step(const Vector& y) {
    if (st_.diag.diverged) return;
    const FilterState backup = st_;
    const Vector wbackup = w_;
    st_.k += 1;
    const NspModel& m = *model_;
    try {
        const StreamKey ks = stream_key(seed_, Stream::Slow, st_.k);
        const StreamKey kf = stream_key(seed_, Stream::Fast, st_.k);
        Vector loglik(N_);
        Vector ybar = Vector::Zero(m.n_y);
        for (int i = 0; i < N_; ++i) {
            Rng r1 = ks.member(i), r2 = kf.member(i);
            const Vector w1 = gaussian_draw(factors_.L1, r1);
            const Vector w2 = gaussian_draw(factors_.L2, r2);
            auto [a, b] = discrete_step(stepper_, st_.slow.col(i), st_.fast.col(i), w1, w2);
            st_.slow.col(i) = a;
            st_.fast.col(i) = b;
            const Vector r = y - m.h(a, b, m.epsilon);
            loglik(i) = -0.5 * r.dot(R_llt_.solve(r));
            ybar += w_(i) * (y - r);
        }
        w_ = normalize_weights(w_, loglik);
        st_.x1_hat = st_.slow * w_;
        st_.x2_hat = st_.fast * w_;
        st_.diag.observe(st_.k, (y - ybar).norm(), 1.0, opts_);

        if (effective_sample_size(w_) < opts_.resample_fraction * N_) {
            Rng ru = stream_key(seed_, Stream::Resample, st_.k).member(0);
            const auto idx = systematic_resample(w_, ru.uniform());
            Matrix X = stack(st_.slow, st_.fast);
            Matrix Xr(X.rows(), N_);
            for (int i = 0; i < N_; ++i) Xr.col(i) = X.col(idx[i]);
            if (opts_.regularize && N_ >= 2) {
                const Matrix A = perturbations(Xr);
                const Matrix L = covariance_factor(sample_cov(A, A));
                const double n = static_cast<double>(Xr.rows());
                const double bw =
                    std::min(1.0, opts_.jitter_scale * std::pow(4.0 / (N_ * (n + 2.0)), 1.0 / (n + 4.0)));
                // shrink toward the mean so the kernel keeps the ensemble covariance
                const double a = std::sqrt(1.0 - bw * bw);
                const Vector mean = ensemble_mean(Xr);
                const StreamKey kj = stream_key(seed_, Stream::Jitter, st_.k);
                for (int i = 0; i < N_; ++i) {
                    Rng rj = kj.member(i);
                    Xr.col(i) = a * Xr.col(i) + (1.0 - a) * mean + bw * gaussian_draw(L, rj);
                }
            }
            st_.slow = Xr.topRows(m.n_s);
            st_.fast = Xr.bottomRows(m.n_f);
            w_ = Vector::Constant(N_, 1.0 / N_);
            st_.diag.resamples += 1;
        }
        if (!st_.slow.allFinite() || !st_.fast.allFinite()) throw NumericalError("non-finite particles");
    } catch (const DegeneracyError& e) {
        Diagnostics d = st_.diag;
        const long k = st_.k;
        st_ = backup;
        w_ = wbackup;
        st_.k = k;
        st_.diag = d;
        st_.diag.degenerate = true;
        st_.diag.flag(k, e.what());
    } catch (const std::exception& e) {
        Diagnostics d = st_.diag;
        const long k = st_.k;
        st_ = backup;
        w_ = wbackup;
        st_.k = k;
        st_.diag = d;
        st_.diag.flag(k, e.what());
    }
}

std::unique_ptr<Filter> make_filter(FilterKind kind, const NspModel& model, double iota, int N, std::uint64_t seed,
                                    const FilterInit& init, FilterOptions opts) {
    switch (kind) {
        case FilterKind::TtsEnkf: return std::make_unique<TtsEnkf>(model, iota, N, seed, init, opts);
        case FilterKind::ExactEnkf: return std::make_unique<ExactEnkf>(model, iota, N, seed, init, opts);
        case FilterKind::Pf: return std::make_unique<ParticleFilter>(model, iota, N, seed, init, opts);
    }
    throw InvalidInput("unknown filter kind");
}

}  // namespace ttsenkf
