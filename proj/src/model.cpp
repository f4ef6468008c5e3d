#include "ttsenkf/model.hpp"

#include <cmath>
#include <string>

namespace ttsenkf {

namespace {

void check_square(const Matrix& m, const char* label) {
    if (m.rows() != m.cols()) throw InvalidInput(std::string(label) + " must be square");
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

void NoiseSpec::validate() const {
    check_square(Q1, "Q1");
    check_square(Q2, "Q2");
    check_square(R, "R");
    covariance_factor(Q1);
    covariance_factor(Q2);
    Eigen::LLT<Matrix> llt((R + R.transpose()) / 2.0);
    if (R.rows() == 0 || llt.info() != Eigen::Success) throw InvalidInput("R must be positive definite");
}

NoiseFactors::NoiseFactors(const NoiseSpec& n)
    : L1(covariance_factor(n.Q1)), L2(covariance_factor(n.Q2)), LR(covariance_factor(n.R)) {}

void NspModel::validate() const {
    if (n_s < 1 || n_f < 1 || n_y < 1) throw InvalidInput(name + ": dimensions must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidInput(name + ": 0 < epsilon < 1 required");
    if (!f1 || !f2 || !g1 || !g2 || !h) throw InvalidInput(name + ": missing model function");
    if (noise.Q1.rows() != q1 || noise.Q2.rows() != q2 || noise.R.rows() != n_y)
        throw InvalidInput(name + ": noise covariance dimensions do not match the model");
    noise.validate();
    if (origin_equilibrium) {
        const Vector z1 = Vector::Zero(n_s), z2 = Vector::Zero(n_f);
        if (inf_norm(f1(z1, z2, epsilon)) > 1e-12 || inf_norm(f2(z1, z2, epsilon)) > 1e-12)
            throw InvalidInput(name + ": drift does not vanish at the origin");
    }
}

DiscreteStepper::DiscreteStepper(const NspModel& m, double iota_) : model(&m), iota(iota_) {
    if (!(iota > 0.0) || !std::isfinite(iota)) throw InvalidInput("sampling period iota must be positive");
}

void require_finite(const Vector& v, const char* label) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v(i)))
            throw NumericalError(std::string("numerical overflow in ") + label + "[" + std::to_string(i) + "]");
}

std::pair<Vector, Vector> discrete_step(const DiscreteStepper& st, const Vector& x1, const Vector& x2,
                                        const Vector& w1, const Vector& w2) {
    const NspModel& m = *st.model;
    const double eps = m.epsilon;
    Vector a = x1 + st.iota * (m.f1(x1, x2, eps) + m.g1(x1, x2, eps) * w1);
    Vector b = x2 + (st.iota / eps) * m.f2(x1, x2, eps) + st.iota * (m.g2(x1, x2, eps) * w2);
    require_finite(a, "x1");
    require_finite(b, "x2");
    return {std::move(a), std::move(b)};
}

std::pair<Vector, Vector> discrete_step_substepped(const DiscreteStepper& st, const Vector& x1, const Vector& x2,
                                                   const Vector& w1, const Vector& w2, int substeps) {
    if (substeps <= 1) return discrete_step(st, x1, x2, w1, w2);
    DiscreteStepper inner(*st.model, st.iota / substeps);
    std::pair<Vector, Vector> x{x1, x2};
    for (int s = 0; s < substeps; ++s) x = discrete_step(inner, x.first, x.second, w1, w2);
    return x;
}

QuasiSteadyMap::QuasiSteadyMap(const NspModel& model, Options opts) : model_(&model), opts_(opts) {}

Matrix QuasiSteadyMap::jacobian(const Vector& x1, const Vector& x2) const {
    if (model_->df2_dx2) return model_->df2_dx2(x1, x2, 0.0);
    const Vector f0 = model_->f2(x1, x2, 0.0);
    Matrix J(f0.size(), x2.size());
    Vector xp = x2;
    for (Eigen::Index j = 0; j < x2.size(); ++j) {
        const double h = 1e-6 * (1.0 + std::abs(x2(j)));
        xp(j) = x2(j) + h;
        J.col(j) = (model_->f2(x1, xp, 0.0) - f0) / h;
        xp(j) = x2(j);
    }
    return J;
}

Vector QuasiSteadyMap::solve(const Vector& x1) {
    const NspModel& m = *model_;
    Vector x;
    if (has_cache_)
        x = cache_;
    else if (m.psi_guess)
        x = m.psi_guess(x1);
    else
        x = Vector::Zero(m.n_f);

    Vector f = m.f2(x1, x, 0.0);
    double res = inf_norm(f);
    last_iterations_ = 0;
    for (int it = 0; it <= opts_.max_iterations; ++it) {
        if (std::isfinite(res) && res <= opts_.tolerance * (1.0 + inf_norm(x))) {
            last_iterations_ = it;
            last_residual_ = res;
            cache_ = x;
            has_cache_ = true;
            return x;
        }
        if (it == opts_.max_iterations || !std::isfinite(res)) break;

        Eigen::PartialPivLU<Matrix> lu(jacobian(x1, x));
        const Vector dx = lu.solve(-f);
        if (!dx.allFinite()) break;
        // Backtrack on the residual; plant domain errors count as a failed trial.
        double lambda = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, lambda *= 0.5) {
            const Vector xt = x + lambda * dx;
            Vector ft;
            try {
                ft = m.f2(x1, xt, 0.0);
            } catch (const PlantDomainError&) {
                continue;
            }
            const double rt = inf_norm(ft);
            if (std::isfinite(rt) && (rt < res || ls == 29)) {
                x = xt;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    last_residual_ = res;
    throw RootFindError("psi0 solve did not converge, residual " + std::to_string(res), res);
}

Vector solve_quasi_steady(const NspModel& model, const Vector& x1) {
    QuasiSteadyMap q(model);
    return q.solve(x1);
}

Vector reduced_slow_step_at(const NspModel& m, const Vector& x1, const Vector& psi0, const Vector& w1,
                            double iota) {
    Vector out = x1 + iota * m.f1(x1, psi0, 0.0) + iota * (m.g1(x1, psi0, 0.0) * w1);
    require_finite(out, "x1");
    return out;
}

Vector reduced_slow_step(const NspModel& m, QuasiSteadyMap& psi, const Vector& x1, const Vector& w1, double iota,
                         Vector* psi_out) {
    const Vector p = psi.solve(x1);
    if (psi_out) *psi_out = p;
    return reduced_slow_step_at(m, x1, p, w1, iota);
}

Vector boundary_layer_step(const NspModel& m, const Vector& x1_frozen, const Vector& x2, const Vector& w2,
                           double iota) {
    Vector out = x2 + iota * m.f2(x1_frozen, x2, 0.0) + iota * (m.g2(x1_frozen, x2, 0.0) * w2);
    require_finite(out, "x2");
    return out;
}

}  // namespace ttsenkf
