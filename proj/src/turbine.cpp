#include "ttsenkf/turbine.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace ttsenkf {

namespace {

constexpr double kPa = 1e5;  // Pa per bar
constexpr double kRpm = std::numbers::pi / 30.0;

double compressor_temperature_of(const TurbineParams& p, double P_cc) {
    const double k = (p.gamma - 1.0) / p.gamma;
    return p.T_diffuser * (1.0 + (std::pow(P_cc / p.P_diffuser, k) - 1.0) / p.eta_c);
}

}  // namespace

TurbineParams turbine_v1() { return TurbineParams{}; }

TurbinePlant::TurbinePlant(TurbineParams p) : p_(p) {
    k_ = (p_.gamma - 1.0) / p_.gamma;
    T_c0_ = compressor_temperature(p_.P0);
    m_t0_ = p_.m_c0 + p_.m_f;
    T_cc0_ = (p_.cp * T_c0_ * p_.m_c0 + p_.eta_cc * p_.Hu * p_.m_f) / (p_.cp * m_t0_);
    const double X = p_.m_c0 * (T_c0_ - p_.T_d) / (p_.eta_mech * m_t0_ * T_cc0_ * p_.eta_t0);
    if (!(X < 1.0 && X > 0.0)) throw InvalidInput("turbine parameters give no feasible design point");
    P_nlt0_ = p_.P0 * std::pow(1.0 - X, 1.0 / k_);
    m_n0_ = m_t0_ + p_.beta0 / (1.0 + p_.beta0) * p_.m_c0;
}

Vector TurbinePlant::design_x1() const {
    Vector x(2);
    x << p_.eta_t0, m_t0_;
    return x;
}

Vector TurbinePlant::design_x2() const {
    Vector x(4);
    x << T_cc0_, p_.S0, p_.P0, P_nlt0_;
    return x;
}

double TurbinePlant::compressor_temperature(double P_cc) const { return compressor_temperature_of(p_, P_cc); }

double TurbinePlant::compressor_flow(double S, double P_cc) const {
    return p_.m_c0 * std::pow(S / p_.S0, p_.speed_exponent) * (1.0 - p_.kappa * (P_cc / p_.P0 - 1.0));
}

double TurbinePlant::turbine_flow(double theta_m, double T_cc, double P_cc) const {
    return theta_m * (P_cc / p_.P0) * std::sqrt(T_cc0_ / T_cc);
}

double TurbinePlant::nozzle_flow(double P_nlt) const { return m_n0_ * P_nlt / P_nlt0_; }

double TurbinePlant::bypass_ratio(double P_cc, double P_nlt) const {
    return p_.beta0 * (P_cc / P_nlt) * (P_nlt0_ / p_.P0);
}

double TurbinePlant::turbine_temperature(double theta_eta, double T_cc, double P_cc, double P_nlt) const {
    return T_cc * (1.0 - theta_eta * (1.0 - std::pow(P_nlt / P_cc, k_)));
}

double TurbinePlant::eta_map(double S, double beta, double* dS, double* dbeta) const {
    const double s = S / p_.S0 - 1.0, b = beta / p_.beta0 - 1.0;
    if (dS) *dS = p_.eta_t0 * (p_.a_s + 2.0 * p_.a_ss * s) / p_.S0;
    if (dbeta) *dbeta = p_.eta_t0 * (p_.a_b + 2.0 * p_.a_bb * b) / p_.beta0;
    return p_.eta_t0 * (1.0 + p_.a_s * s + p_.a_b * b + p_.a_ss * s * s + p_.a_bb * b * b);
}

double TurbinePlant::mass_map(double S, double beta, double* dS, double* dbeta) const {
    const double s = S / p_.S0 - 1.0, b = beta / p_.beta0 - 1.0;
    if (dS) *dS = m_t0_ * (p_.c_s + 2.0 * p_.c_ss * s) / p_.S0;
    if (dbeta) *dbeta = m_t0_ * (p_.c_b + 2.0 * p_.c_bb * b) / p_.beta0;
    return m_t0_ * (1.0 + p_.c_s * s + p_.c_b * b + p_.c_ss * s * s + p_.c_bb * b * b);
}

void TurbinePlant::check_domain(const Vector& x1, const Vector& x2) const {
    static const char* names[] = {"T_CC", "S", "P_CC", "P_NLT"};
    if (x1.size() != 2 || x2.size() != 4) throw InvalidInput("turbine state has the wrong dimension");
    for (int i = 0; i < 4; ++i)
        if (!(x2(i) > 0.0)) throw PlantDomainError(std::string("turbine: ") + names[i] + " must be positive");
    if (!(x1(0) > 0.0 && x1(0) <= 1.0)) throw PlantDomainError("turbine: theta_eta_T must lie in (0, 1]");
    if (!(x1(1) > 0.0)) throw PlantDomainError("turbine: theta_m_T must be positive");
}

Vector TurbinePlant::fast_rates(const Vector& x1, const Vector& x2) const {
    check_domain(x1, x2);
    const double te = x1(0), tm = x1(1);
    const double Tcc = x2(0), S = x2(1), P = x2(2), Pn = x2(3);
    const double Tc = compressor_temperature(P);
    const double mc = compressor_flow(S, P);
    const double mt = turbine_flow(tm, Tcc, P);
    const double Tt = turbine_temperature(te, Tcc, P, Pn);
    const double imbalance = mc + p_.m_f - mt;
    const double energy = (p_.cp * Tc * mc + p_.eta_cc * p_.Hu * p_.m_f - p_.cp * Tcc * mt) - p_.cv * Tcc * imbalance;
    const double beta = bypass_ratio(P, Pn);

    Vector d(4);
    d(0) = energy / (p_.cv * p_.m_cc);
    d(1) = (p_.eta_mech * mt * p_.cp * (Tcc - Tt) - mc * p_.cp * (Tc - p_.T_d)) / (p_.J * S * kRpm * kRpm);
    d(2) = P / Tcc * d(0) + p_.gamma * p_.R * Tcc / p_.V_cc * imbalance / kPa;
    d(3) = p_.R * p_.T_m / p_.V_m * (mt + beta / (beta + 1.0) * mc - nozzle_flow(Pn)) / kPa;
    return d;
}

namespace {

// k' map + k (dmap/dS S' + dmap/dbeta beta')
Vector health_rates(const TurbinePlant& tp, const Vector& x2, const Vector& x2dot, double k1, double k1dot,
                    double k2, double k2dot) {
    const double S = x2(1), P = x2(2), Pn = x2(3);
    const double beta = tp.bypass_ratio(P, Pn);
    const double beta_dot = beta / P * x2dot(2) - beta / Pn * x2dot(3);
    double eS, eB, mS, mB;
    const double eta = tp.eta_map(S, beta, &eS, &eB);
    const double mass = tp.mass_map(S, beta, &mS, &mB);
    Vector r(2);
    r(0) = k1dot * eta + k1 * (eS * x2dot(1) + eB * beta_dot);
    r(1) = k2dot * mass + k2 * (mS * x2dot(1) + mB * beta_dot);
    return r;
}

}  // namespace

std::pair<Vector, Vector> TurbinePlant::derivatives(const Vector& x1, const Vector& x2, double t) const {
    Vector x2dot = fast_rates(x1, x2);
    const double e = p_.epsilon;
    Vector x1dot = health_rates(*this, x2, x2dot, erosion_k1(t, e), -e, erosion_k2(t, e), 0.5 * e);
    return {std::move(x1dot), std::move(x2dot)};
}

Vector TurbinePlant::outputs(const Vector& x1, const Vector& x2) const {
    check_domain(x1, x2);
    Vector y(5);
    y << compressor_temperature(x2(2)), x2(2), x2(1), x2(3), turbine_temperature(x1(0), x2(0), x2(2), x2(3));
    return y;
}

TurbineAlgebraics turbine_closed_forms(const TurbineParams& p, double theta_eta, double theta_m) {
    if (!(theta_eta > 0.0)) throw AlgebraicDomainError("theta_eta_T must be positive");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double Tc = compressor_temperature_of(p, p.P0);
    const double mc = p.m_c0, mf = p.m_f;
    const double mn = p.m_c0 + p.m_f + p.beta0 / (1.0 + p.beta0) * p.m_c0;
    const double tiny = 1e-12;

    const double den_t = p.cv * (mc + mf - theta_m) + p.cp * theta_m;
    if (std::abs(den_t) < tiny) throw AlgebraicDomainError("T_CC denominator cv(m_C + m_f - theta_mT) + cp theta_mT is zero");
    const double Tcc = (p.cp * Tc * mc + p.eta_cc * p.Hu * mf) / den_t;

    const double den_b = mc - mn + theta_m;
    if (std::abs(den_b) < tiny) throw AlgebraicDomainError("beta denominator m_C - m_Nozzle + theta_mT is zero");
    const double beta = (mn - theta_m) / den_b;

    const double den_x = p.eta_mech * theta_m * Tcc * theta_eta;
    if (std::abs(den_x) < tiny) throw AlgebraicDomainError("P_NLT denominator eta_mech theta_mT T_CC theta_eta_T is zero");
    const double base = 1.0 - mc * (Tc - p.T_d) / den_x;
    if (!(base > 0.0)) throw AlgebraicDomainError("P_NLT/P_CC base 1 - X is not positive");
    const double ratio = std::pow(base, p.gamma / (p.gamma - 1.0));
    return {Tcc, nan, beta, nan, ratio};
}

TurbineAlgebraics TurbinePlant::reduced_algebraics(double theta_eta, double theta_m) const {
    TurbineAlgebraics a = turbine_closed_forms(p_, theta_eta, theta_m);
    Vector x1(2);
    x1 << theta_eta, theta_m;
    const NspModel m = model();
    a.P_cc = solve_quasi_steady(m, x1)(2);
    a.P_nlt = a.P_cc * a.pressure_ratio;
    return a;
}

NspModel TurbinePlant::model(double epsilon) const {
    NspModel m;
    m.name = "turbine";
    m.n_s = 2;
    m.n_f = 4;
    m.n_y = 5;
    m.q1 = 2;
    m.q2 = 4;
    m.epsilon = epsilon;

    const TurbinePlant tp = *this;
    const double ts = p_.time_scale;
    m.f2 = [tp, ts](const Vector& x1, const Vector& x2, double) -> Vector { return ts * tp.fast_rates(x1, x2); };
    // k1, k2 are recovered from the state (theta = k map), so the slow field
    // is autonomous. With eps = 0 the fast rate term is dropped: it multiplies
    // f2, which vanishes on the slow manifold.
    m.f1 = [tp, ts, epsilon](const Vector& x1, const Vector& x2, double eps) -> Vector {
        Vector x2dot = Vector::Zero(4);
        if (eps > 0.0) x2dot = (ts / eps) * tp.fast_rates(x1, x2);
        else tp.check_domain(x1, x2);
        const double beta = tp.bypass_ratio(x2(2), x2(3));
        const double k1 = x1(0) / tp.eta_map(x2(1), beta);
        const double k2 = x1(1) / tp.mass_map(x2(1), beta);
        return health_rates(tp, x2, x2dot, k1, -epsilon, k2, 0.5 * epsilon);
    };
    const Vector g1 = design_x1(), g2 = design_x2();
    m.g1 = [g1](const Vector&, const Vector&, double) -> Matrix { return g1.asDiagonal(); };
    m.g2 = [g2](const Vector&, const Vector&, double) -> Matrix { return g2.asDiagonal(); };
    m.h = [tp](const Vector& x1, const Vector& x2, double) -> Vector { return tp.outputs(x1, x2); };
    const Vector guess = design_x2();
    m.psi_guess = [guess](const Vector&) -> Vector { return guess; };
    m.check_domain = [tp](const Vector& x1, const Vector& x2) { tp.check_domain(x1, x2); };

    m.noise.Q1 = p_.q_slow * Matrix::Identity(2, 2);
    m.noise.Q2 = p_.q_fast * Matrix::Identity(4, 4);
    const Vector y0 = outputs(design_x1(), design_x2());
    m.noise.R = (p_.r_rel * y0).array().square().matrix().asDiagonal();
    m.validate();
    return m;
}

}  // namespace ttsenkf
