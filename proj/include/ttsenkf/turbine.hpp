#pragma once

#include "ttsenkf/model.hpp"

namespace ttsenkf {

/// Single-spool jet engine with turbine erosion. Fast states
/// x2 = (T_CC [K], S [rpm], P_CC [bar], P_NLT [bar]); slow states
/// x1 = (theta_eta_T, theta_m_T [kg/s]).
///
/// Compressor flow, nozzle flow, bypass ratio and the two turbine maps are
/// smooth surrogates around a design point; real engine maps are not used.
struct TurbineParams {
    // gas and fuel
    double cp = 1004.5, cv = 717.5, gamma = 1.4, R = 287.0;
    double Hu = 43e6, eta_cc = 0.98, m_f = 0.01;
    // intake and compressor
    double T_diffuser = 288.0, P_diffuser = 1.0, eta_c = 0.8, T_d = 288.0;
    double eta_mech = 0.99;
    // volumes and inertia
    double m_cc = 1.4, J = 0.005, V_cc = 0.2, V_m = 0.75, T_m = 700.0;
    // design point of the surrogates
    double S0 = 40000.0, P0 = 4.0, m_c0 = 1.0, beta0 = 0.2, eta_t0 = 0.85;
    double kappa = 0.5;  // compressor back-pressure sensitivity
    double speed_exponent = 2.0;
    // eta_T(S, beta) = eta_t0 (1 + a_s s + a_b b + a_ss s^2 + a_bb b^2), s = S/S0 - 1, b = beta/beta0 - 1
    double a_s = 0.05, a_b = -0.02, a_ss = -0.3, a_bb = -0.05;
    // m_T(S, beta) = m_t0 (1 + c_s s + c_b b + c_ss s^2 + c_bb b^2)
    double c_s = 0.1, c_b = 0.03, c_ss = -0.2, c_bb = -0.05;
    // fast dynamics are integrated in units where eps = time_scale is physical time
    double time_scale = 0.005;
    double epsilon = 0.005;  // erosion rate in k1, k2 and the model's eps
    // noise (g1 and g2 scale these by the design magnitudes)
    double q_slow = 0.0025, q_fast = 0.01, r_rel = 0.005;
};

/// k1(t, eps) = 1 - eps t
inline double erosion_k1(double t, double eps) { return 1.0 - eps * t; }
/// k2(t, eps) = 1 + 0.5 eps t
inline double erosion_k2(double t, double eps) { return 1.0 + 0.5 * eps * t; }

struct TurbineAlgebraics {
    double T_cc, P_cc, beta, P_nlt;
    double pressure_ratio;  // P_NLT / P_CC
};

class TurbinePlant {
public:
    explicit TurbinePlant(TurbineParams p = {});

    const TurbineParams& params() const { return p_; }

    // design quantities derived from the parameters
    double T_c0() const { return T_c0_; }
    double T_cc0() const { return T_cc0_; }
    double P_nlt0() const { return P_nlt0_; }
    double m_t0() const { return m_t0_; }
    double m_nozzle0() const { return m_n0_; }
    Vector design_x1() const;
    Vector design_x2() const;

    double compressor_temperature(double P_cc) const;
    double compressor_flow(double S, double P_cc) const;
    double turbine_flow(double theta_m, double T_cc, double P_cc) const;
    double nozzle_flow(double P_nlt) const;
    double bypass_ratio(double P_cc, double P_nlt) const;
    double turbine_temperature(double theta_eta, double T_cc, double P_cc, double P_nlt) const;

    /// Surrogate maps with analytic partials (d/dS, d/dbeta).
    double eta_map(double S, double beta, double* dS = nullptr, double* dbeta = nullptr) const;
    double mass_map(double S, double beta, double* dS = nullptr, double* dbeta = nullptr) const;

    /// The four engine ODEs in physical time.
    Vector fast_rates(const Vector& x1, const Vector& x2) const;

    /// Health dynamics and engine ODEs at time t, with k1, k2 evaluated at t.
    std::pair<Vector, Vector> derivatives(const Vector& x1, const Vector& x2, double t) const;

    /// (T_C, P_CC, S, P_NLT, T_T)
    Vector outputs(const Vector& x1, const Vector& x2) const;

    /// Closed-form reduced relations at constant component flows. P_CC is
    /// taken from the quasi-steady solution because its closed form is
    /// indeterminate once the T_CC relation holds.
    TurbineAlgebraics reduced_algebraics(double theta_eta, double theta_m) const;

    void check_domain(const Vector& x1, const Vector& x2) const;

    /// Singularly perturbed form with the given eps.
    NspModel model(double epsilon) const;
    NspModel model() const { return model(p_.epsilon); }

private:
    TurbineParams p_;
    double k_ = 0.0;  // (gamma - 1) / gamma
    double T_c0_ = 0.0, T_cc0_ = 0.0, P_nlt0_ = 0.0, m_t0_ = 0.0, m_n0_ = 0.0;
};

/// T_CC, beta and P_NLT/P_CC from the closed forms alone (P_cc and P_nlt
/// are left NaN).
TurbineAlgebraics turbine_closed_forms(const TurbineParams& p, double theta_eta, double theta_m);

/// The shipped "turbine-v1" parameter set.
TurbineParams turbine_v1();

}  // namespace ttsenkf
