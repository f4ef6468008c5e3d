#pragma once

#include <functional>

#include "ttsenkf/linear_plant.hpp"

namespace testutil {

using ttsenkf::Matrix;
using ttsenkf::Vector;

using Scalar1 = std::function<double(double x1, double x2)>;

// One slow, one fast, one output; unit diffusions; y = x1 + x2 unless given.
inline ttsenkf::NspModel scalar_model(Scalar1 f1, Scalar1 f2, double eps = 0.1, double q1 = 0.0, double q2 = 0.0,
                                      double r = 1.0, Scalar1 h = nullptr) {
    ttsenkf::NspModel m;
    m.name = "scalar";
    m.n_s = m.n_f = m.n_y = m.q1 = m.q2 = 1;
    m.epsilon = eps;
    m.f1 = [f1](const Vector& a, const Vector& b, double) { return Vector::Constant(1, f1(a(0), b(0))); };
    m.f2 = [f2](const Vector& a, const Vector& b, double) { return Vector::Constant(1, f2(a(0), b(0))); };
    m.g1 = [](const Vector&, const Vector&, double) -> Matrix { return Matrix::Identity(1, 1); };
    m.g2 = [](const Vector&, const Vector&, double) -> Matrix { return Matrix::Identity(1, 1); };
    if (!h) h = [](double a, double b) { return a + b; };
    m.h = [h](const Vector& a, const Vector& b, double) { return Vector::Constant(1, h(a(0), b(0))); };
    m.noise.Q1 = Matrix::Constant(1, 1, q1);
    m.noise.Q2 = Matrix::Constant(1, 1, q2);
    m.noise.R = Matrix::Constant(1, 1, r);
    m.validate();
    return m;
}

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

inline Vector v1(double x) { return Vector::Constant(1, x); }

// Classical Kalman filter on the Euler-discretized linear plant, noise
// entering as iota * w. Column k holds the posterior mean after y_k.
inline Matrix kalman_reference(const ttsenkf::LinearTtsPlant& p, double iota, const Matrix& Y, const Vector& m0,
                               const Matrix& P0) {
    const auto ns = p.A11.rows(), nf = p.A22.rows(), n = ns + nf;
    Matrix A(n, n);
    A << p.A11, p.A12, p.A21 / p.epsilon, p.A22 / p.epsilon;
    const Matrix F = Matrix::Identity(n, n) + iota * A;
    Matrix Q = Matrix::Zero(n, n);
    Q.topLeftCorner(ns, ns) = p.noise.Q1;
    Q.bottomRightCorner(nf, nf) = p.noise.Q2;
    Q *= iota * iota;
    Matrix out(n, Y.cols());
    out.col(0) = m0;
    Vector m = m0;
    Matrix P = P0;
    for (Eigen::Index k = 1; k < Y.cols(); ++k) {
        m = F * m;
        P = F * P * F.transpose() + Q;
        const Matrix S = p.C * P * p.C.transpose() + p.noise.R;
        const Matrix K = P * p.C.transpose() * S.inverse();
        m += K * (Y.col(k) - p.C * m);
        P = (Matrix::Identity(n, n) - K * p.C) * P;
        out.col(k) = m;
    }
    return out;
}

}  // namespace testutil
