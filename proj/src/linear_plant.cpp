#include "ttsenkf/linear_plant.hpp"

#include <complex>

namespace ttsenkf {

void LinearTtsPlant::validate() const {
    const auto ns = A11.rows(), nf = A22.rows();
    if (A11.cols() != ns || A12.rows() != ns || A12.cols() != nf || A21.rows() != nf || A21.cols() != ns ||
        A22.cols() != nf || C.cols() != ns + nf)
        throw InvalidInput("linear plant: inconsistent matrix shapes");
    Eigen::EigenSolver<Matrix> es(A22);
    for (Eigen::Index i = 0; i < nf; ++i)
        if (!(es.eigenvalues()(i).real() < 0.0)) throw InvalidInput("linear plant: A22 must be Hurwitz");
    if (x1_0.size() != ns || x2_0.size() != nf) throw InvalidInput("linear plant: initial state size");
}

Vector LinearTtsPlant::psi0(const Vector& x1) const { return -A22.partialPivLu().solve(A21 * x1); }

Matrix LinearTtsPlant::reduced_matrix() const { return A11 - A12 * A22.partialPivLu().solve(A21); }

NspModel LinearTtsPlant::model() const {
    validate();
    NspModel m;
    m.name = "linear";
    m.n_s = static_cast<int>(A11.rows());
    m.n_f = static_cast<int>(A22.rows());
    m.n_y = static_cast<int>(C.rows());
    m.q1 = m.n_s;
    m.q2 = m.n_f;
    m.epsilon = epsilon;
    m.noise = noise;
    m.origin_equilibrium = true;

    const Matrix a11 = A11, a12 = A12, a21 = A21, a22 = A22, c = C;
    const int ns = m.n_s, nf = m.n_f;
    m.f1 = [a11, a12](const Vector& x1, const Vector& x2, double) -> Vector { return a11 * x1 + a12 * x2; };
    m.f2 = [a21, a22](const Vector& x1, const Vector& x2, double) -> Vector { return a21 * x1 + a22 * x2; };
    m.g1 = [ns](const Vector&, const Vector&, double) -> Matrix { return Matrix::Identity(ns, ns); };
    m.g2 = [nf](const Vector&, const Vector&, double) -> Matrix { return Matrix::Identity(nf, nf); };
    m.h = [c, ns, nf](const Vector& x1, const Vector& x2, double) -> Vector {
        return c.leftCols(ns) * x1 + c.rightCols(nf) * x2;
    };
    m.df2_dx2 = [a22](const Vector&, const Vector&, double) -> Matrix { return a22; };
    m.validate();
    return m;
}

LinearTtsPlant default_linear_plant(double epsilon) {
    LinearTtsPlant p;
    p.A11.resize(2, 2);
    p.A11 << -0.7, -0.15, -0.2, -0.75;
    p.A12 = 0.5 * Matrix::Identity(2, 2);
    p.A21.resize(2, 2);
    p.A21 << 1.0, 0.5, 0.5, 1.0;
    p.A22 = -Matrix::Identity(2, 2);
    p.C.resize(3, 4);
    p.C << 1, 0, 0, 0,
           0, 0, 1, 0,
           0, 1, 0, 1;
    p.epsilon = epsilon;
    p.noise.Q1 = Matrix::Identity(2, 2);
    p.noise.Q2 = 100.0 * Matrix::Identity(2, 2);
    p.noise.R = 1e-4 * Matrix::Identity(3, 3);
    p.x1_0 = Vector(2);
    p.x1_0 << 1.0, 1.0;
    p.x2_0 = p.psi0(p.x1_0);
    return p;
}

}  // namespace ttsenkf
