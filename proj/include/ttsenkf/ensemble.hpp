#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ttsenkf/errors.hpp"
#include "ttsenkf/random.hpp"

namespace ttsenkf {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Vec<double>;
using Matrix = Mat<double>;

// Ensembles are stored column-wise: an n x N matrix holds N members.

template <typename Derived>
Vec<typename Derived::Scalar> ensemble_mean(const Eigen::MatrixBase<Derived>& E) {
    using Scalar = typename Derived::Scalar;
    if (E.cols() == 0) throw InvalidInput("ensemble_mean: empty ensemble");
    // Shifted by the first member: identical members give that member exactly.
    Vec<Scalar> d = Vec<Scalar>::Zero(E.rows());
    for (Eigen::Index j = 1; j < E.cols(); ++j) d += E.col(j) - E.col(0);
    return E.col(0) + d / static_cast<Scalar>(E.cols());
}

/// Columns (x_i - mean) / sqrt(N - 1).
template <typename Derived>
Mat<typename Derived::Scalar> perturbations(const Eigen::MatrixBase<Derived>& E) {
    using Scalar = typename Derived::Scalar;
    if (E.cols() < 2) throw InvalidInput("perturbations: need N >= 2 members");
    // Deviations from the first member, then from their mean. A constant
    // shift cancels in the first subtraction.
    const Mat<Scalar> D = E.colwise() - E.col(0);
    Vec<Scalar> d = Vec<Scalar>::Zero(E.rows());
    for (Eigen::Index j = 1; j < E.cols(); ++j) d += D.col(j);
    d /= static_cast<Scalar>(E.cols());
    const Scalar s = std::sqrt(static_cast<Scalar>(E.cols() - 1));
    return (D.colwise() - d) / s;
}

template <typename DA, typename DB>
Mat<typename DA::Scalar> sample_cov(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
    if (A.cols() != B.cols())
        throw InvalidInput("sample_cov: member counts differ (" + std::to_string(A.cols()) + " vs " +
                           std::to_string(B.cols()) + ")");
    // Plain member-order sums: sample_cov(A, A) comes out exactly symmetric.
    using Scalar = typename DA::Scalar;
    Mat<Scalar> C(A.rows(), B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index k = 0; k < B.rows(); ++k) {
            Scalar acc(0);
            for (Eigen::Index j = 0; j < A.cols(); ++j) acc += A(i, j) * B(k, j);
            C(i, k) = acc;
        }
    return C;
}

/// 2-norm condition number of Pyy + R.
template <typename DY, typename DR>
typename DY::Scalar innovation_condition(const Eigen::MatrixBase<DY>& Pyy, const Eigen::MatrixBase<DR>& R) {
    using Scalar = typename DY::Scalar;
    const Mat<Scalar> S = Pyy + R;
    Eigen::JacobiSVD<Mat<Scalar>> svd(S);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return Scalar(1);
    const Scalar lo = sv(sv.size() - 1);
    if (!(lo > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
    return sv(0) / lo;
}

/// K = Pxy (Pyy + R)^-1, via an LU solve of the transposed system.
template <typename DX, typename DY, typename DR>
Mat<typename DX::Scalar> kalman_gain(const Eigen::MatrixBase<DX>& Pxy, const Eigen::MatrixBase<DY>& Pyy,
                                     const Eigen::MatrixBase<DR>& R) {
    using Scalar = typename DX::Scalar;
    if (Pyy.rows() != Pyy.cols() || R.rows() != R.cols() || Pyy.rows() != R.rows() || Pxy.cols() != R.rows())
        throw InvalidInput("kalman_gain: dimension mismatch");
    const Mat<Scalar> S = Pyy + R;
    Eigen::PartialPivLU<Mat<Scalar>> lu(S.transpose());
    const Scalar rc = lu.rcond();
    if (!(rc > std::numeric_limits<Scalar>::epsilon()))
        throw NumericalError("kalman_gain: Pyy + R is singular", rc > 0 ? Scalar(1) / rc
                                                                       : std::numeric_limits<Scalar>::infinity());
    Mat<Scalar> K = lu.solve(Pxy.transpose()).transpose();
    if (!K.allFinite()) throw NumericalError("kalman_gain: non-finite gain", Scalar(1) / rc);
    return K;
}

/// Lower factor L with L L^T = C. Falls back to a clipped eigen factor for
/// singular PSD input; clearly indefinite input is rejected.
template <typename Derived>
Mat<typename Derived::Scalar> covariance_factor(const Eigen::MatrixBase<Derived>& C) {
    using Scalar = typename Derived::Scalar;
    if (C.rows() != C.cols()) throw InvalidInput("covariance_factor: matrix not square");
    const Mat<Scalar> S = (C + C.transpose()) / Scalar(2);
    const Scalar scale = std::max(Scalar(1), S.cwiseAbs().maxCoeff());
    if ((C - C.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-9) * scale)
        throw InvalidInput("covariance_factor: matrix not symmetric");
    Eigen::LLT<Mat<Scalar>> llt(S);
    if (llt.info() == Eigen::Success) return llt.matrixL();

    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(S);
    Vec<Scalar> ev = es.eigenvalues();
    if (ev.size() > 0 && ev.minCoeff() < -Scalar(1e-9) * scale)
        throw InvalidInput("covariance_factor: matrix is not positive semi-definite");
    ev = ev.cwiseMax(Scalar(0));
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

/// Members y + L z_i with z_i standard normal, one stream per member.
template <typename DY, typename DR>
Mat<typename DY::Scalar> perturb_observations(const Eigen::MatrixBase<DY>& y, const Eigen::MatrixBase<DR>& R,
                                              Eigen::Index N, const StreamKey& key) {
    using Scalar = typename DY::Scalar;
    if (R.rows() != y.size()) throw InvalidInput("perturb_observations: R does not match y");
    const Mat<Scalar> L = covariance_factor(R);
    Mat<Scalar> Y(y.size(), N);
    Vec<Scalar> z(y.size());
    for (Eigen::Index i = 0; i < N; ++i) {
        Rng rng = key.member(static_cast<std::uint64_t>(i));
        for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = static_cast<Scalar>(rng.normal());
        Y.col(i) = y + L * z;
    }
    return Y;
}

/// One N(0, L L^T) draw from an existing stream.
template <typename DL>
Vec<typename DL::Scalar> gaussian_draw(const Eigen::MatrixBase<DL>& L, Rng& rng) {
    using Scalar = typename DL::Scalar;
    Vec<Scalar> z(L.cols());
    for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = static_cast<Scalar>(rng.normal());
    return L * z;
}

}  // namespace ttsenkf
