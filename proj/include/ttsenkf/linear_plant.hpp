#pragma once

#include "ttsenkf/model.hpp"

namespace ttsenkf {

/// x1' = A11 x1 + A12 x2 + w1,  eps x2' = A21 x1 + A22 x2 + eps w2,  y = C x + v.
struct LinearTtsPlant {
    Matrix A11, A12, A21, A22, C;
    double epsilon = 0.005;
    NoiseSpec noise;
    Vector x1_0, x2_0;

    void validate() const;
    /// -A22^-1 A21 x1
    Vector psi0(const Vector& x1) const;
    /// A11 - A12 A22^-1 A21
    Matrix reduced_matrix() const;
    NspModel model() const;
};

/// Two slow, two fast, three outputs; A22 = -I. The reduced matrix is
/// Metzler with eigenvalues -0.15 and -0.3, so from x1_0 = (1, 1) every state
/// decays monotonically and stays positive.
LinearTtsPlant default_linear_plant(double epsilon = 0.005);

}  // namespace ttsenkf
