#pragma once

// Trace-exponential acyclicity measure h(W) = tr(exp(W o W)) - d and its gradient.

#include "cdss/common.hpp"

#include <cmath>

namespace cdss {

/// exp(A) - I by scaling and squaring of a truncated Taylor series.
///
/// Carrying E = exp(A) - I instead of exp(A) keeps full relative precision
/// for the tiny traces met near acyclicity; the squaring step is
/// (I + E)^2 - I = 2E + E^2. A is scaled so that ||A / 2^s||_1 <= 1/2, and
/// the series is cut once the geometric tail bound on the remaining terms
/// drops below `tol` relative to ||E||.
inline Matrix expm1_matrix(const Eigen::Ref<const Matrix>& a, double tol = 1e-17) {
    require(a.rows() == a.cols(), "not_square", "matrix exponential needs a square matrix");
    const Index n = a.rows();
    if (n == 0) return Matrix(0, 0);
    require(a.allFinite(), "non_finite", "matrix exponential of non-finite matrix");

    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix b = a / std::ldexp(1.0, squarings);
    const double bnorm = norm / std::ldexp(1.0, squarings);

    Matrix e = b;
    Matrix term = b;
    double term_norm = bnorm;
    for (int k = 2; k < 64; ++k) {
        term = term * b / static_cast<double>(k);
        e += term;
        term_norm *= bnorm / static_cast<double>(k);
        // sum_{j>k} ||B||^j / j! <= term_norm * ||B|| / (k + 1) / (1 - ||B|| / (k + 2))
        const double tail = term_norm * bnorm / (k + 1) / (1.0 - bnorm / (k + 2));
        if (tail <= tol * std::max(1e-300, e.cwiseAbs().maxCoeff()) || term_norm == 0.0) break;
    }
    for (int s = 0; s < squarings; ++s) e = 2.0 * e + e * e;
    return e;
}

struct AcyclicityValue {
    double h = 0.0;
    Matrix exp_hadamard;  // exp(W o W)
};

inline AcyclicityValue acyclicity_with_exp(const Eigen::Ref<const Matrix>& w) {
    require(w.rows() == w.cols(), "not_square",
            concat("acyclicity penalty needs a square matrix, got ", w.rows(), "x", w.cols()));
    const Matrix a = w.cwiseProduct(w);
    Matrix e = expm1_matrix(a);
    AcyclicityValue out;
    out.h = std::max(0.0, e.trace());
    e.diagonal().array() += 1.0;
    out.exp_hadamard = std::move(e);
    return out;
}

/// h(W) = tr(exp(W o W)) - d. Zero exactly when the support of W is a DAG.
inline double acyclicity_penalty(const Eigen::Ref<const Matrix>& w) {
    return acyclicity_with_exp(w).h;
}

/// dh/dW = exp(W o W)^T o 2W.
inline Matrix acyclicity_gradient(const Eigen::Ref<const Matrix>& w) {
    const auto v = acyclicity_with_exp(w);
    return v.exp_hadamard.transpose().cwiseProduct(2.0 * w);
}

}  // namespace cdss
