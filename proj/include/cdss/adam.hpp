#pragma once

#include "cdss/common.hpp"

#include <cmath>

namespace cdss {

/// Adam over a flat parameter vector.
class Adam {
public:
    Adam(Index size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

    void step(Vector& params, const Vector& grad) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

    void reset() {
        m_.setZero();
        v_.setZero();
        t_ = 0;
    }

    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    Vector m_, v_;
    long t_ = 0;
};

}  // namespace cdss
