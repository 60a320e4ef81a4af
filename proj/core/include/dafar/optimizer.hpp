#pragma once

#include <cmath>
#include <vector>

#include "dafar/layers.hpp"

namespace dafar::nn {

// Adam with bias correction
template <typename S>
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<std::vector<S>*>& params, const GradStore<S>& grads) {
        if (m_.empty()) {
            for (const auto* p : params) {
                m_.emplace_back(p->size(), S(0));
                v_.emplace_back(p->size(), S(0));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k];
            const auto& g = grads[k];
            auto& m = m_[k];
            auto& v = v_[k];
            for (size_t i = 0; i < p.size(); ++i) {
                const double gi = g[i];
                m[i] = static_cast<S>(b1_ * m[i] + (1.0 - b1_) * gi);
                v[i] = static_cast<S>(b2_ * v[i] + (1.0 - b2_) * gi * gi);
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                p[i] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

}  // namespace dafar::nn
