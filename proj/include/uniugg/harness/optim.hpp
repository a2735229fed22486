#pragma once

#include <cmath>
#include <vector>

#include "uniugg/core/autograd.hpp"

namespace uniugg::harness {

// Linear warmup to base_lr over warmup_ratio*total_steps, then cosine decay
// to zero. Continuous at the warmup boundary; steps past the end clamp to the
// final value.
inline double cosine_lr(int64_t step, int64_t total_steps, double warmup_ratio, double base_lr) {
    if (total_steps < 1) throw ValidationError("cosine_lr: total_steps must be >= 1");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0)
        throw ValidationError("cosine_lr: warmup_ratio must be in [0,1)");
    if (step < 0) throw ValidationError("cosine_lr: negative step");
    if (step > total_steps) step = total_steps;
    int64_t warmup_steps = static_cast<int64_t>(std::llround(warmup_ratio * total_steps));
    if (step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    double denom = static_cast<double>(total_steps - warmup_steps);
    double progress = denom > 0 ? static_cast<double>(step - warmup_steps) / denom : 1.0;
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Decoupled weight decay Adam. Parameters keep their graph leaves; the
// optimizer mutates values in place.
template <typename T>
class AdamW {
public:
    struct ParamState {
        std::vector<T> m, v;
    };

    explicit AdamW(std::vector<core::Var<T>> params, double lr = 1e-3, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          weight_decay_(weight_decay) {
        state_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            state_[i].m.assign(params_[i].val().v.size(), T(0));
            state_[i].v.assign(params_[i].val().v.size(), T(0));
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    std::vector<ParamState>& state() { return state_; }
    const std::vector<core::Var<T>>& params() const { return params_; }

    void zero_grad() {
        for (auto& p : params_) p.node()->zero_grad();
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            p.node()->ensure_grad();
            auto& val = p.node()->value.v;
            auto& grad = p.node()->grad;
            auto& st = state_[pi];
            for (size_t i = 0; i < val.size(); ++i) {
                T g = grad[i];
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericError("AdamW: non-finite gradient");
                st.m[i] = static_cast<T>(beta1_ * st.m[i] + (1.0 - beta1_) * g);
                st.v[i] = static_cast<T>(beta2_ * st.v[i] + (1.0 - beta2_) * g * g);
                double mhat = static_cast<double>(st.m[i]) / bc1;
                double vhat = static_cast<double>(st.v[i]) / bc2;
                double update = mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * val[i];
                val[i] = static_cast<T>(val[i] - lr_ * update);
            }
        }
    }

private:
    std::vector<core::Var<T>> params_;
    std::vector<ParamState> state_;
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
};

}  // namespace uniugg::harness
