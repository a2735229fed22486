#pragma once

#include <functional>
#include <vector>

#include "uniugg/core/autograd.hpp"
#include "uniugg/core/rng.hpp"

namespace uniugg::diffusion {

// Linear variance schedule. betas are 1-indexed conceptually (beta(t) for
// t in [1, T_max]); alpha_bar(0) = 1.
struct NoiseSchedule {
    int t_max = 0;
    std::vector<double> betas;       // [t_max]
    std::vector<double> alpha_bars;  // [t_max + 1], alpha_bars[0] = 1

    double beta(int t) const { return betas.at(static_cast<size_t>(t - 1)); }
    double alpha_bar(int t) const { return alpha_bars.at(static_cast<size_t>(t)); }
};

inline NoiseSchedule make_schedule(int t_max, double beta_start, double beta_end) {
    if (t_max < 1) throw ValidationError("make_schedule: t_max must be >= 1");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
        throw ValidationError("make_schedule: need 0 < beta_start < beta_end < 1");
    NoiseSchedule s;
    s.t_max = t_max;
    s.betas.resize(static_cast<size_t>(t_max));
    for (int t = 0; t < t_max; ++t)
        s.betas[static_cast<size_t>(t)] =
            t_max == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * t / static_cast<double>(t_max - 1);
    s.alpha_bars.resize(static_cast<size_t>(t_max) + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= t_max; ++t)
        s.alpha_bars[static_cast<size_t>(t)] =
            s.alpha_bars[static_cast<size_t>(t - 1)] * (1.0 - s.beta(t));
    return s;
}

// Closed-form forward noising: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
template <typename T>
core::Var<T> q_sample(const core::Var<T>& x0, int t, const core::Var<T>& eps,
                      const NoiseSchedule& schedule) {
    using namespace core;
    if (t < 1 || t > schedule.t_max) throw ValidationError("q_sample: t out of range");
    if (x0.shape() != eps.shape()) throw ValidationError("q_sample: noise shape mismatch");
    double ab = schedule.alpha_bar(t);
    return add(mul_scalar(x0, static_cast<T>(std::sqrt(ab))),
               mul_scalar(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

// Conditioning is bound by the caller; the sampler and the loss only see the
// (latent, t) -> predicted-noise map.
template <typename T>
using DenoiseFn = std::function<core::Var<T>(const core::Var<T>& latent, int t)>;

// Mean-squared epsilon-prediction objective.
template <typename T>
core::Var<T> gen_loss(const DenoiseFn<T>& eps_fn, const core::Var<T>& x0, int t,
                      const core::Var<T>& eps, const NoiseSchedule& schedule) {
    using namespace core;
    Var<T> noisy = q_sample(x0, t, eps, schedule);
    return mean_all(square_(sub(eps_fn(noisy, t), eps)));
}

enum class SampleMode { Ancestral, Deterministic };

struct SamplerTraceEntry {
    int step;
    double mean;
    double stddev;
};
using SamplerTrace = std::vector<SamplerTraceEntry>;

// Reverse process. At stride 1 each update is the standard posterior mean
//   (x_t - beta_t / sqrt(1-abar_t) * eps) / sqrt(1-beta_t)
// plus sqrt(beta~_t) noise in ancestral mode; larger strides use the
// generalized posterior between the selected timesteps. Deterministic mode
// drops the added noise, so a fixed seed gives a reproducible trajectory in
// either mode.
template <typename T>
core::Tensor<T> sample(const DenoiseFn<T>& eps_fn, std::vector<int64_t> latent_shape,
                       const NoiseSchedule& schedule, uint64_t seed, SampleMode mode,
                       int n_steps = -1, SamplerTrace* trace = nullptr,
                       const core::Tensor<T>* start = nullptr) {
    using namespace core;
    if (n_steps <= 0) n_steps = schedule.t_max;
    if (n_steps > schedule.t_max) throw ValidationError("sample: more steps than the schedule has");

    // evenly spaced timesteps, ts[0] = 1, ts[n-1] = t_max
    std::vector<int> ts(static_cast<size_t>(n_steps));
    if (n_steps == 1) {
        ts[0] = schedule.t_max;
    } else {
        for (int k = 0; k < n_steps; ++k)
            ts[static_cast<size_t>(k)] =
                1 + static_cast<int>(std::llround(static_cast<double>(schedule.t_max - 1) * k /
                                                  (n_steps - 1)));
    }

    Rng rng(core::mix_seed({seed, 0xD1FFu}));
    Tensor<T> x(latent_shape);
    if (start) {
        if (start->shape != latent_shape) throw ValidationError("sample: start shape mismatch");
        x = *start;
    } else {
        for (auto& v : x.v) v = static_cast<T>(rng.normal());
    }

    for (int k = n_steps - 1; k >= 0; --k) {
        int t = ts[static_cast<size_t>(k)];
        int s = k > 0 ? ts[static_cast<size_t>(k - 1)] : 0;
        Var<T> eps_hat = eps_fn(Var<T>::leaf(x, false), t);
        if (eps_hat.shape() != latent_shape)
            throw ValidationError("sample: denoiser output shape mismatch");

        double ab_t = schedule.alpha_bar(t);
        double ab_s = schedule.alpha_bar(s);
        double mean_x_coeff, mean_eps_coeff, var;
        if (s == t - 1) {
            double beta_t = schedule.beta(t);
            double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta_t);
            mean_x_coeff = inv_sqrt_alpha;
            mean_eps_coeff = -inv_sqrt_alpha * beta_t / std::sqrt(1.0 - ab_t);
            var = s > 0 ? (1.0 - ab_s) / (1.0 - ab_t) * beta_t : 0.0;
        } else {
            // generalized posterior q(x_s | x_t, x0) with x0 from the eps estimate
            double alpha_ts = ab_t / ab_s;
            double beta_ts = 1.0 - alpha_ts;
            double c0 = std::sqrt(ab_s) * beta_ts / (1.0 - ab_t);
            double cx = std::sqrt(alpha_ts) * (1.0 - ab_s) / (1.0 - ab_t);
            // x0_hat = (x - sqrt(1-ab_t) eps) / sqrt(ab_t)
            mean_x_coeff = c0 / std::sqrt(ab_t) + cx;
            mean_eps_coeff = -c0 * std::sqrt(1.0 - ab_t) / std::sqrt(ab_t);
            var = s > 0 ? (1.0 - ab_s) / (1.0 - ab_t) * beta_ts : 0.0;
        }

        double sigma = mode == SampleMode::Ancestral && var > 0.0 ? std::sqrt(var) : 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            double nx = mean_x_coeff * static_cast<double>(x.v[static_cast<size_t>(i)]) +
                        mean_eps_coeff * static_cast<double>(eps_hat.val().v[static_cast<size_t>(i)]);
            if (sigma > 0.0) nx += sigma * rng.normal();
            if (!std::isfinite(nx))
                throw NumericError("sample: non-finite latent at step t=" + std::to_string(t));
            x.v[static_cast<size_t>(i)] = static_cast<T>(nx);
        }
        if (trace) {
            double m = 0, m2 = 0;
            for (T v : x.v) {
                m += static_cast<double>(v);
                m2 += static_cast<double>(v) * static_cast<double>(v);
            }
            m /= static_cast<double>(x.numel());
            m2 = m2 / static_cast<double>(x.numel()) - m * m;
            trace->push_back({t, m, std::sqrt(std::max(0.0, m2))});
        }
    }
    return x;
}

}  // namespace uniugg::diffusion
