#pragma once

#include <cstdio>

#include "uniugg/models/encoder.hpp"

namespace uniugg::models {

// Frozen encoder with seeded parameters standing in for a pretrained teacher.
// Same token geometry as the student so features align one-to-one.
template <typename T>
class TeacherStub {
public:
    TeacherStub(const EncoderConfig& config, uint64_t teacher_seed) : rng_(teacher_seed) {
        encoder_ = std::make_unique<VisionEncoder<T>>(config, rng_);
        encoder_->set_trainable(false);
    }

    TokenGrid<T> operator()(const geometry::Image& image) const { return encoder_->encode(image); }

    const VisionEncoder<T>& encoder() const { return *encoder_; }

private:
    core::Rng rng_;
    std::unique_ptr<VisionEncoder<T>> encoder_;
};

// ceil(fraction*n) distinct token indices, deterministic per seed.
inline std::vector<int64_t> sample_token_subset(int64_t n_tokens, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ValidationError("sample_token_subset: fraction must be in (0,1]");
    if (n_tokens < 1) throw ValidationError("sample_token_subset: need at least one token");
    int64_t k = static_cast<int64_t>(std::ceil(fraction * static_cast<double>(n_tokens)));
    core::Rng rng(core::mix_seed({seed, 0x5e7u, static_cast<uint64_t>(n_tokens)}));
    return rng.sample_without_replacement(n_tokens, k);
}

// alpha * (1 - mean cos(z_i, zhat_i)) + beta * mean |z_i - zhat_i|, over the
// sampled subset. The L1 part averages across feature dimensions. Zero-norm
// tokens contribute cosine 0 (counted as orthogonal) and log a warning.
template <typename T>
core::Var<T> kd_loss(const core::Var<T>& z, const core::Var<T>& z_teacher,
                     const std::vector<int64_t>& subset, double alpha, double beta) {
    using namespace core;
    if (z.shape() != z_teacher.shape()) throw ValidationError("kd_loss: token geometry mismatch");
    if (subset.empty()) throw ValidationError("kd_loss: empty token subset");

    Var<T> zs = gather_rows(z, subset);
    Var<T> ts = gather_rows(z_teacher, subset);
    int64_t n = static_cast<int64_t>(subset.size());
    int64_t d = zs.shape()[1];

    // rows where the cosine is defined
    std::vector<int64_t> nonzero;
    int64_t n_zero = 0;
    for (int64_t r = 0; r < n; ++r) {
        double nz = 0, nt = 0;
        for (int64_t c = 0; c < d; ++c) {
            double a = static_cast<double>(zs.val().at2(r, c));
            double b = static_cast<double>(ts.val().at2(r, c));
            nz += a * a;
            nt += b * b;
        }
        if (nz == 0.0 || nt == 0.0)
            ++n_zero;
        else
            nonzero.push_back(r);
    }
    if (n_zero > 0)
        std::fprintf(stderr,
                     "[uniugg] warning: kd_loss found %lld zero-norm token(s); "
                     "treating cosine as 0\n",
                     static_cast<long long>(n_zero));

    Var<T> cos_sum = Var<T>::scalar(T(0));
    if (!nonzero.empty()) {
        Var<T> za = gather_rows(zs, nonzero);
        Var<T> ta = gather_rows(ts, nonzero);
        Var<T> dots = row_sum(mul(za, ta));
        Var<T> denom = mul(rows_l2norm(za), rows_l2norm(ta));
        cos_sum = sum_all(div(dots, denom));
    }
    Var<T> cos_mean = mul_scalar(cos_sum, T(1) / static_cast<T>(n));
    Var<T> cos_term = mul_scalar(add_scalar(neg(cos_mean), T(1)), static_cast<T>(alpha));
    Var<T> l1_term = mul_scalar(mean_all(abs_(sub(zs, ts))), static_cast<T>(beta));
    return add(cos_term, l1_term);
}

}  // namespace uniugg::models
