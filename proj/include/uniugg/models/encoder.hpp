#pragma once

#include <memory>

#include "uniugg/core/nn.hpp"
#include "uniugg/geometry/types.hpp"

namespace uniugg::models {

struct EncoderConfig {
    int patch_size = 8;
    int dim = 128;
    int depth = 4;
    int heads = 4;
    int image_h = 64;
    int image_w = 64;

    void validate() const {
        if (dim % heads != 0) throw ValidationError("encoder: dim must divide heads");
        if (depth < 1) throw ValidationError("encoder: depth must be >= 1");
        if (image_h % patch_size != 0 || image_w % patch_size != 0)
            throw ValidationError("encoder: image dims must divide patch_size");
    }
    int grid_h() const { return image_h / patch_size; }
    int grid_w() const { return image_w / patch_size; }
    int64_t n_tokens() const { return static_cast<int64_t>(grid_h()) * grid_w(); }
};

// Grid of per-patch feature vectors plus the geometry needed to map back to
// pixels.
template <typename T>
struct TokenGrid {
    core::Var<T> tokens;  // [grid_h*grid_w, dim]
    int grid_h = 0, grid_w = 0;
    int patch_size = 0;
    int source_h = 0, source_w = 0;

    int64_t count() const { return static_cast<int64_t>(grid_h) * grid_w; }
    int64_t dim() const { return tokens.shape()[1]; }
};

// ---------------------------------------------------------------------------
// patch/pixel rearrangement

// flat index tables between [H*W, channels] pixel-major and
// [N, channels*p^2] patch-major layouts. Within a patch: (dy*p + dx)*ch + c.
inline std::shared_ptr<const std::vector<int64_t>> patch_from_pixel_index(int h, int w, int p,
                                                                          int channels = 3) {
    if (h % p != 0 || w % p != 0)
        throw ValidationError("patchify: image dims must be divisible by patch size");
    auto idx =
        std::make_shared<std::vector<int64_t>>(static_cast<size_t>(h) * w * channels);
    int gw = w / p;
    size_t out = 0;
    for (int64_t n = 0; n < static_cast<int64_t>(h / p) * gw; ++n) {
        int py = static_cast<int>(n) / gw, px = static_cast<int>(n) % gw;
        for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx)
                for (int c = 0; c < channels; ++c)
                    (*idx)[out++] =
                        (static_cast<int64_t>(py * p + dy) * w + (px * p + dx)) * channels + c;
    }
    return idx;
}

inline std::shared_ptr<const std::vector<int64_t>> pixel_from_patch_index(int h, int w, int p,
                                                                          int channels = 3) {
    auto fwd = patch_from_pixel_index(h, w, p, channels);
    auto idx = std::make_shared<std::vector<int64_t>>(fwd->size());
    for (size_t i = 0; i < fwd->size(); ++i) (*idx)[static_cast<size_t>((*fwd)[i])] = static_cast<int64_t>(i);
    return idx;
}

// [H,W,3] image tensor -> [N, 3p^2] patch matrix.
template <typename T>
core::Tensor<T> patchify(const geometry::Image& image, int p) {
    if (image.ndim() != 3 || image.shape[2] != 3) throw ValidationError("patchify: [H,W,3] expected");
    int h = static_cast<int>(image.shape[0]), w = static_cast<int>(image.shape[1]);
    auto idx = patch_from_pixel_index(h, w, p);
    core::Tensor<T> out({static_cast<int64_t>(h / p) * (w / p), static_cast<int64_t>(3) * p * p});
    for (size_t i = 0; i < idx->size(); ++i)
        out.v[i] = static_cast<T>(image.v[static_cast<size_t>((*idx)[i])]);
    return out;
}

template <typename T>
geometry::Image unpatchify(const core::Tensor<T>& patches, int p, int h, int w) {
    if (patches.numel() != static_cast<int64_t>(h) * w * 3)
        throw ValidationError("unpatchify: size mismatch");
    auto idx = pixel_from_patch_index(h, w, p);
    geometry::Image out({h, w, 3});
    for (size_t i = 0; i < idx->size(); ++i)
        out.v[i] = static_cast<float>(patches.v[static_cast<size_t>((*idx)[i])]);
    return out;
}

// ---------------------------------------------------------------------------

// Patch embedding + learned positional embeddings + pre-norm transformer.
template <typename T>
class VisionEncoder : public core::Module<T> {
public:
    VisionEncoder(const EncoderConfig& config, core::Rng& rng)
        : config_(config), patch_embed(3 * config.patch_size * config.patch_size, config.dim, rng),
          final_norm(config.dim) {
        config.validate();
        pos_embed = core::Var<T>::leaf(
            core::Tensor<T>::randn({config.n_tokens(), config.dim}, rng, 0.02), true);
        this->register_param("pos_embed", pos_embed);
        this->register_child("patch_embed", &patch_embed);
        blocks.reserve(static_cast<size_t>(config.depth));
        for (int i = 0; i < config.depth; ++i) {
            blocks.push_back(
                std::make_unique<core::TransformerBlock<T>>(config.dim, config.heads, rng));
            this->register_child("block" + std::to_string(i), blocks.back().get());
        }
        this->register_child("final_norm", &final_norm);
    }

    TokenGrid<T> encode(const geometry::Image& image) const {
        if (image.shape[0] != config_.image_h || image.shape[1] != config_.image_w)
            throw ValidationError("encode: image size does not match encoder config");
        auto x = core::Var<T>::leaf(patchify<T>(image, config_.patch_size), false);
        return encode_tokens(x);
    }

    // Same pipeline from an already-patchified input (gradable if needed).
    TokenGrid<T> encode_tokens(const core::Var<T>& patches) const {
        using namespace core;
        Var<T> x = add(patch_embed.forward(patches), pos_embed);
        for (const auto& b : blocks) x = b->forward(x);
        x = final_norm.forward(x);
        if (!all_finite(x)) throw NumericError("encoder produced non-finite tokens");
        TokenGrid<T> grid;
        grid.tokens = x;
        grid.grid_h = config_.grid_h();
        grid.grid_w = config_.grid_w();
        grid.patch_size = config_.patch_size;
        grid.source_h = config_.image_h;
        grid.source_w = config_.image_w;
        return grid;
    }

    std::vector<TokenGrid<T>> encode_batch(const std::vector<geometry::Image>& images) const {
        std::vector<TokenGrid<T>> out;
        out.reserve(images.size());
        for (const auto& img : images) out.push_back(encode(img));
        return out;
    }

    const EncoderConfig& config() const { return config_; }

    core::Var<T> pos_embed;
    core::Linear<T> patch_embed;
    std::vector<std::unique_ptr<core::TransformerBlock<T>>> blocks;
    core::LayerNorm<T> final_norm;

private:
    EncoderConfig config_;
};

// Per-token linear head reconstructing the p x p pixel block, bounded by a
// sigmoid.
template <typename T>
class RgbHead : public core::Module<T> {
public:
    RgbHead(const EncoderConfig& config, core::Rng& rng)
        : proj(config.dim, 3 * config.patch_size * config.patch_size, rng) {
        this->register_child("proj", &proj);
    }

    // -> [H*W, 3] in [0,1]
    core::Var<T> forward(const TokenGrid<T>& grid) const {
        using namespace core;
        Var<T> patches = sigmoid_(proj.forward(grid.tokens));
        auto idx = pixel_from_patch_index(grid.source_h, grid.source_w, grid.patch_size);
        return gather_flat(patches, idx,
                           {static_cast<int64_t>(grid.source_h) * grid.source_w, 3});
    }

    core::Linear<T> proj;
};

// ---------------------------------------------------------------------------
// perceptual proxy: frozen strided conv pyramid with seeded weights.
// Stage 0 appends a unit channel before per-pixel normalization, which makes
// the distance zero only for identical inputs; later stages compare
// unit-normalized conv features at decreasing resolution.

template <typename T>
class PerceptualProxy : public core::Module<T> {
public:
    explicit PerceptualProxy(uint64_t seed = 0x9E3779B9ull) {
        core::Rng rng(seed);
        conv1 = std::make_unique<core::Conv2dLayer<T>>(3, 8, 3, 2, 1, rng);
        conv2 = std::make_unique<core::Conv2dLayer<T>>(8, 16, 3, 2, 1, rng);
        conv3 = std::make_unique<core::Conv2dLayer<T>>(16, 16, 3, 2, 1, rng);
        this->register_child("conv1", conv1.get());
        this->register_child("conv2", conv2.get());
        this->register_child("conv3", conv3.get());
        this->set_trainable(false);
    }

    // a, b: [H*W, 3]
    core::Var<T> distance(const core::Var<T>& a, const core::Var<T>& b, int h, int w) const {
        using namespace core;
        if (a.shape() != b.shape()) throw ValidationError("perceptual distance: shape mismatch");
        Var<T> ones = Var<T>::leaf(Tensor<T>({a.shape()[0], 1}, T(1)), false);
        Var<T> fa = normalize_rows(concat_cols<T>({a, ones}), T(1e-12));
        Var<T> fb = normalize_rows(concat_cols<T>({b, ones}), T(1e-12));
        Var<T> total = mean_all(square_(sub(fa, fb)));

        Var<T> xa = to_chw(a, h, w), xb = to_chw(b, h, w);
        const core::Conv2dLayer<T>* stages[3] = {conv1.get(), conv2.get(), conv3.get()};
        for (const auto* conv : stages) {
            xa = tanh_(conv->forward(xa));
            xb = tanh_(conv->forward(xb));
            total = add(total, mean_all(square_(sub(norm_pixels(xa), norm_pixels(xb)))));
        }
        return mul_scalar(total, T(0.25));
    }

private:
    static core::Var<T> to_chw(const core::Var<T>& img, int h, int w) {
        using namespace core;
        return reshape(transpose(img), {3, h, w});
    }
    static core::Var<T> norm_pixels(const core::Var<T>& x) {
        using namespace core;
        int64_t c = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
        return normalize_rows(transpose(reshape(x, {c, hw})), T(1e-12));
    }

    std::unique_ptr<core::Conv2dLayer<T>> conv1, conv2, conv3;
};

// ---------------------------------------------------------------------------

struct RgbLossWeights {
    double lambda_l1 = 1.0;
    double lambda_perc = 1.0;
    double lambda_l2 = 0.0;   // optional extra terms, off by default
    double lambda_ssim = 0.0;
};

// Global-statistics SSIM per channel, averaged.
template <typename T>
core::Var<T> ssim_global(const core::Var<T>& a, const core::Var<T>& b) {
    using namespace core;
    const T c1 = T(0.01 * 0.01), c2 = T(0.03 * 0.03);
    Var<T> acc = Var<T>::scalar(T(0));
    for (int ch = 0; ch < 3; ++ch) {
        Var<T> xa = slice_cols(a, ch, ch + 1);
        Var<T> xb = slice_cols(b, ch, ch + 1);
        Var<T> mu_a = mean_all(xa), mu_b = mean_all(xb);
        Var<T> var_a = sub(mean_all(square_(xa)), square_(mu_a));
        Var<T> var_b = sub(mean_all(square_(xb)), square_(mu_b));
        Var<T> cov = sub(mean_all(mul(xa, xb)), mul(mu_a, mu_b));
        Var<T> num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), T(2)), c1),
                         add_scalar(mul_scalar(cov, T(2)), c2));
        Var<T> den = mul(add_scalar(add(square_(mu_a), square_(mu_b)), c1),
                         add_scalar(add(var_a, var_b), c2));
        acc = add(acc, div(num, den));
    }
    return mul_scalar(acc, T(1.0 / 3.0));
}

// Composite reconstruction loss over [H*W, 3] images.
template <typename T>
core::Var<T> rgb_loss(const core::Var<T>& pred, const core::Var<T>& target,
                      const RgbLossWeights& weights, const PerceptualProxy<T>& proxy, int h,
                      int w) {
    using namespace core;
    if (pred.shape() != target.shape()) throw ValidationError("rgb_loss: shape mismatch");
    Var<T> diff = sub(pred, target);
    Var<T> total = mul_scalar(mean_all(abs_(diff)), static_cast<T>(weights.lambda_l1));
    if (weights.lambda_perc != 0.0)
        total = add(total, mul_scalar(proxy.distance(pred, target, h, w),
                                      static_cast<T>(weights.lambda_perc)));
    if (weights.lambda_l2 != 0.0)
        total = add(total, mul_scalar(mean_all(square_(diff)), static_cast<T>(weights.lambda_l2)));
    if (weights.lambda_ssim != 0.0) {
        Var<T> one_minus = add_scalar(neg(ssim_global(pred, target)), T(1));
        total = add(total, mul_scalar(one_minus, static_cast<T>(weights.lambda_ssim)));
    }
    return total;
}

// Image tensor -> constant [H*W, 3] leaf.
template <typename T>
core::Var<T> image_as_var(const geometry::Image& image) {
    core::Tensor<T> t({image.shape[0] * image.shape[1], 3});
    for (size_t i = 0; i < image.v.size(); ++i) t.v[i] = static_cast<T>(image.v[i]);
    return core::Var<T>::leaf(std::move(t), false);
}

}  // namespace uniugg::models
