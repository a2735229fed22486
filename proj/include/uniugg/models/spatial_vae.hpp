#pragma once

#include "uniugg/models/spatial_decoder.hpp"

namespace uniugg::models {

struct VaeConfig {
    int base_channels = 64;  // width right after the initial convolution
    int mid_channels = 32;   // width through the upsampled grid and attention
    int blocks = 2;          // transformer blocks in encoder and decoder
    int heads = 4;
    int latent_channels = 4;

    void validate() const {
        if (blocks < 1) throw ValidationError("vae: blocks must be >= 1");
        if (mid_channels % heads != 0) throw ValidationError("vae: mid_channels must divide heads");
    }
};

template <typename T>
struct LatentDistribution {
    core::Var<T> mu;      // [4, L_h, L_w]
    core::Var<T> logvar;  // [4, L_h, L_w], clamped to [-30, 20]
    int lh = 0, lw = 0;
};

// Latent grid carried channels-first; helpers convert to cell rows for the
// diffusion model.
template <typename T>
struct LatentToken {
    core::Var<T> grid;  // [4, L_h, L_w]
    int lh = 0, lw = 0;
};

template <typename T>
core::Var<T> latent_to_rows(const core::Var<T>& chw) {
    using namespace core;
    int64_t c = chw.shape()[0], hw = chw.shape()[1] * chw.shape()[2];
    return transpose(reshape(chw, {c, hw}));
}

template <typename T>
core::Var<T> rows_to_latent(const core::Var<T>& rows, int lh, int lw) {
    using namespace core;
    return reshape(transpose(rows), {rows.shape()[1], lh, lw});
}

// Token-grid VAE with a 2x spatial upsample into a 4-channel latent.
// Encoder: reshape -> conv -> transposed-conv upsample -> conv -> attention
// blocks -> mu / log-variance convs. Decoder mirrors it.
template <typename T>
class SpatialVae : public core::Module<T> {
public:
    SpatialVae(int token_dim, const VaeConfig& config, core::Rng& rng)
        : config_(config), token_dim_(token_dim),
          enc_initial(token_dim, config.base_channels, 3, 1, 1, rng),
          enc_up1(config.base_channels, config.mid_channels, 4, 2, 1, rng),
          enc_up2(config.mid_channels, config.mid_channels, 3, 1, 1, rng),
          mu_conv(config.mid_channels, config.latent_channels, 3, 1, 1, rng),
          logvar_conv(config.mid_channels, config.latent_channels, 3, 1, 1, rng),
          dec_pre(config.latent_channels, config.mid_channels, 3, 1, 1, rng),
          dec_down1(config.mid_channels, config.mid_channels, 3, 1, 1, rng),
          dec_down2(config.mid_channels, config.base_channels, 3, 2, 1, rng),
          dec_final(config.base_channels, token_dim, 3, 1, 1, rng) {
        config.validate();
        this->register_child("enc_initial", &enc_initial);
        this->register_child("enc_up1", &enc_up1);
        this->register_child("enc_up2", &enc_up2);
        for (int i = 0; i < config.blocks; ++i) {
            enc_blocks.push_back(
                std::make_unique<core::TransformerBlock<T>>(config.mid_channels, config.heads, rng));
            this->register_child("enc_block" + std::to_string(i), enc_blocks.back().get());
        }
        this->register_child("mu_conv", &mu_conv);
        this->register_child("logvar_conv", &logvar_conv);
        this->register_child("dec_pre", &dec_pre);
        for (int i = 0; i < config.blocks; ++i) {
            dec_blocks.push_back(
                std::make_unique<core::TransformerBlock<T>>(config.mid_channels, config.heads, rng));
            this->register_child("dec_block" + std::to_string(i), dec_blocks.back().get());
        }
        this->register_child("dec_down1", &dec_down1);
        this->register_child("dec_down2", &dec_down2);
        this->register_child("dec_final", &dec_final);
    }

    LatentDistribution<T> encode_dist(const TokenGrid<T>& z) const {
        using namespace core;
        if (z.dim() != token_dim_) throw ValidationError("vae: token dim mismatch");
        int gh = z.grid_h, gw = z.grid_w;
        // [N, d] -> [d, gh, gw]
        Var<T> x = reshape(transpose(z.tokens), {token_dim_, gh, gw});
        x = gelu_(enc_initial.forward(x));
        x = gelu_(enc_up1.forward(x));  // 2x spatial
        x = gelu_(enc_up2.forward(x));
        x = attention(x, enc_blocks);
        if (!all_finite(x)) throw NumericError("vae encoder produced non-finite activations");
        LatentDistribution<T> dist;
        dist.lh = 2 * gh;
        dist.lw = 2 * gw;
        dist.mu = mu_conv.forward(x);
        dist.logvar = clamp_(logvar_conv.forward(x), T(-30), T(20));
        return dist;
    }

    TokenGrid<T> decode(const LatentToken<T>& latent, int patch_size, int source_h,
                        int source_w) const {
        using namespace core;
        Var<T> x = gelu_(dec_pre.forward(latent.grid));
        x = attention(x, dec_blocks);
        x = gelu_(dec_down1.forward(x));
        x = gelu_(dec_down2.forward(x));  // back to the token grid resolution
        Var<T> out = dec_final.forward(x);
        int gh = latent.lh / 2, gw = latent.lw / 2;
        TokenGrid<T> grid;
        grid.tokens = transpose(reshape(out, {token_dim_, static_cast<int64_t>(gh) * gw}));
        grid.grid_h = gh;
        grid.grid_w = gw;
        grid.patch_size = patch_size;
        grid.source_h = source_h;
        grid.source_w = source_w;
        return grid;
    }

    const VaeConfig& config() const { return config_; }
    int token_dim() const { return token_dim_; }

    core::Conv2dLayer<T> enc_initial;
    core::ConvTranspose2dLayer<T> enc_up1;
    core::Conv2dLayer<T> enc_up2;
    std::vector<std::unique_ptr<core::TransformerBlock<T>>> enc_blocks;
    core::Conv2dLayer<T> mu_conv, logvar_conv;
    core::Conv2dLayer<T> dec_pre;
    std::vector<std::unique_ptr<core::TransformerBlock<T>>> dec_blocks;
    core::Conv2dLayer<T> dec_down1, dec_down2, dec_final;

private:
    static core::Var<T> attention(
        const core::Var<T>& x, const std::vector<std::unique_ptr<core::TransformerBlock<T>>>& bl) {
        using namespace core;
        int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
        Var<T> seq = transpose(reshape(x, {c, h * w}));  // [h*w, c]
        for (const auto& b : bl) seq = b->forward(seq);
        return reshape(transpose(seq), {c, h, w});
    }

    VaeConfig config_;
    int token_dim_;
};

// T = mu + exp(0.5*logvar) * eps with eps drawn deterministically from
// noise_seed; deterministic = true returns mu.
template <typename T>
LatentToken<T> reparameterize(const LatentDistribution<T>& dist, uint64_t noise_seed,
                              bool deterministic = false) {
    using namespace core;
    LatentToken<T> out;
    out.lh = dist.lh;
    out.lw = dist.lw;
    if (deterministic) {
        out.grid = dist.mu;
        return out;
    }
    Rng rng(core::mix_seed({noise_seed, 0x4e01u}));
    Var<T> eps = Var<T>::leaf(Tensor<T>::randn(dist.mu.shape(), rng), false);
    out.grid = add(dist.mu, mul(exp_(mul_scalar(dist.logvar, T(0.5))), eps));
    return out;
}

// Closed-form KL against the standard normal prior, mean over elements:
// 0.5 * mean(mu^2 + exp(logvar) - 1 - logvar).
template <typename T>
core::Var<T> kl_loss(const LatentDistribution<T>& dist) {
    using namespace core;
    Var<T> term = sub(add(square_(dist.mu), exp_(dist.logvar)),
                      add_scalar(dist.logvar, T(1)));
    return mul_scalar(mean_all(term), T(0.5));
}

// ---------------------------------------------------------------------------

template <typename T>
struct VaeLossBreakdown {
    core::Var<T> spatial;  // L_s through the jointly tuned spatial decoder
    core::Var<T> mse;      // token reconstruction
    core::Var<T> kl;       // both views
    core::Var<T> total;    // spatial + mse + gamma * kl
};

struct VaeLossOptions {
    double gamma = 1e-4;
    bool single_view_mse = false;  // restrict the reconstruction term to view i
    // Feed the spatial decoder (real reference, reconstructed target) instead
    // of two reconstructions. Inference decodes exactly that mix, so the
    // fine-tune must cover it; see the training harness for the default.
    bool mixed_reference = false;
    RgbLossWeights rgb_weights;
    SpatialLossWeights spatial_weights;
};

// Latent-token learning loss. The spatial decoder is required (it is being
// fine-tuned through the reconstructed tokens); rgb_head may be null when
// lambda2 is zero.
template <typename T>
VaeLossBreakdown<T> vae_loss(const SpatialVae<T>& vae, const SpatialDecoder<T>* decoder,
                             const RgbHead<T>* rgb_head, const PerceptualProxy<T>& proxy,
                             const TokenGrid<T>& z_i, const TokenGrid<T>& z_j,
                             const geometry::ScenePair& pair, const VaeLossOptions& opts,
                             uint64_t noise_seed) {
    using namespace core;
    if (!decoder) throw ConfigError("vae_loss: no spatial decoder attached");

    LatentDistribution<T> dist_i = vae.encode_dist(z_i);
    LatentDistribution<T> dist_j = vae.encode_dist(z_j);
    LatentToken<T> t_i = reparameterize(dist_i, core::mix_seed({noise_seed, 0xAu}));
    LatentToken<T> t_j = reparameterize(dist_j, core::mix_seed({noise_seed, 0xBu}));
    TokenGrid<T> zbar_i = vae.decode(t_i, z_i.patch_size, z_i.source_h, z_i.source_w);
    TokenGrid<T> zbar_j = vae.decode(t_j, z_j.patch_size, z_j.source_h, z_j.source_w);

    VaeLossBreakdown<T> out;
    Var<T> mse_i = mean_all(square_(sub(zbar_i.tokens, z_i.tokens)));
    if (opts.single_view_mse) {
        out.mse = mse_i;
    } else {
        Var<T> mse_j = mean_all(square_(sub(zbar_j.tokens, z_j.tokens)));
        out.mse = mul_scalar(add(mse_i, mse_j), T(0.5));
    }
    out.kl = add(kl_loss(dist_i), kl_loss(dist_j));

    const TokenGrid<T>& ref_grid = opts.mixed_reference ? z_i : zbar_i;
    auto [pred_i, pred_j] = decoder->predict_pair(ref_grid, zbar_j);
    Var<T> rgb_i, rgb_j;
    if (rgb_head && opts.spatial_weights.lambda2 != 0.0) {
        rgb_i = rgb_head->forward(ref_grid);
        rgb_j = rgb_head->forward(zbar_j);
    }
    out.spatial = spatial_loss(pred_i, pred_j, pair, rgb_i, rgb_j, proxy, opts.rgb_weights,
                               opts.spatial_weights)
                      .total;
    out.total = add(out.spatial, add(out.mse, mul_scalar(out.kl, static_cast<T>(opts.gamma))));
    return out;
}

}  // namespace uniugg::models
