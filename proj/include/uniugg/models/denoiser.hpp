#pragma once

#include "uniugg/core/nn.hpp"
#include "uniugg/diffusion/diffusion.hpp"

namespace uniugg::models {

struct DenoiserConfig {
    int model_dim = 128;
    int depth = 2;
    int heads = 4;
    int latent_h = 16;
    int latent_w = 16;
    int latent_channels = 4;
    int cond_dim = 128;  // width of the conditional features C

    void validate() const {
        if (depth < 1) throw ValidationError("denoiser: depth must be >= 1");
        if (model_dim % heads != 0) throw ValidationError("denoiser: dim must divide heads");
    }
    int64_t cells() const { return static_cast<int64_t>(latent_h) * latent_w; }
};

// Conditional epsilon predictor over latent cells: input projection + learned
// cell positions, then blocks of self-attention, cross-attention to C, and
// MLP, with a sinusoidal timestep embedding added before every block.
template <typename T>
class Denoiser : public core::Module<T> {
public:
    Denoiser(const DenoiserConfig& config, core::Rng& rng)
        : config_(config), in_proj(config.latent_channels, config.model_dim, rng),
          cond_proj(config.cond_dim, config.model_dim, rng),
          t_fc1(config.model_dim, config.model_dim, rng),
          t_fc2(config.model_dim, config.model_dim, rng), out_norm(config.model_dim),
          out_proj(config.model_dim, config.latent_channels, rng) {
        config.validate();
        pos_embed = core::Var<T>::leaf(
            core::Tensor<T>::randn({config.cells(), config.model_dim}, rng, 0.02), true);
        this->register_param("pos_embed", pos_embed);
        this->register_child("in_proj", &in_proj);
        this->register_child("cond_proj", &cond_proj);
        this->register_child("t_fc1", &t_fc1);
        this->register_child("t_fc2", &t_fc2);
        for (int i = 0; i < config.depth; ++i) {
            blocks.push_back(std::make_unique<core::CrossAttentionBlock<T>>(config.model_dim,
                                                                            config.heads, rng));
            this->register_child("block" + std::to_string(i), blocks.back().get());
        }
        this->register_child("out_norm", &out_norm);
        this->register_child("out_proj", &out_proj);
    }

    // latent_rows: [cells, channels], cond: [N_c, cond_dim]
    core::Var<T> forward(const core::Var<T>& latent_rows, const core::Var<T>& cond, int t) const {
        using namespace core;
        if (latent_rows.shape()[0] != config_.cells())
            throw ValidationError("denoiser: latent cell count mismatch");
        Var<T> x = add(in_proj.forward(latent_rows), pos_embed);
        Var<T> ctx = cond_proj.forward(cond);
        Var<T> temb = t_fc2.forward(gelu_(t_fc1.forward(
            core::sinusoidal_embedding<T>(static_cast<double>(t), config_.model_dim))));
        Var<T> trow = reshape(temb, {config_.model_dim});
        for (const auto& b : blocks) {
            x = add_row(x, trow);
            x = b->forward(x, ctx);
        }
        return out_proj.forward(out_norm.forward(x));
    }

    // Binds conditioning for the sampler / generic loss.
    diffusion::DenoiseFn<T> bind(core::Var<T> cond) const {
        return [this, cond](const core::Var<T>& latent, int t) {
            return this->forward(latent, cond, t);
        };
    }

    const DenoiserConfig& config() const { return config_; }

    core::Linear<T> in_proj, cond_proj, t_fc1, t_fc2;
    core::Var<T> pos_embed;
    std::vector<std::unique_ptr<core::CrossAttentionBlock<T>>> blocks;
    core::LayerNorm<T> out_norm;
    core::Linear<T> out_proj;

private:
    DenoiserConfig config_;
};

}  // namespace uniugg::models
