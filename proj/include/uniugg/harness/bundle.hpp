#pragma once

#include <memory>

#include "uniugg/harness/checkpoint.hpp"
#include "uniugg/harness/run_config.hpp"
#include "uniugg/models/denoiser.hpp"
#include "uniugg/models/distill.hpp"

namespace uniugg::harness {

// All trainable modules plus the fixed teacher and perceptual proxy,
// constructed deterministically from a run config. Parameter names are
// module-prefixed ("encoder.block0.attn.wq.weight", ...).
template <typename T>
struct ModelBundle {
    RunConfig config;

    std::unique_ptr<models::VisionEncoder<T>> encoder;
    std::unique_ptr<models::RgbHead<T>> rgb_head;
    std::unique_ptr<models::TeacherStub<T>> teacher;
    std::unique_ptr<models::SpatialDecoder<T>> decoder;
    std::unique_ptr<models::SpatialVae<T>> vae;
    std::unique_ptr<models::Denoiser<T>> denoiser;
    std::unique_ptr<models::Conditioner<T>> conditioner;
    std::unique_ptr<models::PerceptualProxy<T>> proxy;
    diffusion::NoiseSchedule schedule;

    static ModelBundle build(const RunConfig& config) {
        config.validate();
        ModelBundle b;
        b.config = config;

        models::EncoderConfig ec = config.encoder;
        {
            core::Rng rng(core::mix_seed({config.seed, 0xE6Cu}));
            b.encoder = std::make_unique<models::VisionEncoder<T>>(ec, rng);
        }
        {
            core::Rng rng(core::mix_seed({config.seed, 0x46Bu}));
            b.rgb_head = std::make_unique<models::RgbHead<T>>(ec, rng);
        }
        b.teacher = std::make_unique<models::TeacherStub<T>>(ec, config.teacher_seed);
        {
            core::Rng rng(core::mix_seed({config.seed, 0xDECu}));
            b.decoder = std::make_unique<models::SpatialDecoder<T>>(ec, config.decoder, rng);
        }
        {
            core::Rng rng(core::mix_seed({config.seed, 0x7AEu}));
            b.vae = std::make_unique<models::SpatialVae<T>>(ec.dim, config.vae, rng);
        }
        {
            models::DenoiserConfig dc;
            dc.model_dim = config.diffusion.model_dim;
            dc.depth = config.diffusion.depth;
            dc.heads = config.diffusion.heads;
            dc.latent_h = 2 * ec.grid_h();
            dc.latent_w = 2 * ec.grid_w();
            dc.latent_channels = config.vae.latent_channels;
            dc.cond_dim = config.conditioner.dim;
            core::Rng rng(core::mix_seed({config.seed, 0xD1Fu}));
            b.denoiser = std::make_unique<models::Denoiser<T>>(dc, rng);
        }
        {
            models::ConditionerConfig cc = config.conditioner;
            cc.enc_dim = ec.dim;
            core::Rng rng(core::mix_seed({config.seed, 0xC0Du}));
            b.conditioner = std::make_unique<models::Conditioner<T>>(cc, rng);
        }
        b.proxy = std::make_unique<models::PerceptualProxy<T>>(config.perceptual_seed);
        b.schedule = diffusion::make_schedule(config.diffusion.steps, config.diffusion.beta_start,
                                              config.diffusion.beta_end);
        return b;
    }

    // Trainable modules only; the teacher is derived from its seed and the
    // proxy is a fixed function, so neither is checkpointed.
    std::vector<std::pair<std::string, core::Var<T>>> named_params() const {
        std::vector<std::pair<std::string, core::Var<T>>> out;
        auto append = [&out](const std::string& prefix, const core::Module<T>& m) {
            for (auto& [name, v] : m.named_params()) out.emplace_back(prefix + "." + name, v);
        };
        append("encoder", *encoder);
        append("rgb_head", *rgb_head);
        append("decoder", *decoder);
        append("vae", *vae);
        append("denoiser", *denoiser);
        append("conditioner", *conditioner);
        return out;
    }

    void export_params(Checkpoint& ck) const {
        for (auto& [name, v] : named_params()) {
            std::vector<float> data(v.val().v.size());
            for (size_t i = 0; i < data.size(); ++i)
                data[i] = static_cast<float>(v.val().v[i]);
            ck.add(name, v.shape(), std::move(data));
        }
    }

    // Copies every matching blob into the bundle; returns how many were used.
    int import_params(const Checkpoint& ck) {
        int used = 0;
        for (auto& [name, v] : named_params()) {
            const Checkpoint::Blob* blob = ck.find(name);
            if (!blob) continue;
            if (blob->shape != v.shape())
                throw ConfigError("checkpoint blob shape mismatch for " + name);
            for (size_t i = 0; i < blob->data.size(); ++i)
                v.node()->value.v[i] = static_cast<T>(blob->data[i]);
            ++used;
        }
        return used;
    }

    void set_all_trainable(bool trainable) {
        encoder->set_trainable(trainable);
        rgb_head->set_trainable(trainable);
        decoder->set_trainable(trainable);
        vae->set_trainable(trainable);
        denoiser->set_trainable(trainable);
        conditioner->set_trainable(trainable);
    }
};

// FNV-1a over a module's parameter bytes; used by freeze-contract checks.
template <typename T>
uint64_t param_hash(const core::Module<T>& m) {
    uint64_t h = 1469598103934665603ull;
    for (auto& [name, v] : m.named_params()) {
        for (const T& x : v.val().v) {
            const unsigned char* p = reinterpret_cast<const unsigned char*>(&x);
            for (size_t b = 0; b < sizeof(T); ++b) {
                h ^= p[b];
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

}  // namespace uniugg::harness
