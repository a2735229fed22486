#pragma once

#include "uniugg/eval/metrics.hpp"
#include "uniugg/harness/bundle.hpp"
#include "uniugg/harness/qa.hpp"

namespace uniugg::pipeline {

struct GenerationResult {
    // reference branch, decoded jointly with the generated view
    core::Tensor<float> ref_pointmap;    // [H*W, 3]
    core::Tensor<float> ref_confidence;  // [H*W]
    core::Tensor<float> ref_colors;      // [H*W, 3]
    // generated target view
    core::Tensor<float> gen_pointmap;
    core::Tensor<float> gen_confidence;
    core::Tensor<float> gen_colors;
    // the sampled latent and decoded tokens, for downstream consumers
    core::Tensor<float> latent_rows;       // [cells, 4]
    core::Tensor<float> generated_tokens;  // [N, d]
};

struct GenerateOptions {
    diffusion::SampleMode mode = diffusion::SampleMode::Ancestral;
    int infer_steps = -1;  // -1 = full schedule
    double conf_threshold = 1.0;
    diffusion::SamplerTrace* trace = nullptr;
};

// Full inference chain: encode reference -> raymap -> queries -> conditional
// features -> reverse diffusion -> VAE decode -> joint spatial decode.
// `target_to_ref` maps target-view camera coordinates into the reference
// frame. Deterministic per (seed, mode).
GenerationResult generate_scene(const harness::ModelBundle<float>& bundle,
                                const geometry::Image& ref_image,
                                const geometry::Pose& target_to_ref,
                                const geometry::Intrinsics& intrinsics, uint64_t seed,
                                const GenerateOptions& options = {});

// Decode an externally supplied latent (e.g. a random-latent baseline)
// through the VAE and the spatial decoder against the same reference.
GenerationResult decode_latent(const harness::ModelBundle<float>& bundle,
                               const geometry::Image& ref_image,
                               const core::Tensor<float>& latent_rows);

// VQA over real or generated token grids; empty questions are rejected.
models::TokenSequence describe_scene(const harness::ModelBundle<float>& bundle,
                                     const models::TokenGrid<float>& tokens,
                                     const models::TokenSequence& question, int max_len = 8);

void write_generation_plys(const GenerationResult& result, double conf_threshold,
                           const std::filesystem::path& out_dir);

}  // namespace uniugg::pipeline
