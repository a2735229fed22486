#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "uniugg/geometry/scene.hpp"
#include "uniugg/models/conditioner.hpp"
#include "uniugg/models/denoiser.hpp"
#include "uniugg/models/spatial_decoder.hpp"
#include "uniugg/models/spatial_vae.hpp"

namespace uniugg::harness {

enum class Stage { EncoderPretrain, Vae, UnifiedS1, UnifiedS2, UnifiedS3 };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct DiffusionConfig {
    int steps = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int model_dim = 128;
    int depth = 2;
    int heads = 4;
    int infer_steps = 0;  // 0 = full schedule
    std::string sample_mode = "ancestral";
};

struct OptimizerConfig {
    double base_lr = 1e-3;
    double warmup_ratio = 0.03;
    double weight_decay = 0.01;
    int batch_size = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Every loss symbol used across the pipeline.
struct LossWeights {
    double alpha = 0.9;        // distillation cosine term
    double beta = 0.1;         // distillation L1 term
    double lambda1 = 1.0;      // match term in the spatial loss
    double lambda2 = 1.0;      // rgb term in the spatial loss
    double lambda_l1 = 1.0;    // rgb loss L1
    double lambda_perc = 1.0;  // rgb loss perceptual proxy
    double lambda_l2 = 0.0;    // optional rgb mean-squared term
    double lambda_ssim = 0.0;  // optional rgb (1 - SSIM) term
    double gamma = 1e-4;       // KL weight in the VAE loss
    double alpha_conf = 0.2;   // confidence regularizer
    double tau = 0.07;         // matching temperature
    double kd_fraction = 0.5;  // token subset fraction for distillation
    double vqa_weight = 1.0;   // VQA term in unified stage 3
    bool single_view_mse = false;
    // latent stage: decode (real reference, reconstructed target) pairs, the
    // combination the generation path uses at inference
    bool vae_mixed_reference = true;
};

struct DatasetConfig {
    int n_pairs = 8;
    geometry::SceneConfig scene;
};

struct RunConfig {
    uint64_t seed = 0;
    Stage stage = Stage::EncoderPretrain;
    std::string out_dir = "runs/out";

    models::EncoderConfig encoder;
    models::DecoderConfig decoder;
    models::VaeConfig vae;
    DiffusionConfig diffusion;
    models::ConditionerConfig conditioner;
    uint64_t teacher_seed = 7777;
    uint64_t perceptual_seed = 0x9E3779B9ull;

    OptimizerConfig optimizer;
    LossWeights weights;
    DatasetConfig dataset;

    int total_steps = 200;
    int start_step = 0;  // > 0 resumes from init_ckpt
    int stop_step = 0;   // > 0 checkpoints early at this step (schedule stays on total_steps)
    // stage name -> base lr override; stock rates: 1e-3 for unified stage 1,
    // 2e-5 for stages 2 and 3
    std::map<std::string, double> stage_lr = {
        {"unified_s1", 1e-3}, {"unified_s2", 2e-5}, {"unified_s3", 2e-5}};

    std::string encoder_ckpt;  // prerequisite for the vae stage
    std::string vae_ckpt;      // prerequisite for the unified stages
    std::string init_ckpt;     // warm start / resume

    double base_lr_for_stage() const {
        auto it = stage_lr.find(stage_name(stage));
        return it != stage_lr.end() ? it->second : optimizer.base_lr;
    }

    void validate() const;
};

std::string to_json_string(const RunConfig& config);
RunConfig config_from_json_string(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace uniugg::harness
