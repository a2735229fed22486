#include "uniugg/harness/run_config.hpp"

#include <fstream>
#include <json.hpp>

namespace uniugg::harness {

using nlohmann::json;

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::EncoderPretrain: return "encoder_pretrain";
        case Stage::Vae: return "vae";
        case Stage::UnifiedS1: return "unified_s1";
        case Stage::UnifiedS2: return "unified_s2";
        case Stage::UnifiedS3: return "unified_s3";
    }
    throw ValidationError("unknown stage enum value");
}

Stage stage_from_name(const std::string& name) {
    if (name == "encoder_pretrain") return Stage::EncoderPretrain;
    if (name == "vae") return Stage::Vae;
    if (name == "unified_s1") return Stage::UnifiedS1;
    if (name == "unified_s2") return Stage::UnifiedS2;
    if (name == "unified_s3") return Stage::UnifiedS3;
    throw ValidationError("unknown stage: " + name);
}

namespace {

json scene_to_json(const geometry::SceneConfig& s) {
    return json{{"width", s.width},
                {"height", s.height},
                {"focal", s.focal},
                {"n_planes", s.n_planes},
                {"n_boxes", s.n_boxes},
                {"depth_min", s.depth_min},
                {"depth_max", s.depth_max},
                {"extent_min", s.extent_min},
                {"extent_max", s.extent_max},
                {"baseline_min", s.baseline_min},
                {"baseline_max", s.baseline_max},
                {"max_rotation", s.max_rotation},
                {"pose_i_jitter", s.pose_i_jitter},
                {"background_plane", s.background_plane},
                {"background_depth", s.background_depth},
                {"min_overlap", s.min_overlap},
                {"min_correspondences", s.min_correspondences},
                {"max_correspondences", s.max_correspondences},
                {"max_retries", s.max_retries}};
}

geometry::SceneConfig scene_from_json(const json& j) {
    geometry::SceneConfig s;
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.focal = j.value("focal", s.focal);
    s.n_planes = j.value("n_planes", s.n_planes);
    s.n_boxes = j.value("n_boxes", s.n_boxes);
    s.depth_min = j.value("depth_min", s.depth_min);
    s.depth_max = j.value("depth_max", s.depth_max);
    s.extent_min = j.value("extent_min", s.extent_min);
    s.extent_max = j.value("extent_max", s.extent_max);
    s.baseline_min = j.value("baseline_min", s.baseline_min);
    s.baseline_max = j.value("baseline_max", s.baseline_max);
    s.max_rotation = j.value("max_rotation", s.max_rotation);
    s.pose_i_jitter = j.value("pose_i_jitter", s.pose_i_jitter);
    s.background_plane = j.value("background_plane", s.background_plane);
    s.background_depth = j.value("background_depth", s.background_depth);
    s.min_overlap = j.value("min_overlap", s.min_overlap);
    s.min_correspondences = j.value("min_correspondences", s.min_correspondences);
    s.max_correspondences = j.value("max_correspondences", s.max_correspondences);
    s.max_retries = j.value("max_retries", s.max_retries);
    return s;
}

}  // namespace

void RunConfig::validate() const {
    encoder.validate();
    decoder.validate();
    vae.validate();
    conditioner.validate();
    if (optimizer.warmup_ratio < 0.0 || optimizer.warmup_ratio >= 1.0)
        throw ValidationError("config: warmup_ratio must be in [0,1)");
    if (optimizer.batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    const double all_weights[] = {weights.alpha,     weights.beta,       weights.lambda1,
                                  weights.lambda2,   weights.lambda_l1,  weights.lambda_perc,
                                  weights.lambda_l2, weights.lambda_ssim, weights.gamma,
                                  weights.alpha_conf, weights.tau,       weights.vqa_weight};
    for (double w : all_weights)
        if (w < 0.0) throw ValidationError("config: loss weights must be >= 0");
    if (weights.kd_fraction <= 0.0 || weights.kd_fraction > 1.0)
        throw ValidationError("config: kd_fraction must be in (0,1]");
    if (total_steps < 1) throw ValidationError("config: total_steps must be >= 1");
    if (start_step < 0 || start_step > total_steps)
        throw ValidationError("config: start_step out of range");
    if (stop_step != 0 && (stop_step <= start_step || stop_step > total_steps))
        throw ValidationError("config: stop_step out of range");
    if (dataset.n_pairs < 1) throw ValidationError("config: dataset needs at least one pair");
    if (encoder.image_h != dataset.scene.height || encoder.image_w != dataset.scene.width)
        throw ValidationError("config: encoder image size must match the scene size");
    if (conditioner.enc_dim != encoder.dim)
        throw ValidationError("config: conditioner.enc_dim must equal encoder.dim");
    if (diffusion.steps < 1) throw ValidationError("config: diffusion steps must be >= 1");
}

std::string to_json_string(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["stage"] = stage_name(c.stage);
    j["out_dir"] = c.out_dir;
    j["encoder"] = {{"patch_size", c.encoder.patch_size}, {"dim", c.encoder.dim},
                    {"depth", c.encoder.depth},           {"heads", c.encoder.heads},
                    {"image_h", c.encoder.image_h},       {"image_w", c.encoder.image_w}};
    j["decoder"] = {{"dim", c.decoder.dim},
                    {"depth", c.decoder.depth},
                    {"heads", c.decoder.heads},
                    {"descriptor_dim", c.decoder.descriptor_dim},
                    {"share_branches", c.decoder.share_branches}};
    j["vae"] = {{"base_channels", c.vae.base_channels},
                {"mid_channels", c.vae.mid_channels},
                {"blocks", c.vae.blocks},
                {"heads", c.vae.heads},
                {"latent_channels", c.vae.latent_channels}};
    j["diffusion"] = {{"steps", c.diffusion.steps},
                      {"beta_start", c.diffusion.beta_start},
                      {"beta_end", c.diffusion.beta_end},
                      {"model_dim", c.diffusion.model_dim},
                      {"depth", c.diffusion.depth},
                      {"heads", c.diffusion.heads},
                      {"infer_steps", c.diffusion.infer_steps},
                      {"sample_mode", c.diffusion.sample_mode}};
    j["conditioner"] = {{"dim", c.conditioner.dim},
                        {"depth", c.conditioner.depth},
                        {"heads", c.conditioner.heads},
                        {"vocab", c.conditioner.vocab},
                        {"max_seq", c.conditioner.max_seq}};
    j["teacher_seed"] = c.teacher_seed;
    j["perceptual_seed"] = c.perceptual_seed;
    j["optimizer"] = {{"base_lr", c.optimizer.base_lr},
                      {"warmup_ratio", c.optimizer.warmup_ratio},
                      {"weight_decay", c.optimizer.weight_decay},
                      {"batch_size", c.optimizer.batch_size},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps}};
    j["loss_weights"] = {{"alpha", c.weights.alpha},
                         {"beta", c.weights.beta},
                         {"lambda1", c.weights.lambda1},
                         {"lambda2", c.weights.lambda2},
                         {"lambda_l1", c.weights.lambda_l1},
                         {"lambda_perc", c.weights.lambda_perc},
                         {"lambda_l2", c.weights.lambda_l2},
                         {"lambda_ssim", c.weights.lambda_ssim},
                         {"gamma", c.weights.gamma},
                         {"alpha_conf", c.weights.alpha_conf},
                         {"tau", c.weights.tau},
                         {"kd_fraction", c.weights.kd_fraction},
                         {"vqa_weight", c.weights.vqa_weight},
                         {"single_view_mse", c.weights.single_view_mse},
                         {"vae_mixed_reference", c.weights.vae_mixed_reference}};
    j["dataset"] = {{"n_pairs", c.dataset.n_pairs}, {"scene", scene_to_json(c.dataset.scene)}};
    j["total_steps"] = c.total_steps;
    j["start_step"] = c.start_step;
    j["stop_step"] = c.stop_step;
    j["stage_lr"] = c.stage_lr;
    j["encoder_ckpt"] = c.encoder_ckpt;
    j["vae_ckpt"] = c.vae_ckpt;
    j["init_ckpt"] = c.init_ckpt;
    return j.dump(2);
}

RunConfig config_from_json_string(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("stage")) c.stage = stage_from_name(j.at("stage").get<std::string>());
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        c.encoder.patch_size = e.value("patch_size", c.encoder.patch_size);
        c.encoder.dim = e.value("dim", c.encoder.dim);
        c.encoder.depth = e.value("depth", c.encoder.depth);
        c.encoder.heads = e.value("heads", c.encoder.heads);
        c.encoder.image_h = e.value("image_h", c.encoder.image_h);
        c.encoder.image_w = e.value("image_w", c.encoder.image_w);
    }
    if (j.contains("decoder")) {
        const auto& d = j.at("decoder");
        c.decoder.dim = d.value("dim", c.decoder.dim);
        c.decoder.depth = d.value("depth", c.decoder.depth);
        c.decoder.heads = d.value("heads", c.decoder.heads);
        c.decoder.descriptor_dim = d.value("descriptor_dim", c.decoder.descriptor_dim);
        c.decoder.share_branches = d.value("share_branches", c.decoder.share_branches);
    }
    if (j.contains("vae")) {
        const auto& v = j.at("vae");
        c.vae.base_channels = v.value("base_channels", c.vae.base_channels);
        c.vae.mid_channels = v.value("mid_channels", c.vae.mid_channels);
        c.vae.blocks = v.value("blocks", c.vae.blocks);
        c.vae.heads = v.value("heads", c.vae.heads);
        c.vae.latent_channels = v.value("latent_channels", c.vae.latent_channels);
    }
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        c.diffusion.steps = d.value("steps", c.diffusion.steps);
        c.diffusion.beta_start = d.value("beta_start", c.diffusion.beta_start);
        c.diffusion.beta_end = d.value("beta_end", c.diffusion.beta_end);
        c.diffusion.model_dim = d.value("model_dim", c.diffusion.model_dim);
        c.diffusion.depth = d.value("depth", c.diffusion.depth);
        c.diffusion.heads = d.value("heads", c.diffusion.heads);
        c.diffusion.infer_steps = d.value("infer_steps", c.diffusion.infer_steps);
        c.diffusion.sample_mode = d.value("sample_mode", c.diffusion.sample_mode);
    }
    if (j.contains("conditioner")) {
        const auto& q = j.at("conditioner");
        c.conditioner.dim = q.value("dim", c.conditioner.dim);
        c.conditioner.depth = q.value("depth", c.conditioner.depth);
        c.conditioner.heads = q.value("heads", c.conditioner.heads);
        c.conditioner.vocab = q.value("vocab", c.conditioner.vocab);
        c.conditioner.max_seq = q.value("max_seq", c.conditioner.max_seq);
    }
    c.teacher_seed = j.value("teacher_seed", c.teacher_seed);
    c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        c.optimizer.base_lr = o.value("base_lr", c.optimizer.base_lr);
        c.optimizer.warmup_ratio = o.value("warmup_ratio", c.optimizer.warmup_ratio);
        c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
        c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
        c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
        c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
        c.optimizer.eps = o.value("eps", c.optimizer.eps);
    }
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        c.weights.alpha = w.value("alpha", c.weights.alpha);
        c.weights.beta = w.value("beta", c.weights.beta);
        c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
        c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
        c.weights.lambda_l1 = w.value("lambda_l1", c.weights.lambda_l1);
        c.weights.lambda_perc = w.value("lambda_perc", c.weights.lambda_perc);
        c.weights.lambda_l2 = w.value("lambda_l2", c.weights.lambda_l2);
        c.weights.lambda_ssim = w.value("lambda_ssim", c.weights.lambda_ssim);
        c.weights.gamma = w.value("gamma", c.weights.gamma);
        c.weights.alpha_conf = w.value("alpha_conf", c.weights.alpha_conf);
        c.weights.tau = w.value("tau", c.weights.tau);
        c.weights.kd_fraction = w.value("kd_fraction", c.weights.kd_fraction);
        c.weights.vqa_weight = w.value("vqa_weight", c.weights.vqa_weight);
        c.weights.single_view_mse = w.value("single_view_mse", c.weights.single_view_mse);
        c.weights.vae_mixed_reference = w.value("vae_mixed_reference", c.weights.vae_mixed_reference);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.dataset.n_pairs = d.value("n_pairs", c.dataset.n_pairs);
        if (d.contains("scene")) c.dataset.scene = scene_from_json(d.at("scene"));
    }
    c.total_steps = j.value("total_steps", c.total_steps);
    c.start_step = j.value("start_step", c.start_step);
    c.stop_step = j.value("stop_step", c.stop_step);
    if (j.contains("stage_lr"))
        c.stage_lr = j.at("stage_lr").get<std::map<std::string, double>>();
    c.encoder_ckpt = j.value("encoder_ckpt", c.encoder_ckpt);
    c.vae_ckpt = j.value("vae_ckpt", c.vae_ckpt);
    c.init_ckpt = j.value("init_ckpt", c.init_ckpt);
    // keep dependent fields coherent
    c.conditioner.enc_dim = c.encoder.dim;
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from_json_string(text);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << to_json_string(config) << "\n";
}

}  // namespace uniugg::harness
