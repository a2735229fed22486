#include "uniugg/harness/trainer.hpp"

#include <fstream>
#include <json.hpp>
#include <map>

#include "uniugg/diffusion/diffusion.hpp"

namespace uniugg::harness {

namespace {

using Bundle = ModelBundle<float>;
using core::Var;

struct StepLoss {
    Var<float> total;
    std::map<std::string, double> components;
};

models::RgbLossWeights rgb_weights_of(const LossWeights& w) {
    models::RgbLossWeights rw;
    rw.lambda_l1 = w.lambda_l1;
    rw.lambda_perc = w.lambda_perc;
    rw.lambda_l2 = w.lambda_l2;
    rw.lambda_ssim = w.lambda_ssim;
    return rw;
}

models::SpatialLossWeights spatial_weights_of(const LossWeights& w) {
    models::SpatialLossWeights sw;
    sw.lambda1 = w.lambda1;
    sw.lambda2 = w.lambda2;
    sw.alpha_conf = w.alpha_conf;
    sw.tau = w.tau;
    return sw;
}

// ---- per-stage batch losses ------------------------------------------------

StepLoss encoder_pretrain_loss(Bundle& b, const std::vector<geometry::ScenePair>& data,
                               uint64_t run_seed, int64_t step, int batch_size) {
    using namespace core;
    const LossWeights& w = b.config.weights;
    Var<float> total;
    double c_conf = 0, c_match = 0, c_rgb = 0, c_kd = 0;
    for (int bi = 0; bi < batch_size; ++bi) {
        const auto& pair = data[static_cast<size_t>((step * batch_size + bi) % data.size())];
        auto zi = b.encoder->encode(pair.image_i);
        auto zj = b.encoder->encode(pair.image_j);
        auto [pi, pj] = b.decoder->predict_pair(zi, zj);
        auto sl = models::spatial_loss(pi, pj, pair, b.rgb_head->forward(zi),
                                       b.rgb_head->forward(zj), *b.proxy, rgb_weights_of(w),
                                       spatial_weights_of(w));
        auto zt_i = (*b.teacher)(pair.image_i);
        auto zt_j = (*b.teacher)(pair.image_j);
        auto subset_i = models::sample_token_subset(
            zi.count(), w.kd_fraction,
            core::mix_seed({run_seed, 0x5Du, static_cast<uint64_t>(step),
                            static_cast<uint64_t>(bi), 0u}));
        auto subset_j = models::sample_token_subset(
            zj.count(), w.kd_fraction,
            core::mix_seed({run_seed, 0x5Du, static_cast<uint64_t>(step),
                            static_cast<uint64_t>(bi), 1u}));
        auto kd = mul_scalar(
            add(models::kd_loss(zi.tokens, zt_i.tokens, subset_i, w.alpha, w.beta),
                models::kd_loss(zj.tokens, zt_j.tokens, subset_j, w.alpha, w.beta)),
            0.5f);
        auto pair_loss = add(sl.total, kd);
        total = total.defined() ? add(total, pair_loss) : pair_loss;
        c_conf += sl.conf.item();
        c_match += sl.match.item();
        c_rgb += sl.rgb.item();
        c_kd += kd.item();
    }
    StepLoss out;
    out.total = mul_scalar(total, 1.0f / static_cast<float>(batch_size));
    out.components = {{"l_conf", c_conf / batch_size},
                      {"l_match", c_match / batch_size},
                      {"l_rgb", c_rgb / batch_size},
                      {"l_kd", c_kd / batch_size}};
    return out;
}

StepLoss vae_stage_loss(Bundle& b, const std::vector<geometry::ScenePair>& data,
                        uint64_t run_seed, int64_t step, int batch_size) {
    using namespace core;
    const LossWeights& w = b.config.weights;
    models::VaeLossOptions opts;
    opts.gamma = w.gamma;
    opts.single_view_mse = w.single_view_mse;
    opts.mixed_reference = w.vae_mixed_reference;
    opts.rgb_weights = rgb_weights_of(w);
    opts.spatial_weights = spatial_weights_of(w);
    Var<float> total;
    double c_s = 0, c_mse = 0, c_kl = 0;
    for (int bi = 0; bi < batch_size; ++bi) {
        const auto& pair = data[static_cast<size_t>((step * batch_size + bi) % data.size())];
        auto zi = b.encoder->encode(pair.image_i);
        auto zj = b.encoder->encode(pair.image_j);
        auto bd = models::vae_loss(*b.vae, b.decoder.get(), b.rgb_head.get(), *b.proxy, zi, zj,
                                   pair, opts,
                                   core::mix_seed({run_seed, 0x0Au, static_cast<uint64_t>(step),
                                                   static_cast<uint64_t>(bi)}));
        total = total.defined() ? add(total, bd.total) : bd.total;
        c_s += bd.spatial.item();
        c_mse += bd.mse.item();
        c_kl += bd.kl.item();
    }
    StepLoss out;
    out.total = mul_scalar(total, 1.0f / static_cast<float>(batch_size));
    out.components = {{"l_s", c_s / batch_size},
                      {"l_mse", c_mse / batch_size},
                      {"l_kl", c_kl / batch_size}};
    return out;
}

StepLoss projector_alignment_loss(Bundle& b, const std::vector<geometry::ScenePair>& data,
                                  int64_t step, int batch_size) {
    using namespace core;
    Var<float> total;
    for (int bi = 0; bi < batch_size; ++bi) {
        const auto& pair = data[static_cast<size_t>((step * batch_size + bi) % data.size())];
        for (const geometry::Image* img : {&pair.image_i, &pair.image_j}) {
            auto z = b.encoder->encode(*img);
            auto target = (*b.teacher)(*img);
            auto pred = b.conditioner->input_proj.forward(z.tokens);
            auto mse = mean_all(square_(sub(pred, target.tokens)));
            total = total.defined() ? add(total, mse) : mse;
        }
    }
    StepLoss out;
    out.total = mul_scalar(total, 1.0f / static_cast<float>(2 * batch_size));
    out.components = {{"l_align", static_cast<double>(out.total.item())}};
    return out;
}

Var<float> pair_gen_loss(Bundle& b, const geometry::ScenePair& pair, uint64_t run_seed,
                         int64_t step, int bi) {
    using namespace core;
    auto zi = b.encoder->encode(pair.image_i);
    auto zj = b.encoder->encode(pair.image_j);
    auto dist_j = b.vae->encode_dist(zj);
    // deterministic latent target: the posterior mean
    Var<float> t0 = models::latent_to_rows(dist_j.mu);

    geometry::Pose target_to_ref = geometry::relative_pose(pair.pose_j, pair.pose_i);
    auto raymap = geometry::plucker_raymap(pair.intrinsics, target_to_ref,
                                           b.encoder->config().grid_h(),
                                           b.encoder->config().grid_w());
    auto queries = b.conditioner->raymap_to_queries(raymap);
    auto cond = b.conditioner->condition(zi, queries);

    uint64_t draw = core::mix_seed(
        {run_seed, 0x9Eu, static_cast<uint64_t>(step), static_cast<uint64_t>(bi)});
    core::Rng rng(draw);
    int t = static_cast<int>(rng.uniform_int(1, b.schedule.t_max));
    Var<float> eps = Var<float>::leaf(core::Tensor<float>::randn(t0.shape(), rng), false);
    return diffusion::gen_loss<float>(b.denoiser->bind(cond), t0, t, eps, b.schedule);
}

StepLoss unified_loss(Bundle& b, const std::vector<geometry::ScenePair>& data,
                      const std::vector<QaPair>& qa, uint64_t run_seed, int64_t step,
                      int batch_size, bool with_vqa) {
    using namespace core;
    Var<float> total;
    double c_gen = 0, c_vqa = 0;
    for (int bi = 0; bi < batch_size; ++bi) {
        size_t idx = static_cast<size_t>((step * batch_size + bi) % data.size());
        auto g = pair_gen_loss(b, data[idx], run_seed, step, bi);
        c_gen += g.item();
        Var<float> item = g;
        if (with_vqa) {
            const QaPair& q = qa[idx];
            models::TokenSequence answer = q.answer;
            answer.ids.push_back(models::kEosToken);
            auto zi = b.encoder->encode(data[idx].image_i);
            auto v = b.conditioner->vqa_loss(zi, q.question, answer);
            c_vqa += v.item();
            item = add(item, mul_scalar(v, static_cast<float>(b.config.weights.vqa_weight)));
        }
        total = total.defined() ? add(total, item) : item;
    }
    StepLoss out;
    out.total = mul_scalar(total, 1.0f / static_cast<float>(batch_size));
    out.components["l_gen"] = c_gen / batch_size;
    if (with_vqa) out.components["l_vqa"] = c_vqa / batch_size;
    return out;
}

// ---- orchestration ----------------------------------------------------------

void apply_stage_freezing(Bundle& b, Stage stage) {
    b.set_all_trainable(false);
    switch (stage) {
        case Stage::EncoderPretrain:
            b.encoder->set_trainable(true);
            b.rgb_head->set_trainable(true);
            b.decoder->set_trainable(true);
            break;
        case Stage::Vae:
            b.vae->set_trainable(true);
            b.decoder->set_trainable(true);
            break;
        case Stage::UnifiedS1:
            b.conditioner->input_proj.set_trainable(true);
            break;
        case Stage::UnifiedS2:
        case Stage::UnifiedS3:
            b.conditioner->set_trainable(true);
            b.denoiser->set_trainable(true);
            break;
    }
}

void load_prerequisites(Bundle& b, const RunConfig& config) {
    auto import_file = [&](const std::string& path) {
        Checkpoint ck = Checkpoint::load(path);
        return std::make_pair(ck, b.import_params(ck));
    };
    switch (config.stage) {
        case Stage::EncoderPretrain:
            break;
        case Stage::Vae: {
            if (config.encoder_ckpt.empty())
                throw ConfigError("vae stage requires encoder_ckpt");
            auto [ck, used] = import_file(config.encoder_ckpt);
            if (!ck.has_prefix("encoder."))
                throw ConfigError("encoder_ckpt has no encoder parameters");
            break;
        }
        case Stage::UnifiedS1:
        case Stage::UnifiedS2:
        case Stage::UnifiedS3: {
            if (config.vae_ckpt.empty() && config.init_ckpt.empty())
                throw ConfigError("unified stages require vae_ckpt (or init_ckpt)");
            if (!config.vae_ckpt.empty()) {
                auto [ck, used] = import_file(config.vae_ckpt);
                if (!ck.has_prefix("vae.") || !ck.has_prefix("encoder."))
                    throw ConfigError("vae_ckpt is missing encoder or vae parameters");
            }
            break;
        }
    }
    if (!config.init_ckpt.empty()) {
        Checkpoint ck = Checkpoint::load(config.init_ckpt);
        b.import_params(ck);
    }
}

}  // namespace

std::vector<geometry::ScenePair> build_dataset(const RunConfig& config) {
    std::vector<geometry::ScenePair> pairs;
    pairs.reserve(static_cast<size_t>(config.dataset.n_pairs));
    for (int k = 0; k < config.dataset.n_pairs; ++k)
        pairs.push_back(geometry::generate_scene_pair(
            core::mix_seed({config.seed, 0xDA7Au, static_cast<uint64_t>(k)}),
            config.dataset.scene));
    return pairs;
}

void save_bundle_checkpoint(const ModelBundle<float>& bundle, AdamW<float>* optimizer,
                            const std::vector<std::string>& optimizer_param_names,
                            uint64_t global_step, const std::filesystem::path& path) {
    Checkpoint ck;
    ck.global_step = global_step;
    ck.config_json = to_json_string(bundle.config);
    bundle.export_params(ck);
    if (optimizer) {
        auto& state = optimizer->state();
        for (size_t i = 0; i < state.size(); ++i) {
            const std::string& pname = optimizer_param_names[i];
            int64_t n = static_cast<int64_t>(state[i].m.size());
            ck.add("optim." + pname + ".m", {n}, state[i].m);
            ck.add("optim." + pname + ".v", {n}, state[i].v);
        }
    }
    ck.save(path);
}

StageResult run_stage(const RunConfig& config) {
    config.validate();
    Bundle bundle = Bundle::build(config);
    load_prerequisites(bundle, config);
    apply_stage_freezing(bundle, config.stage);

    // trainable parameter set, fixed registry order
    std::vector<Var<float>> train_params;
    std::vector<std::string> train_names;
    for (auto& [name, v] : bundle.named_params()) {
        if (v.requires_grad()) {
            train_params.push_back(v);
            train_names.push_back(name);
        }
    }
    if (train_params.empty()) throw ConfigError("stage has no trainable parameters");

    AdamW<float> opt(train_params, config.base_lr_for_stage(), config.optimizer.beta1,
                     config.optimizer.beta2, config.optimizer.eps,
                     config.optimizer.weight_decay);

    if (config.start_step > 0) {
        if (config.init_ckpt.empty())
            throw ConfigError("start_step > 0 requires init_ckpt with optimizer state");
        Checkpoint ck = Checkpoint::load(config.init_ckpt);
        for (size_t i = 0; i < train_names.size(); ++i) {
            const auto* m = ck.find("optim." + train_names[i] + ".m");
            const auto* v = ck.find("optim." + train_names[i] + ".v");
            if (!m || !v) throw ConfigError("init_ckpt lacks optimizer state for resume");
            opt.state()[i].m = m->data;
            opt.state()[i].v = v->data;
        }
        opt.set_step_count(config.start_step);
    }

    auto data = build_dataset(config);
    std::vector<QaPair> qa;
    if (config.stage == Stage::UnifiedS3) {
        QaVocabulary vocab = QaVocabulary::standard();
        if (vocab.size() != config.conditioner.vocab)
            throw ConfigError("conditioner vocab size does not match the QA vocabulary");
        for (const auto& pair : data) qa.push_back(make_qa(pair, config.dataset.scene, vocab));
    }

    std::filesystem::create_directories(config.out_dir);
    std::filesystem::path metrics_path = std::filesystem::path(config.out_dir) / "metrics.jsonl";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw IoError("cannot open metrics log: " + metrics_path.string());

    double base_lr = config.base_lr_for_stage();
    int64_t end_step = config.stop_step > 0 ? config.stop_step : config.total_steps;
    for (int64_t step = config.start_step; step < end_step; ++step) {
        double lr = cosine_lr(step, config.total_steps, config.optimizer.warmup_ratio, base_lr);
        opt.set_lr(lr);
        opt.zero_grad();

        StepLoss loss;
        switch (config.stage) {
            case Stage::EncoderPretrain:
                loss = encoder_pretrain_loss(bundle, data, config.seed, step,
                                             config.optimizer.batch_size);
                break;
            case Stage::Vae:
                loss = vae_stage_loss(bundle, data, config.seed, step,
                                      config.optimizer.batch_size);
                break;
            case Stage::UnifiedS1:
                loss = projector_alignment_loss(bundle, data, step, config.optimizer.batch_size);
                break;
            case Stage::UnifiedS2:
                loss = unified_loss(bundle, data, qa, config.seed, step,
                                    config.optimizer.batch_size, false);
                break;
            case Stage::UnifiedS3:
                loss = unified_loss(bundle, data, qa, config.seed, step,
                                    config.optimizer.batch_size, true);
                break;
        }

        double total = loss.total.item();
        if (!std::isfinite(total))
            throw NumericError("non-finite loss at step " + std::to_string(step));
        core::backward(loss.total);
        try {
            opt.step();
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
        }

        nlohmann::json line;
        line["step"] = step;
        line["lr"] = lr;
        line["loss"] = total;
        for (auto& [k, v] : loss.components) line[k] = v;
        metrics << line.dump() << "\n";
    }
    metrics.flush();

    StageResult res;
    res.metrics_path = metrics_path;
    res.checkpoint_path = std::filesystem::path(config.out_dir) / "checkpoint.bin";
    res.final_step = static_cast<uint64_t>(end_step);
    save_bundle_checkpoint(bundle, &opt, train_names, res.final_step, res.checkpoint_path);
    return res;
}

}  // namespace uniugg::harness
