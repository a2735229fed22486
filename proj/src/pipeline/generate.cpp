#include "uniugg/pipeline/generate.hpp"

namespace uniugg::pipeline {

namespace {

using core::Tensor;
using core::Var;

Tensor<float> squeeze_conf(const Var<float>& conf) {
    Tensor<float> out({conf.shape()[0]});
    for (int64_t i = 0; i < conf.shape()[0]; ++i) out.v[static_cast<size_t>(i)] = conf.val().at2(i, 0);
    return out;
}

GenerationResult decode_pair_result(const harness::ModelBundle<float>& bundle,
                                    const models::TokenGrid<float>& z_ref,
                                    const models::TokenGrid<float>& z_gen,
                                    const geometry::Image& ref_image,
                                    const Tensor<float>& latent_rows) {
    auto [pred_ref, pred_gen] = bundle.decoder->predict_pair(z_ref, z_gen);
    GenerationResult res;
    res.ref_pointmap = pred_ref.pointmap.val();
    res.ref_confidence = squeeze_conf(pred_ref.confidence);
    res.gen_pointmap = pred_gen.pointmap.val();
    res.gen_confidence = squeeze_conf(pred_gen.confidence);
    res.latent_rows = latent_rows;
    res.generated_tokens = z_gen.tokens.val();

    // reference colors from the input image, generated colors from the RGB head
    res.ref_colors = Tensor<float>({static_cast<int64_t>(ref_image.shape[0]) * ref_image.shape[1], 3});
    for (size_t i = 0; i < ref_image.v.size(); ++i) res.ref_colors.v[i] = ref_image.v[i];
    res.gen_colors = bundle.rgb_head->forward(z_gen).val();
    return res;
}

}  // namespace

GenerationResult generate_scene(const harness::ModelBundle<float>& bundle,
                                const geometry::Image& ref_image,
                                const geometry::Pose& target_to_ref,
                                const geometry::Intrinsics& intrinsics, uint64_t seed,
                                const GenerateOptions& options) {
    const auto& ec = bundle.encoder->config();
    auto z_ref = bundle.encoder->encode(ref_image);
    auto raymap = geometry::plucker_raymap(intrinsics, target_to_ref, ec.grid_h(), ec.grid_w());
    auto queries = bundle.conditioner->raymap_to_queries(raymap);
    auto cond = bundle.conditioner->condition(z_ref, queries);

    int64_t cells = static_cast<int64_t>(2 * ec.grid_h()) * (2 * ec.grid_w());
    Tensor<float> latent = diffusion::sample<float>(
        bundle.denoiser->bind(cond), {cells, bundle.config.vae.latent_channels}, bundle.schedule,
        seed, options.mode, options.infer_steps, options.trace);

    models::LatentToken<float> token;
    token.lh = 2 * ec.grid_h();
    token.lw = 2 * ec.grid_w();
    token.grid = models::rows_to_latent(Var<float>::leaf(latent, false), token.lh, token.lw);
    auto z_gen = bundle.vae->decode(token, ec.patch_size, ec.image_h, ec.image_w);
    return decode_pair_result(bundle, z_ref, z_gen, ref_image, latent);
}

GenerationResult decode_latent(const harness::ModelBundle<float>& bundle,
                               const geometry::Image& ref_image,
                               const core::Tensor<float>& latent_rows) {
    const auto& ec = bundle.encoder->config();
    auto z_ref = bundle.encoder->encode(ref_image);
    models::LatentToken<float> token;
    token.lh = 2 * ec.grid_h();
    token.lw = 2 * ec.grid_w();
    token.grid = models::rows_to_latent(Var<float>::leaf(latent_rows, false), token.lh, token.lw);
    auto z_gen = bundle.vae->decode(token, ec.patch_size, ec.image_h, ec.image_w);
    return decode_pair_result(bundle, z_ref, z_gen, ref_image, latent_rows);
}

models::TokenSequence describe_scene(const harness::ModelBundle<float>& bundle,
                                     const models::TokenGrid<float>& tokens,
                                     const models::TokenSequence& question, int max_len) {
    if (question.ids.empty()) throw ValidationError("describe_scene: empty question");
    question.validate();
    return bundle.conditioner->vqa_generate(tokens, question, max_len);
}

void write_generation_plys(const GenerationResult& result, double conf_threshold,
                           const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    evalio::export_ply(result.ref_pointmap, result.ref_colors, result.ref_confidence,
                       conf_threshold, out_dir / "ref_pointmap.ply");
    evalio::export_ply(result.gen_pointmap, result.gen_colors, result.gen_confidence,
                       conf_threshold, out_dir / "gen_pointmap.ply");
}

}  // namespace uniugg::pipeline
