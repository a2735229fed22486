#include "uniugg/pipeline/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "uniugg/geometry/scene_io.hpp"

namespace uniugg::pipeline {

namespace {

double median_norm(const std::vector<Eigen::Vector3d>& cloud) {
    std::vector<double> norms;
    norms.reserve(cloud.size());
    for (const auto& p : cloud) norms.push_back(p.norm());
    std::sort(norms.begin(), norms.end());
    size_t n = norms.size();
    return n % 2 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
}

}  // namespace

std::vector<Eigen::Vector3d> median_align(std::vector<Eigen::Vector3d> cloud,
                                          const std::vector<Eigen::Vector3d>& reference) {
    double mc = median_norm(cloud);
    if (mc <= 0.0) return cloud;
    double s = median_norm(reference) / mc;
    for (auto& p : cloud) p *= s;
    return cloud;
}

void evaluate_dataset(const harness::ModelBundle<float>& bundle,
                      const std::filesystem::path& data_dir,
                      const std::filesystem::path& report_path, const EvaluateOptions& options) {
    std::vector<std::filesystem::path> scene_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json"))
            scene_dirs.push_back(entry.path());
    std::sort(scene_dirs.begin(), scene_dirs.end());
    if (scene_dirs.empty()) throw IoError("no scene directories under " + data_dir.string());

    nlohmann::json scenes = nlohmann::json::array();
    double sum_abs_rel = 0, sum_delta = 0, sum_cham = 0, sum_gen = 0, sum_base = 0;
    int n_gen = 0;

    for (const auto& dir : scene_dirs) {
        geometry::ScenePair pair = geometry::load_scene_pair(dir);
        auto zi = bundle.encoder->encode(pair.image_i);
        auto zj = bundle.encoder->encode(pair.image_j);
        auto [pred_i, pred_j] = bundle.decoder->predict_pair(zi, zj);

        // depth metrics on the reference view
        int64_t hw = static_cast<int64_t>(pair.intrinsics.height) * pair.intrinsics.width;
        core::Tensor<float> pred_z({hw});
        core::Tensor<float> gt_z({hw});
        for (int64_t p = 0; p < hw; ++p) {
            pred_z.v[static_cast<size_t>(p)] = pred_i.pointmap.val().at2(p, 2);
            gt_z.v[static_cast<size_t>(p)] = pair.gt_pointmap_ii.v[static_cast<size_t>(p * 3 + 2)];
        }
        geometry::Mask flat_mask({hw}, pair.valid_i.v);
        evalio::DepthReport depth = evalio::depth_metrics(pred_z, gt_z, flat_mask, options.scaling);

        // reconstruction chamfer on the reference view
        core::Tensor<float> gt_rows({hw, 3}, pair.gt_pointmap_ii.v);
        auto gt_cloud = evalio::pointmap_to_cloud(gt_rows, flat_mask);
        auto pred_cloud = evalio::pointmap_to_cloud(pred_i.pointmap.val(), flat_mask);
        double cham_raw = evalio::chamfer(pred_cloud, gt_cloud);
        double cham_aligned = evalio::chamfer(median_align(pred_cloud, gt_cloud), gt_cloud);

        nlohmann::json scene;
        scene["dir"] = dir.filename().string();
        scene["seed"] = pair.seed;
        scene["depth"] = {{"abs_rel", depth.abs_rel},
                          {"delta_125", depth.delta_125},
                          {"n_valid", depth.n_valid},
                          {"scaling", options.scaling == evalio::ScalingMode::PerFrameMedian
                                          ? "per_frame_median"
                                          : "none"}};
        scene["chamfer_recon"] = cham_raw;
        scene["chamfer_recon_aligned"] = cham_aligned;
        sum_abs_rel += depth.abs_rel;
        sum_delta += depth.delta_125;
        sum_cham += cham_aligned;

        if (options.with_generation) {
            geometry::Pose target_to_ref = geometry::relative_pose(pair.pose_j, pair.pose_i);
            GenerateOptions gopt;
            gopt.infer_steps = options.infer_steps;
            auto gen = generate_scene(bundle, pair.image_i, target_to_ref, pair.intrinsics,
                                      core::mix_seed({options.seed, pair.seed}), gopt);

            core::Tensor<float> gt_j_rows({hw, 3}, pair.gt_pointmap_ji.v);
            geometry::Mask flat_mask_j({hw}, pair.valid_j.v);
            auto gt_target = evalio::pointmap_to_cloud(gt_j_rows, flat_mask_j);
            geometry::Mask all_on({hw}, static_cast<uint8_t>(1));
            auto gen_cloud = evalio::pointmap_to_cloud(gen.gen_pointmap, all_on);

            core::Rng rng(core::mix_seed({options.seed, pair.seed, 0xBA5Eu}));
            core::Tensor<float> random_latent =
                core::Tensor<float>::randn(gen.latent_rows.shape, rng);
            auto baseline = decode_latent(bundle, pair.image_i, random_latent);
            auto base_cloud = evalio::pointmap_to_cloud(baseline.gen_pointmap, all_on);

            double cham_gen = evalio::chamfer(median_align(gen_cloud, gt_target), gt_target);
            double cham_base = evalio::chamfer(median_align(base_cloud, gt_target), gt_target);
            scene["chamfer_gen_aligned"] = cham_gen;
            scene["chamfer_baseline_aligned"] = cham_base;
            sum_gen += cham_gen;
            sum_base += cham_base;
            ++n_gen;
        }
        scenes.push_back(scene);
    }

    nlohmann::json report;
    report["scenes"] = scenes;
    double n = static_cast<double>(scene_dirs.size());
    report["aggregate"] = {{"mean_abs_rel", sum_abs_rel / n},
                           {"mean_delta_125", sum_delta / n},
                           {"mean_chamfer_recon_aligned", sum_cham / n}};
    if (n_gen > 0) {
        report["aggregate"]["mean_chamfer_gen_aligned"] = sum_gen / n_gen;
        report["aggregate"]["mean_chamfer_baseline_aligned"] = sum_base / n_gen;
    }
    std::ofstream f(report_path);
    if (!f) throw IoError("cannot open report for writing: " + report_path.string());
    f << report.dump(2) << "\n";
}

}  // namespace uniugg::pipeline
