// Command-line entry point: data generation, the training stages, generation,
// and evaluation. One subcommand per workflow step.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "uniugg/geometry/scene_io.hpp"
#include "uniugg/harness/trainer.hpp"
#include "uniugg/pipeline/evaluate.hpp"

namespace {

using namespace uniugg;

int thread_cap() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("UNIUGG_MINI_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return std::min<unsigned>(static_cast<unsigned>(v), hw);
    }
    return static_cast<int>(hw);
}

std::string pair_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pair_%05d", index);
    return buf;
}

int cmd_gen_data(uint64_t seed, int n, const std::string& out, const std::string& config_path) {
    harness::RunConfig config;
    if (!config_path.empty()) config = harness::load_config(config_path);
    geometry::SceneConfig scene = config.dataset.scene;

    std::filesystem::path out_dir(out);
    std::filesystem::create_directories(out_dir);

    // pairs are pure functions of their seed, so the thread count never
    // changes the output
    std::vector<geometry::ScenePair> pairs(static_cast<size_t>(n));
    int workers = std::min(thread_cap(), std::max(1, n));
    std::vector<std::thread> threads;
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string error_text;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&]() {
            for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) {
                try {
                    pairs[static_cast<size_t>(k)] = geometry::generate_scene_pair(
                        core::mix_seed({seed, 0xDA7Au, static_cast<uint64_t>(k)}), scene);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed = true;
                    error_text = e.what();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failed) throw GenerationError(error_text);

    harness::QaVocabulary vocab = harness::QaVocabulary::standard();
    std::vector<harness::QaPair> qa;
    for (int k = 0; k < n; ++k) {
        geometry::save_scene_pair(pairs[static_cast<size_t>(k)], out_dir / pair_dir_name(k));
        qa.push_back(harness::make_qa(pairs[static_cast<size_t>(k)], scene, vocab));
    }
    vocab.save(out_dir / "vocab.json");
    harness::save_qa_jsonl(qa, out_dir / "qa.jsonl");
    std::cout << "wrote " << n << " scene pairs to " << out_dir.string() << "\n";
    return 0;
}

int cmd_train(harness::RunConfig config) {
    auto result = harness::run_stage(config);
    std::cout << "stage " << harness::stage_name(config.stage) << " done: checkpoint "
              << result.checkpoint_path.string() << ", metrics "
              << result.metrics_path.string() << "\n";
    return 0;
}

harness::ModelBundle<float> bundle_from_checkpoint(const std::string& ckpt_path,
                                                   bool require_all_stages) {
    harness::Checkpoint ck = harness::Checkpoint::load(ckpt_path);
    harness::RunConfig config = harness::config_from_json_string(ck.config_json);
    auto bundle = harness::ModelBundle<float>::build(config);
    bundle.import_params(ck);
    if (require_all_stages) {
        for (const char* prefix :
             {"encoder.", "decoder.", "vae.", "denoiser.", "conditioner."})
            if (!ck.has_prefix(prefix))
                throw ConfigError(std::string("checkpoint is missing ") + prefix +
                                  " parameters; run the earlier stages first");
    }
    return bundle;
}

int cmd_generate(const std::string& ckpt, const std::string& scene_dir,
                 const std::vector<double>& pose6, const std::string& out, uint64_t seed,
                 const std::string& question, int steps, const std::string& mode,
                 double conf_threshold, bool trace) {
    auto bundle = bundle_from_checkpoint(ckpt, true);
    geometry::ScenePair pair = geometry::load_scene_pair(scene_dir);
    geometry::Pose target_to_ref = geometry::pose_from_axis_angle(
        {pose6[0], pose6[1], pose6[2]}, {pose6[3], pose6[4], pose6[5]});

    pipeline::GenerateOptions opts;
    opts.infer_steps = steps;
    opts.conf_threshold = conf_threshold;
    if (mode == "deterministic")
        opts.mode = diffusion::SampleMode::Deterministic;
    else if (mode != "ancestral")
        throw ValidationError("mode must be ancestral or deterministic");
    diffusion::SamplerTrace trace_log;
    if (trace) opts.trace = &trace_log;

    auto result = pipeline::generate_scene(bundle, pair.image_i, target_to_ref, pair.intrinsics,
                                           seed, opts);
    std::filesystem::path out_dir(out);
    pipeline::write_generation_plys(result, conf_threshold, out_dir);

    // sampled latent, little-endian row-major float32
    {
        std::ofstream f(out_dir / "latent.f32", std::ios::binary);
        f.write(reinterpret_cast<const char*>(result.latent_rows.v.data()),
                static_cast<std::streamsize>(result.latent_rows.v.size() * sizeof(float)));
        if (!f) throw IoError("cannot write latent.f32");
    }
    if (trace) {
        std::ofstream f(out_dir / "trace.jsonl");
        for (const auto& e : trace_log)
            f << "{\"step\":" << e.step << ",\"mean\":" << e.mean << ",\"std\":" << e.stddev
              << "}\n";
        if (!f) throw IoError("cannot write trace.jsonl");
    }

    if (!question.empty()) {
        harness::QaVocabulary vocab = harness::QaVocabulary::standard();
        models::TokenSequence q = vocab.encode(question);
        models::TokenGrid<float> z_gen;
        z_gen.tokens = core::Var<float>::leaf(result.generated_tokens, false);
        const auto& ec = bundle.encoder->config();
        z_gen.grid_h = ec.grid_h();
        z_gen.grid_w = ec.grid_w();
        z_gen.patch_size = ec.patch_size;
        z_gen.source_h = ec.image_h;
        z_gen.source_w = ec.image_w;
        auto answer = pipeline::describe_scene(bundle, z_gen, q);
        std::ofstream f(out_dir / "answer.txt");
        f << vocab.decode(answer) << "\n";
    }
    std::cout << "wrote " << (out_dir / "gen_pointmap.ply").string() << " and "
              << (out_dir / "ref_pointmap.ply").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data_dir, const std::string& report,
                 bool no_generation, uint64_t seed, int steps) {
    auto bundle = bundle_from_checkpoint(ckpt, !no_generation);
    pipeline::EvaluateOptions opts;
    opts.with_generation = !no_generation;
    opts.seed = seed;
    opts.infer_steps = steps;
    pipeline::evaluate_dataset(bundle, data_dir, report, opts);
    std::cout << "wrote report " << report << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale unified spatial understanding and generation pipeline"};
    app.require_subcommand(1);

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "generate synthetic scene pairs");
    uint64_t gd_seed = 0;
    int gd_n = 8;
    std::string gd_out = "data";
    std::string gd_config;
    gen_data->add_option("--seed", gd_seed, "dataset seed");
    gen_data->add_option("--n", gd_n, "number of pairs")->check(CLI::PositiveNumber);
    gen_data->add_option("--out", gd_out, "output directory")->required();
    gen_data->add_option("--config", gd_config, "run config supplying the scene parameters");

    // training stages
    std::string cfg_path, encoder_ckpt, vae_ckpt, init_ckpt, out_override;
    auto* pretrain = app.add_subcommand("pretrain-encoder", "geometric-semantic encoder pretraining");
    pretrain->add_option("--config", cfg_path, "run config JSON")->required();
    pretrain->add_option("--out", out_override, "override out_dir");

    auto* train_vae = app.add_subcommand("train-vae", "latent token learning");
    train_vae->add_option("--config", cfg_path, "run config JSON")->required();
    train_vae->add_option("--encoder-ckpt", encoder_ckpt, "encoder pretraining checkpoint");
    train_vae->add_option("--out", out_override, "override out_dir");

    auto* train_unified = app.add_subcommand("train-unified", "unified understanding/generation");
    int unified_stage = 1;
    train_unified->add_option("--config", cfg_path, "run config JSON")->required();
    train_unified->add_option("--stage", unified_stage, "1, 2 or 3")
        ->check(CLI::Range(1, 3))
        ->required();
    train_unified->add_option("--vae-ckpt", vae_ckpt, "latent stage checkpoint");
    train_unified->add_option("--init-ckpt", init_ckpt, "warm start checkpoint");
    train_unified->add_option("--out", out_override, "override out_dir");

    // generate
    auto* generate = app.add_subcommand("generate", "novel-view 3D generation");
    std::string g_ckpt, g_scene, g_out = "generated", g_question, g_mode = "ancestral";
    std::vector<double> g_pose;
    uint64_t g_seed = 0;
    int g_steps = -1;
    double g_conf = 1.0;
    generate->add_option("--ckpt", g_ckpt, "checkpoint with all stage outputs")->required();
    generate->add_option("--scene-dir", g_scene, "scene pair directory with the reference image")
        ->required();
    generate
        ->add_option("--pose", g_pose,
                     "target view as axis-angle + translation (rx ry rz tx ty tz)")
        ->expected(6)
        ->required();
    generate->add_option("--out", g_out, "output directory")->required();
    generate->add_option("--seed", g_seed, "sampling seed");
    generate->add_option("--question", g_question, "optional spatial question");
    generate->add_option("--steps", g_steps, "inference steps (default: full schedule)");
    generate->add_option("--mode", g_mode, "ancestral or deterministic");
    generate->add_option("--conf-threshold", g_conf, "confidence threshold for PLY points");
    bool g_trace = false;
    generate->add_flag("--trace", g_trace, "log the sampler trajectory to trace.jsonl");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "depth / chamfer report over a dataset");
    std::string e_ckpt, e_data, e_report = "report.json";
    bool e_nogen = false;
    uint64_t e_seed = 0;
    int e_steps = -1;
    evaluate->add_option("--ckpt", e_ckpt, "checkpoint")->required();
    evaluate->add_option("--data-dir", e_data, "directory of pair_* scene dirs")->required();
    evaluate->add_option("--report", e_report, "output JSON report")->required();
    evaluate->add_flag("--no-generation", e_nogen, "reconstruction metrics only");
    evaluate->add_option("--seed", e_seed, "generation seed");
    evaluate->add_option("--steps", e_steps, "inference steps for generation");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_data) return cmd_gen_data(gd_seed, gd_n, gd_out, gd_config);
        if (*pretrain || *train_vae || *train_unified) {
            harness::RunConfig config = harness::load_config(cfg_path);
            if (*pretrain) config.stage = harness::Stage::EncoderPretrain;
            if (*train_vae) {
                config.stage = harness::Stage::Vae;
                if (!encoder_ckpt.empty()) config.encoder_ckpt = encoder_ckpt;
            }
            if (*train_unified) {
                config.stage = unified_stage == 1   ? harness::Stage::UnifiedS1
                               : unified_stage == 2 ? harness::Stage::UnifiedS2
                                                    : harness::Stage::UnifiedS3;
                if (!vae_ckpt.empty()) config.vae_ckpt = vae_ckpt;
                if (!init_ckpt.empty()) config.init_ckpt = init_ckpt;
            }
            if (!out_override.empty()) config.out_dir = out_override;
            return cmd_train(config);
        }
        if (*generate)
            return cmd_generate(g_ckpt, g_scene, g_pose, g_out, g_seed, g_question, g_steps,
                                g_mode, g_conf, g_trace);
        if (*evaluate) return cmd_evaluate(e_ckpt, e_data, e_report, e_nogen, e_seed, e_steps);
    } catch (const uniugg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
