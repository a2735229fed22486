#pragma once

#include "uniugg/harness/bundle.hpp"
#include "uniugg/harness/optim.hpp"
#include "uniugg/harness/qa.hpp"

namespace uniugg::harness {

struct StageResult {
    std::filesystem::path checkpoint_path;
    std::filesystem::path metrics_path;
    uint64_t final_step = 0;
};

// Deterministic dataset for a run: pair k is generated from
// mix(seed, 0xDA7A, k).
std::vector<geometry::ScenePair> build_dataset(const RunConfig& config);

// Runs one training stage to completion: loads prerequisite checkpoints,
// freezes everything outside the stage's trainable set, emits one JSONL
// metrics line per step, and writes a full-bundle checkpoint (with optimizer
// state) to <out_dir>/checkpoint.bin.
StageResult run_stage(const RunConfig& config);

// Saves `bundle` (all modules + optimizer state) with the given step.
void save_bundle_checkpoint(const ModelBundle<float>& bundle, AdamW<float>* optimizer,
                            const std::vector<std::string>& optimizer_param_names,
                            uint64_t global_step, const std::filesystem::path& path);

}  // namespace uniugg::harness
