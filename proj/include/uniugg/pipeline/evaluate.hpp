#pragma once

#include "uniugg/pipeline/generate.hpp"

namespace uniugg::pipeline {

struct EvaluateOptions {
    bool with_generation = true;  // requires unified-stage parameters
    evalio::ScalingMode scaling = evalio::ScalingMode::PerFrameMedian;
    int infer_steps = -1;
    uint64_t seed = 0;
};

// Walks the pair_* directories under data_dir, computes reconstruction depth
// and Chamfer metrics per scene (plus generated-vs-baseline Chamfer when
// generation is enabled) and writes a JSON report.
void evaluate_dataset(const harness::ModelBundle<float>& bundle,
                      const std::filesystem::path& data_dir,
                      const std::filesystem::path& report_path, const EvaluateOptions& options);

// Scale alignment used for Chamfer comparisons of scale-free predictions:
// rescales `cloud` by median(|ref|)/median(|cloud|).
std::vector<Eigen::Vector3d> median_align(std::vector<Eigen::Vector3d> cloud,
                                          const std::vector<Eigen::Vector3d>& reference);

}  // namespace uniugg::pipeline
