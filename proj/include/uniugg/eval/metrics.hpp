#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "uniugg/geometry/types.hpp"

namespace uniugg::evalio {

enum class ScalingMode { None, PerFrameMedian };

struct DepthReport {
    double abs_rel = 0.0;
    double delta_125 = 0.0;  // fraction within a 1.25 ratio
    int64_t n_valid = 0;
    ScalingMode scaling = ScalingMode::None;
};

// abs_rel = mean |pred - gt| / gt over valid pixels with gt > 0;
// PerFrameMedian rescales pred by median(gt)/median(pred) first.
DepthReport depth_metrics(const core::Tensor<float>& pred, const core::Tensor<float>& gt,
                          const geometry::Mask& mask, ScalingMode scaling);

// Symmetric mean nearest-neighbor distance: 0.5 * (mean_a min_b + mean_b min_a).
// Exact O(n^2).
double chamfer(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b);

std::vector<Eigen::Vector3d> pointmap_to_cloud(const core::Tensor<float>& points_rows,
                                               const geometry::Mask& mask);

// ASCII PLY with float x,y,z and uchar red,green,blue; only rows whose
// confidence >= threshold are emitted and the header count is exact.
void export_ply(const core::Tensor<float>& points_rows,   // [N,3]
                const core::Tensor<float>& colors_rows,   // [N,3] in [0,1]
                const core::Tensor<float>& confidence,    // [N] or [N,1]
                double conf_threshold, const std::filesystem::path& path);

}  // namespace uniugg::evalio
