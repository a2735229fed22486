#pragma once

#include <optional>
#include <vector>

#include "uniugg/geometry/types.hpp"

namespace uniugg::geometry {

// Procedural scene recipe: textured fronto-parallel rectangles and axis-
// aligned boxes, rendered by exact ray-primitive intersection.
struct SceneConfig {
    int width = 64;
    int height = 64;
    double focal = 64.0;  // fx = fy; cx, cy at the image center

    int n_planes = 2;
    int n_boxes = 2;
    double depth_min = 1.5;
    double depth_max = 3.5;
    double extent_min = 0.35;
    double extent_max = 1.2;

    double baseline_min = 0.15;
    double baseline_max = 0.45;
    double max_rotation = 0.12;   // radians, second camera
    double pose_i_jitter = 0.0;   // radians / units applied to the first camera

    bool background_plane = true;
    double background_depth = 6.0;

    double min_overlap = 0.3;
    int min_correspondences = 64;
    int max_correspondences = 512;
    int max_retries = 100;

    Intrinsics intrinsics() const {
        return {focal, focal, width / 2.0, height / 2.0, width, height};
    }
};

struct ScenePair {
    Image image_i, image_j;
    Intrinsics intrinsics;
    Pose pose_i, pose_j;  // world -> camera
    PointMap gt_pointmap_ii, gt_pointmap_ji;  // both in the camera-i frame
    Mask valid_i, valid_j;
    std::vector<Correspondence> correspondences;
    uint64_t seed = 0;
};

// Deterministic in `seed`; throws GenerationError if the overlap and
// correspondence requirements cannot be met within config.max_retries.
ScenePair generate_scene_pair(uint64_t seed, const SceneConfig& config);

struct DepthMap {
    core::Tensor<float> z;      // [H,W]
    core::Tensor<uint8_t> valid;  // [H,W]
};

DepthMap pointmap_to_depth(const PointMap& pointmap, const Mask& mask);

}  // namespace uniugg::geometry
