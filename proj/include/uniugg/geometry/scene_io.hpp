#pragma once

#include <filesystem>

#include "uniugg/geometry/scene.hpp"

namespace uniugg::geometry {

// ScenePair directory layout:
//   meta.json       seed, intrinsics, poses (row-major rotation + translation)
//   image_i.ppm     binary P6, 8-bit
//   image_j.ppm
//   pointmap_ii.f32 little-endian float32, row-major H*W*3
//   pointmap_ji.f32
//   mask_i.u8       H*W bytes, 1 = valid
//   mask_j.u8
//   corr.f32        N*4 float32 (x_i, y_i, x_j, y_j)
void save_scene_pair(const ScenePair& pair, const std::filesystem::path& dir);
ScenePair load_scene_pair(const std::filesystem::path& dir);

void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace uniugg::geometry
