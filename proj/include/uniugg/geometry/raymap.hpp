#pragma once

#include "uniugg/geometry/types.hpp"

namespace uniugg::geometry {

// Per-cell Pluecker coordinates of the target view's rays, expressed in the
// reference camera frame. Channels 0-2: unit direction d, channels 3-5:
// moment m = o x d with o the target camera center in the reference frame.
struct Raymap {
    core::Tensor<double> grid;  // [H_t, W_t, 6]

    int64_t grid_h() const { return grid.shape[0]; }
    int64_t grid_w() const { return grid.shape[1]; }
};

// `target_to_ref` maps target-view camera coordinates into the reference
// frame, i.e. relative_pose(pose_target, pose_ref). Rays are sampled at the
// centers of the token cells, one per cell.
Raymap plucker_raymap(const Intrinsics& intrinsics, const Pose& target_to_ref, int grid_h,
                      int grid_w);

}  // namespace uniugg::geometry
