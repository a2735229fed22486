#include "uniugg/geometry/raymap.hpp"

namespace uniugg::geometry {

Raymap plucker_raymap(const Intrinsics& intrinsics, const Pose& target_to_ref, int grid_h,
                      int grid_w) {
    intrinsics.validate();
    target_to_ref.validate();
    if (grid_h < 1 || grid_w < 1) throw ValidationError("plucker_raymap: grid dims must be >= 1");

    const Eigen::Vector3d origin = target_to_ref.translation;  // target camera center, ref frame
    const double cell_w = static_cast<double>(intrinsics.width) / grid_w;
    const double cell_h = static_cast<double>(intrinsics.height) / grid_h;

    Raymap rm;
    rm.grid = core::Tensor<double>({grid_h, grid_w, 6});
    for (int gy = 0; gy < grid_h; ++gy) {
        for (int gx = 0; gx < grid_w; ++gx) {
            double u = (gx + 0.5) * cell_w;
            double v = (gy + 0.5) * cell_h;
            Eigen::Vector3d dir = target_to_ref.rotation * intrinsics.ray_dir(u, v);
            dir.normalize();
            Eigen::Vector3d moment = origin.cross(dir);
            double* cell = &rm.grid.at3(gy, gx, 0);
            cell[0] = dir.x();
            cell[1] = dir.y();
            cell[2] = dir.z();
            cell[3] = moment.x();
            cell[4] = moment.y();
            cell[5] = moment.z();
        }
    }
    return rm;
}

}  // namespace uniugg::geometry
