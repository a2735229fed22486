#include "uniugg/geometry/types.hpp"

namespace uniugg::geometry {

Pose relative_pose(const Pose& pose_i, const Pose& pose_j) {
    pose_i.validate();
    pose_j.validate();
    // X_j = R_j R_i^T X_i - R_j R_i^T t_i + t_j
    Pose rel;
    rel.rotation = pose_j.rotation * pose_i.rotation.transpose();
    rel.translation = pose_j.translation - rel.rotation * pose_i.translation;
    return rel;
}

Pose pose_from_axis_angle(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& translation) {
    Pose p;
    double angle = axis_angle.norm();
    if (angle > 1e-15) {
        p.rotation = Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
    }
    p.translation = translation;
    return p;
}

}  // namespace uniugg::geometry
