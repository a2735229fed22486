#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "uniugg/core/errors.hpp"
#include "uniugg/core/tensor.hpp"

namespace uniugg::geometry {

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0 || fy <= 0) throw ValidationError("intrinsics: focal lengths must be > 0");
        if (cx < 0 || cx >= width || cy < 0 || cy >= height)
            throw ValidationError("intrinsics: principal point outside image");
        if (width < 1 || height < 1) throw ValidationError("intrinsics: empty image");
    }

    // camera point -> continuous pixel coordinates
    Eigen::Vector2d project(const Eigen::Vector3d& p) const {
        return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
    }

    // continuous pixel coordinates -> camera ray direction with z = 1
    Eigen::Vector3d ray_dir(double u, double v) const {
        return {(u - cx) / fx, (v - cy) / fy, 1.0};
    }
};

// Rigid world->camera transform.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static Pose identity() { return {}; }

    void validate(double tol = 1e-9) const {
        Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
        if (err.cwiseAbs().maxCoeff() > tol)
            throw ValidationError("pose: rotation is not orthonormal");
        if (std::abs(rotation.determinant() - 1.0) > tol)
            throw ValidationError("pose: rotation determinant is not +1");
    }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

    Pose inverse() const {
        Pose inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(rotation.transpose() * translation);
        return inv;
    }

    // composition: apply `other` first, then this.
    Pose compose(const Pose& other) const {
        Pose out;
        out.rotation = rotation * other.rotation;
        out.translation = rotation * other.translation + translation;
        return out;
    }

    Eigen::Vector3d camera_center() const { return -(rotation.transpose() * translation); }
};

// Transform taking camera-i coordinates to camera-j coordinates.
Pose relative_pose(const Pose& pose_i, const Pose& pose_j);

Pose pose_from_axis_angle(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& translation);

using Image = core::Tensor<float>;     // [H,W,3] in [0,1]
using PointMap = core::Tensor<float>;  // [H,W,3]
using Mask = core::Tensor<uint8_t>;    // [H,W], 1 = valid

// Continuous pixel coordinates; an entry hits the same 3D surface point in
// both views.
struct Correspondence {
    double xi, yi, xj, yj;
};

}  // namespace uniugg::geometry
