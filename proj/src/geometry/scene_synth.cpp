#include <cmath>
#include <limits>

#include "uniugg/core/rng.hpp"
#include "uniugg/geometry/scene.hpp"

namespace uniugg::geometry {

namespace {

struct Material {
    int kind = 0;  // 0 checker, 1 gradient
    Eigen::Vector3d color_a, color_b;
    double cells = 4.0;

    Eigen::Vector3d shade(double u, double v) const {
        u = std::min(std::max(u, 0.0), 1.0);
        v = std::min(std::max(v, 0.0), 1.0);
        if (kind == 0) {
            int parity = (static_cast<int>(std::floor(u * cells)) +
                          static_cast<int>(std::floor(v * cells))) & 1;
            return parity ? color_b : color_a;
        }
        return color_a + (color_b - color_a) * u;
    }
};

// Fronto-parallel rectangle: world plane z = z0 bounded in x/y.
struct RectPrim {
    double z0;
    double x0, x1, y0, y1;
    Material mat;
};

struct BoxPrim {
    Eigen::Vector3d lo, hi;
    Material mat;
};

struct Scene {
    std::vector<RectPrim> rects;
    std::vector<BoxPrim> boxes;
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    bool valid = false;
};

constexpr double kTmin = 1e-6;

void intersect_rect(const RectPrim& r, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                    Hit& best) {
    if (std::abs(d.z()) < 1e-12) return;
    double t = (r.z0 - o.z()) / d.z();
    if (t <= kTmin || t >= best.t) return;
    Eigen::Vector3d p = o + t * d;
    if (p.x() < r.x0 || p.x() > r.x1 || p.y() < r.y0 || p.y() > r.y1) return;
    best.t = t;
    best.point = p;
    best.color = r.mat.shade((p.x() - r.x0) / (r.x1 - r.x0), (p.y() - r.y0) / (r.y1 - r.y0));
    best.valid = true;
}

void intersect_box(const BoxPrim& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   Hit& best) {
    double t_enter = -std::numeric_limits<double>::infinity();
    double t_exit = std::numeric_limits<double>::infinity();
    int enter_axis = -1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < b.lo[a] || o[a] > b.hi[a]) return;
            continue;
        }
        double t1 = (b.lo[a] - o[a]) / d[a];
        double t2 = (b.hi[a] - o[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > t_enter) {
            t_enter = t1;
            enter_axis = a;
        }
        t_exit = std::min(t_exit, t2);
    }
    if (enter_axis < 0 || t_enter > t_exit || t_enter <= kTmin || t_enter >= best.t) return;
    Eigen::Vector3d p = o + t_enter * d;
    int ua = (enter_axis + 1) % 3, va = (enter_axis + 2) % 3;
    double u = (p[ua] - b.lo[ua]) / (b.hi[ua] - b.lo[ua]);
    double v = (p[va] - b.lo[va]) / (b.hi[va] - b.lo[va]);
    best.t = t_enter;
    best.point = p;
    best.color = b.mat.shade(u, v);
    best.valid = true;
}

Hit raycast(const Scene& scene, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    Hit best;
    for (const auto& r : scene.rects) intersect_rect(r, o, d, best);
    for (const auto& b : scene.boxes) intersect_box(b, o, d, best);
    return best;
}

Material random_material(core::Rng& rng) {
    Material m;
    m.kind = rng.uniform() < 0.6 ? 0 : 1;
    // colors kept away from 0/1 so 8-bit quantization and bounded heads behave
    for (int c = 0; c < 3; ++c) {
        m.color_a[c] = rng.uniform(0.15, 0.9);
        m.color_b[c] = rng.uniform(0.15, 0.9);
    }
    m.cells = static_cast<double>(rng.uniform_int(3, 8));
    return m;
}

Pose random_camera_jitter(core::Rng& rng, double magnitude) {
    if (magnitude <= 0.0) return Pose::identity();
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitY();
    axis.normalize();
    double angle = rng.uniform(0.0, magnitude);
    Eigen::Vector3d trans(rng.uniform(-magnitude, magnitude), rng.uniform(-magnitude, magnitude),
                          rng.uniform(-magnitude, magnitude));
    return pose_from_axis_angle(axis * angle, trans);
}

float quantize8(double c) {
    double q = std::round(std::min(std::max(c, 0.0), 1.0) * 255.0) / 255.0;
    return static_cast<float>(q);
}

struct RenderResult {
    Image image;
    PointMap pointmap_cam;  // own camera frame
    Mask valid;
    std::vector<Eigen::Vector3d> world_points;  // per pixel, undefined where invalid
};

RenderResult render_view(const Scene& scene, const Intrinsics& K, const Pose& pose) {
    RenderResult r;
    int h = K.height, w = K.width;
    r.image = Image({h, w, 3});
    r.pointmap_cam = PointMap({h, w, 3});
    r.valid = Mask({h, w});
    r.world_points.assign(static_cast<size_t>(h) * w, Eigen::Vector3d::Zero());
    Eigen::Vector3d center = pose.camera_center();
    Eigen::Matrix3d cam_to_world = pose.rotation.transpose();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Eigen::Vector3d dir_cam = K.ray_dir(x + 0.5, y + 0.5);
            Eigen::Vector3d dir_world = cam_to_world * dir_cam;
            Hit hit = raycast(scene, center, dir_world);
            if (!hit.valid) continue;
            r.valid.at2(y, x) = 1;
            r.world_points[static_cast<size_t>(y) * w + x] = hit.point;
            // camera-frame point: t runs along a dir with camera z = 1
            Eigen::Vector3d pc = dir_cam * hit.t;
            r.pointmap_cam.at3(y, x, 0) = static_cast<float>(pc.x());
            r.pointmap_cam.at3(y, x, 1) = static_cast<float>(pc.y());
            r.pointmap_cam.at3(y, x, 2) = static_cast<float>(pc.z());
            for (int c = 0; c < 3; ++c) r.image.at3(y, x, c) = quantize8(hit.color[c]);
        }
    }
    return r;
}

// A world point visible from `pose` iff re-raycasting through its projection
// lands on the same surface point.
bool covisible(const Scene& scene, const Intrinsics& K, const Pose& pose,
               const Eigen::Vector3d& world_point, Eigen::Vector2d* pixel_out) {
    Eigen::Vector3d pc = pose.apply(world_point);
    if (pc.z() < kTmin) return false;
    Eigen::Vector2d uv = K.project(pc);
    if (uv.x() < 0.0 || uv.x() >= K.width || uv.y() < 0.0 || uv.y() >= K.height) return false;
    Eigen::Vector3d dir_world = pose.rotation.transpose() * K.ray_dir(uv.x(), uv.y());
    Hit hit = raycast(scene, pose.camera_center(), dir_world);
    if (!hit.valid) return false;
    if ((hit.point - world_point).cwiseAbs().maxCoeff() > 1e-9) return false;
    if (pixel_out) *pixel_out = uv;
    return true;
}

}  // namespace

ScenePair generate_scene_pair(uint64_t seed, const SceneConfig& config) {
    config.intrinsics().validate();
    if (config.n_planes + config.n_boxes + (config.background_plane ? 1 : 0) < 1)
        throw ValidationError("scene config has no primitives");

    const Intrinsics K = config.intrinsics();
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
        core::Rng rng(core::mix_seed({seed, static_cast<uint64_t>(attempt), 0xA11CEull}));

        Pose pose_i = random_camera_jitter(rng, config.pose_i_jitter);
        Eigen::Vector3d ci = pose_i.camera_center();
        Eigen::Matrix3d axes = pose_i.rotation.transpose();  // columns: right, up, forward
        Eigen::Vector3d right = axes.col(0), up = axes.col(1), fwd = axes.col(2);

        Scene scene;
        double lat_per_depth = (K.width / 2.0) / K.fx;
        for (int k = 0; k < config.n_planes; ++k) {
            double depth = rng.uniform(config.depth_min, config.depth_max);
            double half = rng.uniform(config.extent_min, config.extent_max);
            double lat = depth * lat_per_depth;
            Eigen::Vector3d center = ci + fwd * depth + right * rng.uniform(-0.7, 0.7) * lat +
                                     up * rng.uniform(-0.7, 0.7) * lat;
            RectPrim r;
            r.z0 = center.z();
            r.x0 = center.x() - half;
            r.x1 = center.x() + half;
            r.y0 = center.y() - half;
            r.y1 = center.y() + half;
            r.mat = random_material(rng);
            scene.rects.push_back(r);
        }
        for (int k = 0; k < config.n_boxes; ++k) {
            double depth = rng.uniform(config.depth_min, config.depth_max);
            double ext = rng.uniform(config.extent_min, config.extent_max);
            double lat = depth * lat_per_depth;
            Eigen::Vector3d center = ci + fwd * depth + right * rng.uniform(-0.6, 0.6) * lat +
                                     up * rng.uniform(-0.6, 0.6) * lat;
            Eigen::Vector3d half(rng.uniform(0.3, 1.0) * ext, rng.uniform(0.3, 1.0) * ext,
                                 rng.uniform(0.3, 1.0) * ext);
            BoxPrim b;
            b.lo = center - half;
            b.hi = center + half;
            b.mat = random_material(rng);
            scene.boxes.push_back(b);
        }
        if (config.background_plane) {
            Eigen::Vector3d center = ci + fwd * config.background_depth;
            double half = config.background_depth * lat_per_depth * 4.0 + 10.0;
            RectPrim r;
            r.z0 = center.z();
            r.x0 = center.x() - half;
            r.x1 = center.x() + half;
            r.y0 = center.y() - half;
            r.y1 = center.y() + half;
            r.mat = random_material(rng);
            r.mat.cells = 12.0;
            scene.rects.push_back(r);
        }

        // second camera: lateral-dominant baseline plus a small rotation
        Eigen::Vector3d bdir(rng.uniform(-1.0, 1.0), rng.uniform(-0.4, 0.4),
                             rng.uniform(-0.3, 0.3));
        if (bdir.norm() < 1e-9) bdir = Eigen::Vector3d::UnitX();
        bdir.normalize();
        double baseline = rng.uniform(config.baseline_min, config.baseline_max);
        Eigen::Vector3d cj = ci + baseline * (bdir.x() * right + bdir.y() * up + bdir.z() * fwd);
        Eigen::Vector3d rot_axis(rng.normal(), rng.normal(), rng.normal());
        if (rot_axis.norm() < 1e-12) rot_axis = Eigen::Vector3d::UnitY();
        rot_axis.normalize();
        double rot_angle = rng.uniform(0.0, config.max_rotation);
        Pose pose_j;
        pose_j.rotation =
            Eigen::AngleAxisd(rot_angle, rot_axis).toRotationMatrix() * pose_i.rotation;
        pose_j.translation = -(pose_j.rotation * cj);

        RenderResult view_i = render_view(scene, K, pose_i);
        RenderResult view_j = render_view(scene, K, pose_j);

        // overlap + correspondence candidates
        int64_t valid_i_count = 0, covis_i = 0;
        std::vector<Correspondence> candidates;
        for (int y = 0; y < K.height; ++y) {
            for (int x = 0; x < K.width; ++x) {
                if (!view_i.valid.at2(y, x)) continue;
                ++valid_i_count;
                Eigen::Vector2d uv;
                if (covisible(scene, K, pose_j,
                              view_i.world_points[static_cast<size_t>(y) * K.width + x], &uv)) {
                    ++covis_i;
                    candidates.push_back({x + 0.5, y + 0.5, uv.x(), uv.y()});
                }
            }
        }
        int64_t valid_j_count = 0, covis_j = 0;
        for (int y = 0; y < K.height; ++y) {
            for (int x = 0; x < K.width; ++x) {
                if (!view_j.valid.at2(y, x)) continue;
                ++valid_j_count;
                if (covisible(scene, K, pose_i,
                              view_j.world_points[static_cast<size_t>(y) * K.width + x], nullptr))
                    ++covis_j;
            }
        }

        double frac_i = valid_i_count ? static_cast<double>(covis_i) / valid_i_count : 0.0;
        double frac_j = valid_j_count ? static_cast<double>(covis_j) / valid_j_count : 0.0;
        if (frac_i < config.min_overlap || frac_j < config.min_overlap) continue;
        if (static_cast<int>(candidates.size()) < config.min_correspondences) continue;

        std::vector<Correspondence> corrs;
        if (static_cast<int>(candidates.size()) <= config.max_correspondences) {
            corrs = std::move(candidates);
        } else {
            corrs.reserve(config.max_correspondences);
            double stride = static_cast<double>(candidates.size()) / config.max_correspondences;
            for (int k = 0; k < config.max_correspondences; ++k)
                corrs.push_back(candidates[static_cast<size_t>(k * stride)]);
        }

        ScenePair pair;
        pair.image_i = std::move(view_i.image);
        pair.image_j = std::move(view_j.image);
        pair.intrinsics = K;
        pair.pose_i = pose_i;
        pair.pose_j = pose_j;
        pair.gt_pointmap_ii = std::move(view_i.pointmap_cam);
        pair.valid_i = std::move(view_i.valid);
        pair.valid_j = view_j.valid;
        pair.seed = seed;

        // view-j points re-expressed in the camera-i frame
        pair.gt_pointmap_ji = PointMap({K.height, K.width, 3});
        for (int y = 0; y < K.height; ++y) {
            for (int x = 0; x < K.width; ++x) {
                if (!view_j.valid.at2(y, x)) continue;
                Eigen::Vector3d pi =
                    pose_i.apply(view_j.world_points[static_cast<size_t>(y) * K.width + x]);
                pair.gt_pointmap_ji.at3(y, x, 0) = static_cast<float>(pi.x());
                pair.gt_pointmap_ji.at3(y, x, 1) = static_cast<float>(pi.y());
                pair.gt_pointmap_ji.at3(y, x, 2) = static_cast<float>(pi.z());
            }
        }
        pair.correspondences = std::move(corrs);
        return pair;
    }
    throw GenerationError("generate_scene_pair: constraints unmet after " +
                          std::to_string(config.max_retries) + " retries (seed " +
                          std::to_string(seed) + ")");
}

DepthMap pointmap_to_depth(const PointMap& pointmap, const Mask& mask) {
    if (pointmap.ndim() != 3 || pointmap.shape[2] != 3)
        throw ValidationError("pointmap_to_depth: expected [H,W,3]");
    int64_t h = pointmap.shape[0], w = pointmap.shape[1];
    if (mask.ndim() != 2 || mask.shape[0] != h || mask.shape[1] != w)
        throw ValidationError("pointmap_to_depth: mask shape mismatch");
    DepthMap d;
    d.z = core::Tensor<float>({h, w});
    d.valid = mask;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            if (mask.at2(y, x)) d.z.at2(y, x) = pointmap.at3(y, x, 2);
    return d;
}

}  // namespace uniugg::geometry
