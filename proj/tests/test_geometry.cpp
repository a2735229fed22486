#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "uniugg/core/rng.hpp"
#include "uniugg/geometry/raymap.hpp"
#include "uniugg/geometry/scene.hpp"
#include "uniugg/geometry/scene_io.hpp"

using namespace uniugg;
using namespace uniugg::geometry;

namespace {

Pose random_pose(core::Rng& rng, double tmag = 1.0) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    double angle = rng.uniform(0.0, 3.0);
    Eigen::Vector3d t(rng.normal(0, tmag), rng.normal(0, tmag), rng.normal(0, tmag));
    return pose_from_axis_angle(axis * angle, t);
}

SceneConfig small_config() {
    SceneConfig c;
    c.width = 32;
    c.height = 32;
    c.focal = 32.0;
    return c;
}

}  // namespace

TEST_CASE("relative_pose identities") {
    core::Rng rng(100);
    Pose p = random_pose(rng);
    Pose rel = relative_pose(p, p);
    CHECK(rel.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-12));
    CHECK(rel.translation.norm() < 1e-12);

    Pose id = Pose::identity();
    Pose tr;
    tr.translation = {1, 0, 0};
    Pose rel2 = relative_pose(id, tr);
    CHECK(rel2.rotation.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    CHECK((rel2.translation - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("relative_pose point-transport oracle") {
    core::Rng rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        Pose a = random_pose(rng), b = random_pose(rng);
        Pose rel = relative_pose(a, b);
        double max_err = 0;
        for (int k = 0; k < 100; ++k) {
            Eigen::Vector3d pw(rng.normal(), rng.normal(), rng.normal());
            Eigen::Vector3d via_rel = rel.apply(a.apply(pw));
            Eigen::Vector3d direct = b.apply(pw);
            max_err = std::max(max_err, (via_rel - direct).norm());
        }
        CHECK(max_err < 1e-9);
    }
}

TEST_CASE("relative_pose round trip is identity") {
    core::Rng rng(102);
    Pose a = random_pose(rng), b = random_pose(rng);
    Pose fwd = relative_pose(a, b), bwd = relative_pose(b, a);
    Pose round = fwd.compose(bwd);
    CHECK((round.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(round.translation.norm() < 1e-9);
}

TEST_CASE("relative_pose rejects non-orthonormal rotation") {
    Pose bad;
    bad.rotation(0, 0) = 1.5;
    CHECK_THROWS_AS(relative_pose(bad, Pose::identity()), ValidationError);
}

TEST_CASE("plucker raymap trivial cases") {
    Intrinsics K{32, 32, 16, 16, 32, 32};
    // identity transform: moment is zero everywhere, center ray points +z
    Raymap rm = plucker_raymap(K, Pose::identity(), 4, 4);
    for (int gy = 0; gy < 4; ++gy)
        for (int gx = 0; gx < 4; ++gx)
            for (int c = 3; c < 6; ++c) CHECK(rm.grid.at3(gy, gx, c) == 0.0);

    // central ray of an odd grid passes through the principal point
    Raymap rm3 = plucker_raymap(K, Pose::identity(), 1, 1);
    CHECK(rm3.grid.at3(0, 0, 0) == doctest::Approx(0.0));
    CHECK(rm3.grid.at3(0, 0, 1) == doctest::Approx(0.0));
    CHECK(rm3.grid.at3(0, 0, 2) == doctest::Approx(1.0));
}

TEST_CASE("plucker raymap translated origin hand-computed moment") {
    Intrinsics K{32, 32, 16, 16, 32, 32};
    Pose rel;
    rel.translation = {1, 0, 0};
    Raymap rm = plucker_raymap(K, rel, 1, 1);
    // d = (0,0,1), m = (1,0,0) x (0,0,1) = (0,-1,0)
    CHECK(rm.grid.at3(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rm.grid.at3(0, 0, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rm.grid.at3(0, 0, 3) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rm.grid.at3(0, 0, 4) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(rm.grid.at3(0, 0, 5) == doctest::Approx(0.0).epsilon(1e-12));

    // brute-force two-point line fit: the moment equals p x d for any point p
    // on the ray; take the origin and one step along d.
    Eigen::Vector3d o = rel.translation;
    Eigen::Vector3d d(rm.grid.at3(0, 0, 0), rm.grid.at3(0, 0, 1), rm.grid.at3(0, 0, 2));
    Eigen::Vector3d p2 = o + 2.5 * d;
    Eigen::Vector3d m_fit = p2.cross(d);
    CHECK((m_fit - Eigen::Vector3d(rm.grid.at3(0, 0, 3), rm.grid.at3(0, 0, 4),
                                   rm.grid.at3(0, 0, 5))).norm() < 1e-12);
}

TEST_CASE("plucker invariants over random draws") {
    core::Rng rng(103);
    for (int trial = 0; trial < 1000; ++trial) {
        Intrinsics K{rng.uniform(20, 80), rng.uniform(20, 80), 16, 16, 32, 32};
        Pose rel = random_pose(rng, 0.8);
        Raymap rm = plucker_raymap(K, rel, 4, 4);
        for (int gy = 0; gy < 4; ++gy)
            for (int gx = 0; gx < 4; ++gx) {
                Eigen::Vector3d d(rm.grid.at3(gy, gx, 0), rm.grid.at3(gy, gx, 1),
                                  rm.grid.at3(gy, gx, 2));
                Eigen::Vector3d m(rm.grid.at3(gy, gx, 3), rm.grid.at3(gy, gx, 4),
                                  rm.grid.at3(gy, gx, 5));
                REQUIRE(std::abs(d.norm() - 1.0) <= 1e-9);
                REQUIRE(std::abs(d.dot(m)) <= 1e-9);
            }
    }
}

TEST_CASE("plucker raymap rejects degenerate inputs") {
    Intrinsics bad{0, 32, 16, 16, 32, 32};
    CHECK_THROWS_AS(plucker_raymap(bad, Pose::identity(), 4, 4), ValidationError);
    Intrinsics K{32, 32, 16, 16, 32, 32};
    CHECK_THROWS_AS(plucker_raymap(K, Pose::identity(), 0, 4), ValidationError);
}

TEST_CASE("scene generation determinism") {
    SceneConfig c = small_config();
    ScenePair a = generate_scene_pair(42, c);
    ScenePair b = generate_scene_pair(42, c);
    CHECK(a.image_i.v == b.image_i.v);
    CHECK(a.image_j.v == b.image_j.v);
    CHECK(a.gt_pointmap_ii.v == b.gt_pointmap_ii.v);
    CHECK(a.gt_pointmap_ji.v == b.gt_pointmap_ji.v);
    CHECK(a.valid_i.v == b.valid_i.v);
    CHECK(a.correspondences.size() == b.correspondences.size());
    for (size_t k = 0; k < a.correspondences.size(); ++k) {
        CHECK(a.correspondences[k].xi == b.correspondences[k].xi);
        CHECK(a.correspondences[k].xj == b.correspondences[k].xj);
    }
    ScenePair other = generate_scene_pair(43, c);
    CHECK(a.image_i.v != other.image_i.v);
}

TEST_CASE("single fronto-parallel plane at depth 2 gives constant depth") {
    SceneConfig c = small_config();
    c.n_planes = 1;
    c.n_boxes = 0;
    c.background_plane = false;
    c.depth_min = c.depth_max = 2.0;
    c.extent_min = c.extent_max = 50.0;  // covers the whole view
    c.baseline_min = 0.05;
    c.baseline_max = 0.1;
    c.max_rotation = 0.0;
    ScenePair pair = generate_scene_pair(7, c);
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x) {
            REQUIRE(pair.valid_i.at2(y, x) == 1);
            REQUIRE(pair.gt_pointmap_ii.at3(y, x, 2) == doctest::Approx(2.0).epsilon(1e-9));
        }
}

TEST_CASE("reprojection oracle and correspondence consistency") {
    SceneConfig c = small_config();
    c.pose_i_jitter = 0.08;  // nontrivial world frame
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        ScenePair pair = generate_scene_pair(seed, c);
        REQUIRE(static_cast<int>(pair.correspondences.size()) >= c.min_correspondences);

        // project gt_pointmap_ii through the intrinsics: must land on its own pixel
        double max_err = 0;
        for (int y = 0; y < c.height; ++y)
            for (int x = 0; x < c.width; ++x) {
                if (!pair.valid_i.at2(y, x)) continue;
                Eigen::Vector3d p(pair.gt_pointmap_ii.at3(y, x, 0),
                                  pair.gt_pointmap_ii.at3(y, x, 1),
                                  pair.gt_pointmap_ii.at3(y, x, 2));
                Eigen::Vector2d uv = pair.intrinsics.project(p);
                max_err = std::max(max_err, std::abs(uv.x() - (x + 0.5)));
                max_err = std::max(max_err, std::abs(uv.y() - (y + 0.5)));
            }
        CHECK(max_err < 1e-4);

        // reprojection of gt_pointmap_ji through the relative pose
        Pose rel = relative_pose(pair.pose_i, pair.pose_j);
        double max_err_j = 0;
        for (int y = 0; y < c.height; ++y)
            for (int x = 0; x < c.width; ++x) {
                if (!pair.valid_j.at2(y, x)) continue;
                Eigen::Vector3d pi(pair.gt_pointmap_ji.at3(y, x, 0),
                                   pair.gt_pointmap_ji.at3(y, x, 1),
                                   pair.gt_pointmap_ji.at3(y, x, 2));
                Eigen::Vector2d uv = pair.intrinsics.project(rel.apply(pi));
                max_err_j = std::max(max_err_j, std::abs(uv.x() - (x + 0.5)));
                max_err_j = std::max(max_err_j, std::abs(uv.y() - (y + 0.5)));
            }
        CHECK(max_err_j < 1e-4);
    }
}

TEST_CASE("unsatisfiable constraints raise a generation error") {
    SceneConfig c = small_config();
    c.min_correspondences = 100000;  // cannot be met at 32x32
    c.max_retries = 5;
    CHECK_THROWS_AS(generate_scene_pair(1, c), GenerationError);
}

TEST_CASE("pointmap_to_depth") {
    PointMap pm({1, 2, 3});
    pm.at3(0, 0, 2) = 2.0f;
    pm.at3(0, 1, 2) = 5.0f;
    Mask m({1, 2}, std::vector<uint8_t>{1, 0});
    DepthMap d = pointmap_to_depth(pm, m);
    CHECK(d.z.at2(0, 0) == 2.0f);
    CHECK(d.valid.at2(0, 0) == 1);
    CHECK(d.valid.at2(0, 1) == 0);

    Mask all_off({1, 2}, std::vector<uint8_t>{0, 0});
    DepthMap d2 = pointmap_to_depth(pm, all_off);
    CHECK(d2.valid.at2(0, 0) == 0);
    CHECK(d2.valid.at2(0, 1) == 0);
}

TEST_CASE("depth equals renderer z-buffer on generated scene") {
    ScenePair pair = generate_scene_pair(11, small_config());
    DepthMap d = pointmap_to_depth(pair.gt_pointmap_ii, pair.valid_i);
    for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x)
            if (pair.valid_i.at2(y, x))
                REQUIRE(d.z.at2(y, x) == pair.gt_pointmap_ii.at3(y, x, 2));
}

TEST_CASE("scene pair save/load round trip") {
    namespace fs = std::filesystem;
    ScenePair pair = generate_scene_pair(5, small_config());
    fs::path dir = fs::temp_directory_path() / "uniugg_test_pair";
    fs::remove_all(dir);
    save_scene_pair(pair, dir);
    ScenePair loaded = load_scene_pair(dir);

    CHECK(loaded.seed == pair.seed);
    CHECK(loaded.intrinsics.fx == pair.intrinsics.fx);
    CHECK(loaded.pose_j.rotation.isApprox(pair.pose_j.rotation, 1e-15));
    // images are quantized to the 8-bit grid at generation time, so the PPM
    // round trip is lossless
    CHECK(loaded.image_i.v == pair.image_i.v);
    CHECK(loaded.image_j.v == pair.image_j.v);
    CHECK(loaded.gt_pointmap_ii.v == pair.gt_pointmap_ii.v);
    CHECK(loaded.valid_i.v == pair.valid_i.v);
    CHECK(loaded.correspondences.size() == pair.correspondences.size());
    fs::remove_all(dir);
}

TEST_CASE("correspondences hit the same 3D point from both views") {
    SceneConfig c = small_config();
    ScenePair pair = generate_scene_pair(21, c);
    Pose rel = relative_pose(pair.pose_i, pair.pose_j);
    // Unproject both sides from the stored GT maps: side i at integer pixels,
    // side j by projecting the i-side point; agreement implies one surface point.
    int checked = 0;
    for (const auto& corr : pair.correspondences) {
        int xi = static_cast<int>(corr.xi), yi = static_cast<int>(corr.yi);
        REQUIRE(pair.valid_i.at2(yi, xi) == 1);
        Eigen::Vector3d p_i(pair.gt_pointmap_ii.at3(yi, xi, 0),
                            pair.gt_pointmap_ii.at3(yi, xi, 1),
                            pair.gt_pointmap_ii.at3(yi, xi, 2));
        Eigen::Vector2d uv = pair.intrinsics.project(rel.apply(p_i));
        CHECK(std::abs(uv.x() - corr.xj) < 1e-4);
        CHECK(std::abs(uv.y() - corr.yj) < 1e-4);
        ++checked;
    }
    CHECK(checked >= c.min_correspondences);
}
