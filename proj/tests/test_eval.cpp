#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "uniugg/core/rng.hpp"
#include "uniugg/eval/metrics.hpp"

using namespace uniugg;
using namespace uniugg::core;
using namespace uniugg::evalio;

TEST_CASE("depth metrics analytic cases") {
    Tensor<float> gt({4}, {1.0f, 2.0f, 4.0f, 0.5f});
    geometry::Mask mask({4}, static_cast<uint8_t>(1));

    SUBCASE("perfect prediction") {
        auto rep = depth_metrics(gt, gt, mask, ScalingMode::None);
        CHECK(rep.abs_rel == 0.0);
        CHECK(rep.delta_125 == 1.0);
        CHECK(rep.n_valid == 4);
    }
    SUBCASE("doubled prediction without scaling") {
        Tensor<float> pred = gt;
        for (auto& v : pred.v) v *= 2.0f;
        auto rep = depth_metrics(pred, gt, mask, ScalingMode::None);
        CHECK(rep.abs_rel == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.delta_125 == 0.0);
    }
    SUBCASE("doubled prediction with per-frame median scaling") {
        Tensor<float> pred = gt;
        for (auto& v : pred.v) v *= 2.0f;
        auto rep = depth_metrics(pred, gt, mask, ScalingMode::PerFrameMedian);
        CHECK(rep.abs_rel == 0.0);
        CHECK(rep.delta_125 == 1.0);
    }
    SUBCASE("empty valid set") {
        geometry::Mask off({4}, static_cast<uint8_t>(0));
        CHECK_THROWS_AS(depth_metrics(gt, gt, off, ScalingMode::None), ValidationError);
    }
    SUBCASE("delta is invariant to joint rescaling") {
        Rng rng(1);
        Tensor<float> pred({4});
        for (auto& v : pred.v) v = static_cast<float>(rng.uniform(0.5, 4.0));
        auto base = depth_metrics(pred, gt, mask, ScalingMode::None);
        Tensor<float> pred_s = pred, gt_s = gt;
        for (auto& v : pred_s.v) v *= 3.0f;
        for (auto& v : gt_s.v) v *= 3.0f;
        auto scaled = depth_metrics(pred_s, gt_s, mask, ScalingMode::None);
        CHECK(base.delta_125 == scaled.delta_125);
    }
}

TEST_CASE("chamfer distance") {
    SUBCASE("identical clouds") {
        std::vector<Eigen::Vector3d> a = {{0, 0, 0}, {1, 2, 3}, {-1, 0.5, 2}};
        CHECK(chamfer(a, a) == 0.0);
    }
    SUBCASE("two single points") {
        CHECK(chamfer({{0, 0, 0}}, {{1, 0, 0}}) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("empty set is rejected") {
        std::vector<Eigen::Vector3d> a = {{0, 0, 0}}, empty;
        CHECK_THROWS_AS(chamfer(a, empty), ValidationError);
        CHECK_THROWS_AS(chamfer(empty, a), ValidationError);
    }
    SUBCASE("matches an independent enumeration and is symmetric") {
        Rng rng(2);
        std::vector<Eigen::Vector3d> a, b;
        for (int i = 0; i < 100; ++i) {
            a.emplace_back(rng.normal(), rng.normal(), rng.normal());
            b.emplace_back(rng.normal(), rng.normal(), rng.normal());
        }
        // test-local recomputation with a different loop structure
        double acc_ab = 0;
        for (const auto& p : a) {
            double best = 1e300;
            for (const auto& q : b) {
                double d = std::sqrt((p.x() - q.x()) * (p.x() - q.x()) +
                                     (p.y() - q.y()) * (p.y() - q.y()) +
                                     (p.z() - q.z()) * (p.z() - q.z()));
                best = std::min(best, d);
            }
            acc_ab += best;
        }
        double acc_ba = 0;
        for (const auto& q : b) {
            double best = 1e300;
            for (const auto& p : a) best = std::min(best, (q - p).norm());
            acc_ba += best;
        }
        double want = 0.5 * (acc_ab / a.size() + acc_ba / b.size());
        CHECK(chamfer(a, b) == doctest::Approx(want).epsilon(1e-10));
        CHECK(std::abs(chamfer(a, b) - chamfer(b, a)) < 1e-12);
    }
    SUBCASE("translating a disjoint cloud increases the distance") {
        std::vector<Eigen::Vector3d> a = {{0, 0, 0}, {0.1, 0, 0}};
        double prev = 0.0;
        for (double t : {1.0, 2.0, 5.0}) {
            std::vector<Eigen::Vector3d> b = {{t, 0, 0}, {t + 0.1, 0, 0}};
            double d = chamfer(a, b);
            CHECK(d > prev);
            prev = d;
        }
    }
}

namespace {

struct PlyVertex {
    double x, y, z;
    int r, g, b;
};

// minimal independent ASCII PLY reader
std::vector<PlyVertex> parse_ply(const std::filesystem::path& path, int64_t* header_count) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::string line;
    int64_t count = -1;
    while (std::getline(f, line)) {
        if (line.rfind("element vertex", 0) == 0) {
            std::istringstream in(line.substr(15));
            in >> count;
        }
        if (line == "end_header") break;
    }
    REQUIRE(count >= 0);
    if (header_count) *header_count = count;
    std::vector<PlyVertex> verts;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream in(line);
        PlyVertex v{};
        in >> v.x >> v.y >> v.z >> v.r >> v.g >> v.b;
        REQUIRE(!in.fail());
        verts.push_back(v);
    }
    return verts;
}

}  // namespace

TEST_CASE("ply export") {
    auto dir = std::filesystem::temp_directory_path() / "uniugg_ply_test";
    std::filesystem::create_directories(dir);

    Rng rng(3);
    Tensor<float> pts({5, 3});
    for (auto& v : pts.v) v = static_cast<float>(rng.normal(0, 2));
    Tensor<float> colors({5, 3});
    for (auto& v : colors.v) v = static_cast<float>(rng.uniform(0, 1));
    Tensor<float> conf({5}, {0.5f, 2.0f, 1.5f, 0.1f, 3.0f});

    SUBCASE("all below threshold yields a valid empty PLY") {
        export_ply(pts, colors, conf, 10.0, dir / "empty.ply");
        int64_t count = -1;
        auto verts = parse_ply(dir / "empty.ply", &count);
        CHECK(count == 0);
        CHECK(verts.empty());
    }
    SUBCASE("threshold filters and the header count is exact") {
        export_ply(pts, colors, conf, 1.5, dir / "two.ply");
        int64_t count = -1;
        auto verts = parse_ply(dir / "two.ply", &count);
        CHECK(count == 3);  // conf 2.0, 1.5, 3.0
        CHECK(verts.size() == 3);
    }
    SUBCASE("coordinates survive the round trip exactly at float precision") {
        export_ply(pts, colors, conf, 0.0, dir / "all.ply");
        int64_t count = -1;
        auto verts = parse_ply(dir / "all.ply", &count);
        REQUIRE(count == 5);
        for (int64_t i = 0; i < 5; ++i) {
            // %.9g round-trips IEEE float exactly
            CHECK(static_cast<float>(verts[static_cast<size_t>(i)].x) == pts.at2(i, 0));
            CHECK(static_cast<float>(verts[static_cast<size_t>(i)].y) == pts.at2(i, 1));
            CHECK(static_cast<float>(verts[static_cast<size_t>(i)].z) == pts.at2(i, 2));
            CHECK(verts[static_cast<size_t>(i)].r ==
                  static_cast<int>(std::lround(std::clamp(colors.at2(i, 0), 0.0f, 1.0f) * 255)));
        }
    }
    std::filesystem::remove_all(dir);
}
