#include "uniugg/eval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace uniugg::evalio {

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

DepthReport depth_metrics(const core::Tensor<float>& pred, const core::Tensor<float>& gt,
                          const geometry::Mask& mask, ScalingMode scaling) {
    if (pred.shape != gt.shape || pred.numel() != mask.numel())
        throw ValidationError("depth_metrics: shape mismatch");
    std::vector<double> pv, gv;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (!mask.v[static_cast<size_t>(i)]) continue;
        double g = gt.v[static_cast<size_t>(i)];
        if (g <= 0.0) continue;
        pv.push_back(pred.v[static_cast<size_t>(i)]);
        gv.push_back(g);
    }
    if (pv.empty()) throw ValidationError("depth_metrics: no valid pixels");

    double scale = 1.0;
    if (scaling == ScalingMode::PerFrameMedian) {
        double mp = median_of(pv);
        if (mp == 0.0) throw ValidationError("depth_metrics: zero median prediction");
        scale = median_of(gv) / mp;
    }

    DepthReport rep;
    rep.scaling = scaling;
    rep.n_valid = static_cast<int64_t>(pv.size());
    double acc = 0;
    int64_t within = 0;
    for (size_t i = 0; i < pv.size(); ++i) {
        double p = pv[i] * scale;
        acc += std::abs(p - gv[i]) / gv[i];
        if (p > 0.0) {
            double ratio = std::max(p / gv[i], gv[i] / p);
            if (ratio < 1.25) ++within;
        }
    }
    rep.abs_rel = acc / static_cast<double>(pv.size());
    rep.delta_125 = static_cast<double>(within) / static_cast<double>(pv.size());
    return rep;
}

double chamfer(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) {
    if (a.empty() || b.empty()) throw ValidationError("chamfer: empty point set");
    auto one_way = [](const std::vector<Eigen::Vector3d>& from,
                      const std::vector<Eigen::Vector3d>& to) {
        double acc = 0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
            acc += std::sqrt(best);
        }
        return acc / static_cast<double>(from.size());
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

std::vector<Eigen::Vector3d> pointmap_to_cloud(const core::Tensor<float>& points_rows,
                                               const geometry::Mask& mask) {
    if (points_rows.shape.size() != 2 || points_rows.shape[1] != 3)
        throw ValidationError("pointmap_to_cloud: [N,3] expected");
    std::vector<Eigen::Vector3d> cloud;
    for (int64_t i = 0; i < points_rows.shape[0]; ++i) {
        if (!mask.v[static_cast<size_t>(i)]) continue;
        cloud.emplace_back(points_rows.at2(i, 0), points_rows.at2(i, 1), points_rows.at2(i, 2));
    }
    return cloud;
}

void export_ply(const core::Tensor<float>& points_rows, const core::Tensor<float>& colors_rows,
                const core::Tensor<float>& confidence, double conf_threshold,
                const std::filesystem::path& path) {
    if (points_rows.shape.size() != 2 || points_rows.shape[1] != 3)
        throw ValidationError("export_ply: points must be [N,3]");
    int64_t n = points_rows.shape[0];
    if (colors_rows.shape != points_rows.shape)
        throw ValidationError("export_ply: colors must match points");
    if (confidence.numel() != n) throw ValidationError("export_ply: confidence size mismatch");

    std::vector<int64_t> keep;
    for (int64_t i = 0; i < n; ++i)
        if (static_cast<double>(confidence.v[static_cast<size_t>(i)]) >= conf_threshold)
            keep.push_back(i);

    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << "ply\nformat ascii 1.0\nelement vertex " << keep.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    char line[160];
    for (int64_t i : keep) {
        auto chan = [&](int64_t c) {
            float v = colors_rows.at2(i, c);
            v = std::min(std::max(v, 0.0f), 1.0f);
            return static_cast<int>(std::lround(v * 255.0f));
        };
        std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %d %d %d\n",
                      static_cast<double>(points_rows.at2(i, 0)),
                      static_cast<double>(points_rows.at2(i, 1)),
                      static_cast<double>(points_rows.at2(i, 2)), chan(0), chan(1), chan(2));
        f << line;
    }
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace uniugg::evalio
