#pragma once

// Straightforward loop re-implementations used as independent oracles.
// Deliberately free of the autograd engine: plain vectors and nested loops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace uniugg::testing::ref {

// valid-padding-style conv with explicit zero padding, CHW layout
inline std::vector<double> conv2d(const std::vector<double>& x, int64_t ci, int64_t h, int64_t w,
                                  const std::vector<double>& weight, const std::vector<double>& bias,
                                  int64_t co, int64_t k, int64_t stride, int64_t pad, int64_t& ho,
                                  int64_t& wo) {
    ho = (h + 2 * pad - k) / stride + 1;
    wo = (w + 2 * pad - k) / stride + 1;
    std::vector<double> y(static_cast<size_t>(co * ho * wo), 0.0);
    for (int64_t o = 0; o < co; ++o)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                double acc = bias[static_cast<size_t>(o)];
                for (int64_t c = 0; c < ci; ++c)
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            int64_t iy = oy * stride + ky - pad;
                            int64_t ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += x[static_cast<size_t>((c * h + iy) * w + ix)] *
                                   weight[static_cast<size_t>(((o * ci + c) * k + ky) * k + kx)];
                        }
                y[static_cast<size_t>((o * ho + oy) * wo + ox)] = acc;
            }
    return y;
}

inline double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

inline double mean_sq_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

// per-pixel unit normalization of CHW features -> pixel-major rows
inline std::vector<double> normalize_pixels(const std::vector<double>& x, int64_t c, int64_t hw) {
    std::vector<double> out(x.size());
    for (int64_t p = 0; p < hw; ++p) {
        double n = 1e-12;
        for (int64_t ch = 0; ch < c; ++ch) {
            double v = x[static_cast<size_t>(ch * hw + p)];
            n += v * v;
        }
        n = std::sqrt(n);
        for (int64_t ch = 0; ch < c; ++ch)
            out[static_cast<size_t>(p * c + ch)] = x[static_cast<size_t>(ch * hw + p)] / n;
    }
    return out;
}

inline double kd_loss(const std::vector<std::vector<double>>& z,
                      const std::vector<std::vector<double>>& zhat,
                      const std::vector<int64_t>& subset, double alpha, double beta) {
    double cos_sum = 0, l1_sum = 0;
    for (int64_t i : subset) {
        const auto& a = z[static_cast<size_t>(i)];
        const auto& b = zhat[static_cast<size_t>(i)];
        double dot = 0, na = 0, nb = 0, l1 = 0;
        for (size_t c = 0; c < a.size(); ++c) {
            dot += a[c] * b[c];
            na += a[c] * a[c];
            nb += b[c] * b[c];
            l1 += std::abs(a[c] - b[c]);
        }
        if (na > 0 && nb > 0) cos_sum += dot / (std::sqrt(na) * std::sqrt(nb));
        l1_sum += l1 / static_cast<double>(a.size());
    }
    double n = static_cast<double>(subset.size());
    return alpha * (1.0 - cos_sum / n) + beta * (l1_sum / n);
}

// plain per-pixel recomputation of the confidence-weighted regression loss
inline double conf_loss(const std::vector<double>& pred_xyz, const std::vector<double>& conf,
                        const std::vector<double>& gt_xyz, const std::vector<int64_t>& valid,
                        double alpha_conf) {
    double s_pred = 0, s_gt = 0;
    for (int64_t p : valid) {
        double np = 0, ng = 0;
        for (int c = 0; c < 3; ++c) {
            np += pred_xyz[static_cast<size_t>(p * 3 + c)] * pred_xyz[static_cast<size_t>(p * 3 + c)];
            ng += gt_xyz[static_cast<size_t>(p * 3 + c)] * gt_xyz[static_cast<size_t>(p * 3 + c)];
        }
        s_pred += std::sqrt(np);
        s_gt += std::sqrt(ng);
    }
    s_pred /= static_cast<double>(valid.size());
    s_gt /= static_cast<double>(valid.size());
    double acc = 0;
    for (int64_t p : valid) {
        double rho = 0;
        for (int c = 0; c < 3; ++c) {
            double d = pred_xyz[static_cast<size_t>(p * 3 + c)] / s_pred -
                       gt_xyz[static_cast<size_t>(p * 3 + c)] / s_gt;
            rho += d * d;
        }
        rho = std::sqrt(rho);
        double cp = conf[static_cast<size_t>(p)];
        acc += cp * rho - alpha_conf * std::log(cp);
    }
    return acc / static_cast<double>(valid.size());
}

// brute-force symmetric InfoNCE over cell descriptors
inline double match_loss(const std::vector<std::vector<double>>& di,
                         const std::vector<std::vector<double>>& dj,
                         const std::vector<std::pair<int64_t, int64_t>>& pairs, double tau) {
    auto ce_dir = [tau](const std::vector<std::vector<double>>& q,
                        const std::vector<std::vector<double>>& k, int64_t qi, int64_t target) {
        std::vector<double> logits(k.size());
        double mx = -1e300;
        for (size_t c = 0; c < k.size(); ++c) {
            double dot = 0;
            for (size_t e = 0; e < k[c].size(); ++e) dot += q[static_cast<size_t>(qi)][e] * k[c][e];
            logits[c] = dot / tau;
            mx = std::max(mx, logits[c]);
        }
        double z = 0;
        for (double l : logits) z += std::exp(l - mx);
        return (mx + std::log(z)) - logits[static_cast<size_t>(target)];
    };
    double acc_ij = 0, acc_ji = 0;
    for (auto& [a, b] : pairs) {
        acc_ij += ce_dir(di, dj, a, b);
        acc_ji += ce_dir(dj, di, b, a);
    }
    double m = static_cast<double>(pairs.size());
    return 0.5 * (acc_ij / m + acc_ji / m);
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double kl_loss(const std::vector<double>& mu, const std::vector<double>& logvar) {
    double acc = 0;
    for (size_t i = 0; i < mu.size(); ++i)
        acc += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
    return acc / static_cast<double>(mu.size());
}

}  // namespace uniugg::testing::ref
