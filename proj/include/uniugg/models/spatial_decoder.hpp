#pragma once

#include "uniugg/geometry/scene.hpp"
#include "uniugg/models/encoder.hpp"

namespace uniugg::models {

struct DecoderConfig {
    int dim = 128;
    int depth = 2;
    int heads = 4;
    int descriptor_dim = 24;
    bool share_branches = false;  // one set of weights for both views

    void validate() const {
        if (depth < 1) throw ValidationError("decoder: depth must be >= 1");
        if (dim % heads != 0) throw ValidationError("decoder: dim must divide heads");
    }
};

// Pointmaps and confidence at pixel resolution, descriptors at token-cell
// resolution (one descriptor per cell keeps the matching softmax enumerable).
template <typename T>
struct SpatialPrediction {
    core::Var<T> pointmap;     // [H*W, 3]
    core::Var<T> confidence;   // [H*W, 1], C = 1 + exp(c~) >= 1
    core::Var<T> descriptors;  // [grid_h*grid_w, d_f], unit rows
    int h = 0, w = 0;
    int grid_h = 0, grid_w = 0, patch = 0;
};

// Visual projector + dual cross-attention decoder + regression heads.
template <typename T>
class SpatialDecoder : public core::Module<T> {
public:
    SpatialDecoder(const EncoderConfig& enc_config, const DecoderConfig& config, core::Rng& rng)
        : config_(config), enc_config_(enc_config),
          proj1(enc_config.dim, config.dim, rng), proj2(config.dim, config.dim, rng) {
        config.validate();
        this->register_child("proj1", &proj1);
        this->register_child("proj2", &proj2);
        pos_embed = core::Var<T>::leaf(
            core::Tensor<T>::randn({enc_config.n_tokens(), config.dim}, rng, 0.02), true);
        this->register_param("pos_embed", pos_embed);

        int branches = config.share_branches ? 1 : 2;
        for (int b = 0; b < branches; ++b) {
            std::string tag = config.share_branches ? "branch" : ("branch" + std::to_string(b));
            for (int k = 0; k < config.depth; ++k) {
                blocks_[b].push_back(
                    std::make_unique<core::CrossAttentionBlock<T>>(config.dim, config.heads, rng));
                this->register_child(tag + ".block" + std::to_string(k), blocks_[b].back().get());
            }
            norms_[b] = std::make_unique<core::LayerNorm<T>>(config.dim);
            this->register_child(tag + ".norm", norms_[b].get());
            int p2 = enc_config.patch_size * enc_config.patch_size;
            point_heads_[b] = std::make_unique<core::Linear<T>>(config.dim, p2 * 3, rng);
            conf_heads_[b] = std::make_unique<core::Linear<T>>(config.dim, p2, rng);
            desc_heads_[b] = std::make_unique<core::Linear<T>>(config.dim, config.descriptor_dim, rng);
            this->register_child(tag + ".point_head", point_heads_[b].get());
            this->register_child(tag + ".conf_head", conf_heads_[b].get());
            this->register_child(tag + ".desc_head", desc_heads_[b].get());
        }
    }

    // Two-layer GeLU projector, per token.
    TokenGrid<T> project_tokens(const TokenGrid<T>& z) const {
        using namespace core;
        TokenGrid<T> out = z;
        out.tokens = proj2.forward(gelu_(proj1.forward(z.tokens)));
        return out;
    }

    // Lockstep dual decoder over projected grids. Each block self-attends and
    // cross-attends to the other branch's previous-layer state.
    std::pair<core::Var<T>, core::Var<T>> decode_pair(const TokenGrid<T>& zp_i,
                                                      const TokenGrid<T>& zp_j) const {
        using namespace core;
        if (zp_i.grid_h != zp_j.grid_h || zp_i.grid_w != zp_j.grid_w ||
            zp_i.dim() != zp_j.dim())
            throw ValidationError("decode_pair: grid geometry mismatch");
        Var<T> xi = add(zp_i.tokens, pos_embed);
        Var<T> xj = add(zp_j.tokens, pos_embed);
        for (int k = 0; k < config_.depth; ++k) {
            Var<T> ni = branch_block(0, k).forward(xi, xj);
            Var<T> nj = branch_block(1, k).forward(xj, xi);
            xi = ni;
            xj = nj;
        }
        return {branch_norm(0).forward(xi), branch_norm(1).forward(xj)};
    }

    // Per-token regression of the p x p pixel block plus one descriptor.
    SpatialPrediction<T> spatial_head(const core::Var<T>& h_tokens, int branch) const {
        using namespace core;
        int b = config_.share_branches ? 0 : branch;
        int p = enc_config_.patch_size;
        int H = enc_config_.image_h, W = enc_config_.image_w;

        SpatialPrediction<T> pred;
        pred.h = H;
        pred.w = W;
        pred.grid_h = enc_config_.grid_h();
        pred.grid_w = enc_config_.grid_w();
        pred.patch = p;

        Var<T> points = point_heads_[b]->forward(h_tokens);  // [N, p^2*3]
        pred.pointmap = gather_flat(points, pixel_from_patch_index(H, W, p, 3),
                                    {static_cast<int64_t>(H) * W, 3});
        Var<T> clogit = conf_heads_[b]->forward(h_tokens);  // [N, p^2]
        Var<T> cpix = gather_flat(clogit, pixel_from_patch_index(H, W, p, 1),
                                  {static_cast<int64_t>(H) * W, 1});
        pred.confidence = add_scalar(exp_(cpix), T(1));
        pred.descriptors = normalize_rows(desc_heads_[b]->forward(h_tokens), T(1e-24));
        return pred;
    }

    // encode-side convenience: project, decode, apply heads.
    std::pair<SpatialPrediction<T>, SpatialPrediction<T>> predict_pair(
        const TokenGrid<T>& z_i, const TokenGrid<T>& z_j) const {
        auto [hi, hj] = decode_pair(project_tokens(z_i), project_tokens(z_j));
        return {spatial_head(hi, 0), spatial_head(hj, 1)};
    }

    const DecoderConfig& config() const { return config_; }

    core::Linear<T> proj1, proj2;
    core::Var<T> pos_embed;

private:
    const core::CrossAttentionBlock<T>& branch_block(int branch, int k) const {
        int b = config_.share_branches ? 0 : branch;
        return *blocks_[b][static_cast<size_t>(k)];
    }
    const core::LayerNorm<T>& branch_norm(int branch) const {
        return *norms_[config_.share_branches ? 0 : branch];
    }

    DecoderConfig config_;
    EncoderConfig enc_config_;
    std::vector<std::unique_ptr<core::CrossAttentionBlock<T>>> blocks_[2];
    std::unique_ptr<core::LayerNorm<T>> norms_[2];
    std::unique_ptr<core::Linear<T>> point_heads_[2];
    std::unique_ptr<core::Linear<T>> conf_heads_[2];
    std::unique_ptr<core::Linear<T>> desc_heads_[2];
};

// ---------------------------------------------------------------------------
// losses

inline std::vector<int64_t> valid_pixel_indices(const geometry::Mask& mask) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask.v[static_cast<size_t>(i)]) idx.push_back(i);
    return idx;
}

// Scale-normalized confidence-weighted regression:
// mean_p( C_p * || X_p/s_pred - X^gt_p/s_gt || - alpha_conf * log C_p ).
template <typename T>
core::Var<T> conf_loss(const SpatialPrediction<T>& pred, const geometry::PointMap& gt_pointmap,
                       const geometry::Mask& mask, double alpha_conf) {
    using namespace core;
    std::vector<int64_t> valid = valid_pixel_indices(mask);
    if (valid.empty()) throw ValidationError("conf_loss: empty valid mask");
    int64_t nv = static_cast<int64_t>(valid.size());

    Var<T> x = gather_rows(pred.pointmap, valid);
    Var<T> c = gather_rows(pred.confidence, valid);

    Tensor<T> gt({nv, 3});
    double s_gt = 0.0;
    for (int64_t r = 0; r < nv; ++r) {
        double n2 = 0.0;
        for (int64_t ch = 0; ch < 3; ++ch) {
            double v = gt_pointmap.v[static_cast<size_t>(valid[static_cast<size_t>(r)] * 3 + ch)];
            gt.at2(r, ch) = static_cast<T>(v);
            n2 += v * v;
        }
        s_gt += std::sqrt(n2);
    }
    s_gt /= static_cast<double>(nv);
    if (s_gt <= 0.0) throw ValidationError("conf_loss: degenerate ground truth scale");
    for (auto& v : gt.v) v = static_cast<T>(v / s_gt);
    Var<T> gt_scaled = Var<T>::leaf(std::move(gt), false);

    Var<T> s_pred = mul_scalar(sum_all(rows_l2norm(x)), T(1) / static_cast<T>(nv));
    Var<T> rho = rows_l2norm(sub(div_scalarvar(x, s_pred), gt_scaled));
    Var<T> per_pixel = sub(mul(c, rho), mul_scalar(log_(c), static_cast<T>(alpha_conf)));
    return mean_all(per_pixel);
}

// Symmetric InfoNCE over exact correspondences mapped to token cells.
// Candidates are all cells of the other view; both directions averaged.
template <typename T>
core::Var<T> match_loss(const core::Var<T>& desc_i, const core::Var<T>& desc_j,
                        const std::vector<std::pair<int64_t, int64_t>>& cell_pairs, double tau) {
    using namespace core;
    if (cell_pairs.empty()) throw ValidationError("match_loss: no correspondences");
    if (tau <= 0.0) throw ValidationError("match_loss: temperature must be > 0");
    std::vector<int64_t> ci, cj;
    ci.reserve(cell_pairs.size());
    cj.reserve(cell_pairs.size());
    for (auto& [a, b] : cell_pairs) {
        ci.push_back(a);
        cj.push_back(b);
    }
    T inv_tau = static_cast<T>(1.0 / tau);
    Var<T> logits_ij = mul_scalar(matmul(gather_rows(desc_i, ci), transpose(desc_j)), inv_tau);
    Var<T> logits_ji = mul_scalar(matmul(gather_rows(desc_j, cj), transpose(desc_i)), inv_tau);
    Var<T> ce_ij = cross_entropy_rows(logits_ij, cj);
    Var<T> ce_ji = cross_entropy_rows(logits_ji, ci);
    return mul_scalar(add(ce_ij, ce_ji), T(0.5));
}

// Correspondences in continuous pixel coordinates -> token cell index pairs.
inline std::vector<std::pair<int64_t, int64_t>> correspondence_cells(
    const geometry::ScenePair& pair, int grid_h, int grid_w) {
    double cell_w = static_cast<double>(pair.intrinsics.width) / grid_w;
    double cell_h = static_cast<double>(pair.intrinsics.height) / grid_h;
    std::vector<std::pair<int64_t, int64_t>> cells;
    cells.reserve(pair.correspondences.size());
    for (const auto& c : pair.correspondences) {
        int64_t gi = std::min<int64_t>(grid_h - 1, static_cast<int64_t>(c.yi / cell_h)) * grid_w +
                     std::min<int64_t>(grid_w - 1, static_cast<int64_t>(c.xi / cell_w));
        int64_t gj = std::min<int64_t>(grid_h - 1, static_cast<int64_t>(c.yj / cell_h)) * grid_w +
                     std::min<int64_t>(grid_w - 1, static_cast<int64_t>(c.xj / cell_w));
        cells.emplace_back(gi, gj);
    }
    return cells;
}

struct SpatialLossWeights {
    double lambda1 = 1.0;     // match term
    double lambda2 = 1.0;     // rgb term
    double alpha_conf = 0.2;  // confidence regularizer
    double tau = 0.07;        // matching temperature
};

template <typename T>
struct SpatialLossBreakdown {
    core::Var<T> conf;   // both views summed
    core::Var<T> match;  // symmetric, both directions
    core::Var<T> rgb;    // both views summed; zero Var when disabled
    core::Var<T> total;  // conf + lambda1*match + lambda2*rgb
};

// Assembles the pairwise spatial loss. `rgb_i/rgb_j` may be undefined Vars
// when lambda2 == 0 or no RGB head is attached.
template <typename T>
SpatialLossBreakdown<T> spatial_loss(const SpatialPrediction<T>& pred_i,
                                     const SpatialPrediction<T>& pred_j,
                                     const geometry::ScenePair& pair,
                                     const core::Var<T>& rgb_i, const core::Var<T>& rgb_j,
                                     const PerceptualProxy<T>& proxy,
                                     const RgbLossWeights& rgb_weights,
                                     const SpatialLossWeights& weights) {
    using namespace core;
    SpatialLossBreakdown<T> out;
    out.conf = add(conf_loss(pred_i, pair.gt_pointmap_ii, pair.valid_i, weights.alpha_conf),
                   conf_loss(pred_j, pair.gt_pointmap_ji, pair.valid_j, weights.alpha_conf));
    auto cells = correspondence_cells(pair, pred_i.grid_h, pred_i.grid_w);
    out.match = match_loss(pred_i.descriptors, pred_j.descriptors, cells, weights.tau);
    if (weights.lambda2 != 0.0 && rgb_i.defined() && rgb_j.defined()) {
        int h = pred_i.h, w = pred_i.w;
        out.rgb = add(rgb_loss(rgb_i, image_as_var<T>(pair.image_i), rgb_weights, proxy, h, w),
                      rgb_loss(rgb_j, image_as_var<T>(pair.image_j), rgb_weights, proxy, h, w));
    } else {
        out.rgb = Var<T>::scalar(T(0));
    }
    out.total = add(out.conf, add(mul_scalar(out.match, static_cast<T>(weights.lambda1)),
                                  mul_scalar(out.rgb, static_cast<T>(weights.lambda2))));
    return out;
}

}  // namespace uniugg::models
