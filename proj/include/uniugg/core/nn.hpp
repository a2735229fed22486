#pragma once

#include <string>
#include <utility>
#include <vector>

#include "uniugg/core/autograd.hpp"
#include "uniugg/core/conv.hpp"

namespace uniugg::core {

// Named-parameter registry. Layers register their Vars (shared-node handles)
// and child modules in construction order, which fixes checkpoint layout and
// optimizer ordering.
template <typename T>
class Module {
public:
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;
    virtual ~Module() = default;

    std::vector<std::pair<std::string, Var<T>>> named_params() const {
        std::vector<std::pair<std::string, Var<T>>> out;
        collect("", out);
        return out;
    }

    std::vector<Var<T>> params() const {
        std::vector<Var<T>> out;
        for (auto& [name, v] : named_params()) out.push_back(v);
        return out;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (auto& [name, v] : named_params()) n += v.numel();
        return n;
    }

    void set_trainable(bool trainable) {
        for (auto& [name, v] : named_params()) v.set_requires_grad(trainable);
    }

    void zero_grad() {
        for (auto& [name, v] : named_params()) v.node()->zero_grad();
    }

protected:
    void register_param(const std::string& name, const Var<T>& v) { params_.emplace_back(name, v); }
    void register_child(const std::string& name, Module<T>* child) {
        children_.emplace_back(name, child);
    }

private:
    void collect(const std::string& prefix, std::vector<std::pair<std::string, Var<T>>>& out) const {
        for (auto& [name, v] : params_) out.emplace_back(prefix + name, v);
        for (auto& [name, child] : children_) child->collect(prefix + name + ".", out);
    }

    std::vector<std::pair<std::string, Var<T>>> params_;
    std::vector<std::pair<std::string, Module<T>*>> children_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Linear : public Module<T> {
public:
    Linear(int64_t in, int64_t out, Rng& rng, bool trainable = true) : in_(in), out_(out) {
        double a = std::sqrt(6.0 / static_cast<double>(in + out));
        weight = Var<T>::leaf(Tensor<T>::uniform({in, out}, rng, -a, a), trainable);
        bias = Var<T>::leaf(Tensor<T>({out}), trainable);
        this->register_param("weight", weight);
        this->register_param("bias", bias);
    }

    Var<T> forward(const Var<T>& x) const { return add_row(matmul(x, weight), bias); }

    Var<T> weight;  // [in, out]
    Var<T> bias;    // [out]

private:
    int64_t in_, out_;
};

template <typename T>
class LayerNorm : public Module<T> {
public:
    explicit LayerNorm(int64_t dim, bool trainable = true) {
        gamma = Var<T>::leaf(Tensor<T>({dim}, T(1)), trainable);
        beta = Var<T>::leaf(Tensor<T>({dim}), trainable);
        this->register_param("gamma", gamma);
        this->register_param("beta", beta);
    }

    Var<T> forward(const Var<T>& x) const { return layer_norm(x, gamma, beta); }

    Var<T> gamma, beta;
};

template <typename T>
class Embedding : public Module<T> {
public:
    Embedding(int64_t vocab, int64_t dim, Rng& rng, bool trainable = true) {
        table = Var<T>::leaf(Tensor<T>::randn({vocab, dim}, rng, 0.02), trainable);
        this->register_param("table", table);
    }

    Var<T> forward(const std::vector<int64_t>& ids) const { return gather_rows(table, ids); }

    Var<T> table;
};

// ---------------------------------------------------------------------------

// Standard scaled dot-product attention, heads realized as column slices.
// `mask` (optional, [Nq,Nk]) is added to the score matrix before softmax.
template <typename T>
class MultiHeadAttention : public Module<T> {
public:
    MultiHeadAttention(int64_t dim, int64_t heads, Rng& rng)
        : dim_(dim), heads_(heads), wq(dim, dim, rng), wk(dim, dim, rng), wv(dim, dim, rng),
          wo(dim, dim, rng) {
        if (dim % heads != 0) throw ValidationError("attention dim must divide heads");
        this->register_child("wq", &wq);
        this->register_child("wk", &wk);
        this->register_child("wv", &wv);
        this->register_child("wo", &wo);
    }

    Var<T> forward(const Var<T>& q_in, const Var<T>& kv_in, const Var<T>* mask = nullptr) const {
        int64_t dh = dim_ / heads_;
        T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        Var<T> q = wq.forward(q_in);
        Var<T> k = wk.forward(kv_in);
        Var<T> v = wv.forward(kv_in);
        std::vector<Var<T>> head_outs;
        head_outs.reserve(static_cast<size_t>(heads_));
        for (int64_t h = 0; h < heads_; ++h) {
            Var<T> qh = slice_cols(q, h * dh, (h + 1) * dh);
            Var<T> kh = slice_cols(k, h * dh, (h + 1) * dh);
            Var<T> vh = slice_cols(v, h * dh, (h + 1) * dh);
            Var<T> scores = mul_scalar(matmul(qh, transpose(kh)), scale);
            if (mask) scores = add(scores, *mask);
            head_outs.push_back(matmul(softmax_rows(scores), vh));
        }
        return wo.forward(concat_cols(head_outs));
    }

    Linear<T> wq, wk, wv, wo;

private:
    int64_t dim_, heads_;
};

// Pre-norm self-attention block: x += attn(ln1(x)); x += mlp(ln2(x)).
template <typename T>
class TransformerBlock : public Module<T> {
public:
    TransformerBlock(int64_t dim, int64_t heads, Rng& rng, int64_t mlp_ratio = 4)
        : ln1(dim), attn(dim, heads, rng), ln2(dim), fc1(dim, dim * mlp_ratio, rng),
          fc2(dim * mlp_ratio, dim, rng) {
        this->register_child("ln1", &ln1);
        this->register_child("attn", &attn);
        this->register_child("ln2", &ln2);
        this->register_child("fc1", &fc1);
        this->register_child("fc2", &fc2);
    }

    Var<T> forward(const Var<T>& x, const Var<T>* mask = nullptr) const {
        Var<T> h = x;
        Var<T> n1 = ln1.forward(h);
        h = add(h, attn.forward(n1, n1, mask));
        h = add(h, fc2.forward(gelu_(fc1.forward(ln2.forward(h)))));
        return h;
    }

    LayerNorm<T> ln1;
    MultiHeadAttention<T> attn;
    LayerNorm<T> ln2;
    Linear<T> fc1, fc2;
};

// Pre-norm block with self-attention, cross-attention to a context sequence,
// then MLP.
template <typename T>
class CrossAttentionBlock : public Module<T> {
public:
    CrossAttentionBlock(int64_t dim, int64_t heads, Rng& rng, int64_t mlp_ratio = 4)
        : ln1(dim), self_attn(dim, heads, rng), ln2(dim), cross_attn(dim, heads, rng), ln3(dim),
          fc1(dim, dim * mlp_ratio, rng), fc2(dim * mlp_ratio, dim, rng) {
        this->register_child("ln1", &ln1);
        this->register_child("self_attn", &self_attn);
        this->register_child("ln2", &ln2);
        this->register_child("cross_attn", &cross_attn);
        this->register_child("ln3", &ln3);
        this->register_child("fc1", &fc1);
        this->register_child("fc2", &fc2);
    }

    Var<T> forward(const Var<T>& x, const Var<T>& context) const {
        Var<T> h = x;
        Var<T> n1 = ln1.forward(h);
        h = add(h, self_attn.forward(n1, n1));
        h = add(h, cross_attn.forward(ln2.forward(h), context));
        h = add(h, fc2.forward(gelu_(fc1.forward(ln3.forward(h)))));
        return h;
    }

    LayerNorm<T> ln1;
    MultiHeadAttention<T> self_attn;
    LayerNorm<T> ln2;
    MultiHeadAttention<T> cross_attn;
    LayerNorm<T> ln3;
    Linear<T> fc1, fc2;
};

// ---------------------------------------------------------------------------

template <typename T>
class Conv2dLayer : public Module<T> {
public:
    Conv2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng)
        : stride_(stride), pad_(pad) {
        double a = std::sqrt(6.0 / static_cast<double>(cin * k * k + cout * k * k));
        weight = Var<T>::leaf(Tensor<T>::uniform({cout, cin, k, k}, rng, -a, a), true);
        bias = Var<T>::leaf(Tensor<T>({cout}), true);
        this->register_param("weight", weight);
        this->register_param("bias", bias);
    }

    Var<T> forward(const Var<T>& x) const { return conv2d(x, weight, bias, stride_, pad_); }

    Var<T> weight, bias;

private:
    int64_t stride_, pad_;
};

template <typename T>
class ConvTranspose2dLayer : public Module<T> {
public:
    ConvTranspose2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad,
                         Rng& rng)
        : stride_(stride), pad_(pad) {
        double a = std::sqrt(6.0 / static_cast<double>(cin * k * k + cout * k * k));
        weight = Var<T>::leaf(Tensor<T>::uniform({cin, cout, k, k}, rng, -a, a), true);
        bias = Var<T>::leaf(Tensor<T>({cout}), true);
        this->register_param("weight", weight);
        this->register_param("bias", bias);
    }

    Var<T> forward(const Var<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride_, pad_);
    }

    Var<T> weight, bias;

private:
    int64_t stride_, pad_;
};

// Sinusoidal position/timestep embedding as a constant row vector [1, dim].
template <typename T>
Var<T> sinusoidal_embedding(double t, int64_t dim) {
    Tensor<T> e({1, dim});
    int64_t half = dim / 2;
    for (int64_t i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                               static_cast<double>(std::max<int64_t>(half - 1, 1)));
        e.v[static_cast<size_t>(i)] = static_cast<T>(std::sin(t * freq));
        e.v[static_cast<size_t>(half + i)] = static_cast<T>(std::cos(t * freq));
    }
    return Var<T>::leaf(std::move(e), false);
}

}  // namespace uniugg::core
