#pragma once

#include "uniugg/geometry/raymap.hpp"
#include "uniugg/models/encoder.hpp"

namespace uniugg::models {

struct TokenSequence {
    std::vector<int64_t> ids;
    int64_t vocab = 0;

    void validate() const {
        for (int64_t id : ids)
            if (id < 0 || id >= vocab)
                throw ValidationError("token id " + std::to_string(id) + " out of vocab");
    }
};

struct ConditionerConfig {
    int dim = 128;  // d_c
    int depth = 2;
    int heads = 4;
    int vocab = 64;
    int max_seq = 64;   // text position budget (question + answer)
    int enc_dim = 128;  // vision token width d

    void validate() const {
        if (dim % heads != 0) throw ValidationError("conditioner: dim must divide heads");
        if (vocab < 4) throw ValidationError("conditioner: vocab too small for specials");
    }
};

// Reserved token ids.
constexpr int64_t kPadToken = 0;
constexpr int64_t kBosToken = 1;
constexpr int64_t kEosToken = 2;

// Unified fusion transformer standing in for the LLM. One stack serves both
// roles: producing conditional features from [mode; Z; queries] with full
// attention, and teacher-forced answer prediction over [mode; Z; question;
// answer] with a causal mask on the answer segment. Vision tokens enter as a
// set (their positional information already lives in the encoder embedding),
// text tokens get learned positions.
template <typename T>
class Conditioner : public core::Module<T> {
public:
    Conditioner(const ConditionerConfig& config, core::Rng& rng)
        : config_(config), input_proj(config.enc_dim, config.dim, rng),
          query_fc1(6, config.dim, rng), query_fc2(config.dim, config.dim, rng),
          tok_embed(config.vocab, config.dim, rng), final_norm(config.dim),
          lm_head(config.dim, config.vocab, rng) {
        config.validate();
        mode_embed = core::Var<T>::leaf(core::Tensor<T>::randn({2, config.dim}, rng, 0.02), true);
        text_pos = core::Var<T>::leaf(
            core::Tensor<T>::randn({config.max_seq, config.dim}, rng, 0.02), true);
        this->register_param("mode_embed", mode_embed);
        this->register_param("text_pos", text_pos);
        this->register_child("input_proj", &input_proj);
        this->register_child("query_fc1", &query_fc1);
        this->register_child("query_fc2", &query_fc2);
        this->register_child("tok_embed", &tok_embed);
        for (int i = 0; i < config.depth; ++i) {
            blocks.push_back(
                std::make_unique<core::TransformerBlock<T>>(config.dim, config.heads, rng));
            this->register_child("block" + std::to_string(i), blocks.back().get());
        }
        this->register_child("final_norm", &final_norm);
        this->register_child("lm_head", &lm_head);
    }

    // Per-cell two-layer MLP over Pluecker coordinates -> [N_q, dim].
    core::Var<T> raymap_to_queries(const geometry::Raymap& raymap) const {
        using namespace core;
        int64_t n = raymap.grid_h() * raymap.grid_w();
        Tensor<T> cells({n, 6});
        for (int64_t i = 0; i < n * 6; ++i)
            cells.v[static_cast<size_t>(i)] = static_cast<T>(raymap.grid.v[static_cast<size_t>(i)]);
        Var<T> x = Var<T>::leaf(std::move(cells), false);
        return query_fc2.forward(gelu_(query_fc1.forward(x)));
    }

    // Conditional features read off at the query slots.
    core::Var<T> condition(const TokenGrid<T>& z_ref, const core::Var<T>& queries) const {
        using namespace core;
        if (queries.shape().size() != 2 || queries.shape()[1] != config_.dim)
            throw ValidationError("condition: query width mismatch");
        int64_t nz = z_ref.count(), nq = queries.shape()[0];
        Var<T> mode = slice_rows(mode_embed, 0, 1);
        Var<T> seq = concat_rows<T>({mode, input_proj.forward(z_ref.tokens), queries});
        for (const auto& b : blocks) seq = b->forward(seq);
        seq = final_norm.forward(seq);
        return slice_rows(seq, 1 + nz, 1 + nz + nq);
    }

    // Teacher-forced logits for each answer token: position k sees the full
    // prefix (mode, vision, question) plus answer tokens < k.
    core::Var<T> vqa_logits(const TokenGrid<T>& z, const TokenSequence& question,
                            const std::vector<int64_t>& answer_in) const {
        using namespace core;
        question.validate();
        int64_t nz = z.count();
        int64_t m = static_cast<int64_t>(question.ids.size());
        int64_t l = static_cast<int64_t>(answer_in.size());
        if (m + l > config_.max_seq)
            throw ValidationError("vqa: sequence exceeds the text position budget");

        Var<T> mode = slice_rows(mode_embed, 1, 2);
        std::vector<Var<T>> parts = {mode, input_proj.forward(z.tokens)};
        if (m > 0)
            parts.push_back(add(tok_embed.forward(question.ids), slice_rows(text_pos, 0, m)));
        parts.push_back(add(tok_embed.forward(answer_in), slice_rows(text_pos, m, m + l)));
        Var<T> seq = concat_rows<T>(parts);

        int64_t prefix = 1 + nz + m;
        int64_t s = prefix + l;
        Tensor<T> mask({s, s}, T(0));
        for (int64_t i = 0; i < s; ++i)
            for (int64_t j = 0; j < s; ++j) {
                bool allowed = i < prefix ? (j < prefix) : (j < prefix || j <= i);
                if (!allowed) mask.at2(i, j) = T(-1e30);
            }
        Var<T> mask_var = Var<T>::leaf(std::move(mask), false);
        for (const auto& b : blocks) seq = b->forward(seq, &mask_var);
        seq = final_norm.forward(seq);
        return lm_head.forward(slice_rows(seq, prefix, s));
    }

    // Mean token-level cross-entropy under teacher forcing.
    core::Var<T> vqa_loss(const TokenGrid<T>& z, const TokenSequence& question,
                          const TokenSequence& answer) const {
        if (answer.ids.empty()) throw ValidationError("vqa_loss: empty answer");
        answer.validate();
        std::vector<int64_t> answer_in = {kBosToken};
        answer_in.insert(answer_in.end(), answer.ids.begin(), answer.ids.end() - 1);
        return core::cross_entropy_rows(vqa_logits(z, question, answer_in), answer.ids);
    }

    // Greedy decoding; stops at the end token or max_len.
    TokenSequence vqa_generate(const TokenGrid<T>& z, const TokenSequence& question,
                               int max_len) const {
        TokenSequence out;
        out.vocab = config_.vocab;
        std::vector<int64_t> answer_in = {kBosToken};
        for (int step = 0; step < max_len; ++step) {
            auto logits = vqa_logits(z, question, answer_in);
            int64_t last = logits.shape()[0] - 1;
            int64_t best = 0;
            T best_v = logits.val().at2(last, 0);
            for (int64_t v = 1; v < config_.vocab; ++v)
                if (logits.val().at2(last, v) > best_v) {
                    best_v = logits.val().at2(last, v);
                    best = v;
                }
            if (best == kEosToken) break;
            out.ids.push_back(best);
            answer_in.push_back(best);
        }
        return out;
    }

    const ConditionerConfig& config() const { return config_; }

    core::Linear<T> input_proj;
    core::Linear<T> query_fc1, query_fc2;
    core::Embedding<T> tok_embed;
    core::Var<T> mode_embed, text_pos;
    std::vector<std::unique_ptr<core::TransformerBlock<T>>> blocks;
    core::LayerNorm<T> final_norm;
    core::Linear<T> lm_head;

private:
    ConditionerConfig config_;
};

}  // namespace uniugg::models
