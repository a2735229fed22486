#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uniugg/geometry/scene.hpp"
#include "uniugg/models/conditioner.hpp"

namespace uniugg::harness {

// Fixed 64-word toy vocabulary; ids 0..2 are <pad>/<bos>/<eos>.
class QaVocabulary {
public:
    static QaVocabulary standard();

    int64_t id(const std::string& word) const;
    const std::string& word(int64_t id) const;
    int64_t size() const { return static_cast<int64_t>(tokens_.size()); }

    // whitespace-separated words -> ids; throws on unknown words
    models::TokenSequence encode(const std::string& text) const;
    std::string decode(const models::TokenSequence& seq) const;

    void save(const std::filesystem::path& path) const;
    static QaVocabulary load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
};

struct QaPair {
    uint64_t seed = 0;
    models::TokenSequence question;
    models::TokenSequence answer;  // without the end token
};

// Templated spatial question answerable from the pair's ground truth; the
// template is chosen deterministically among those whose answer is
// unambiguous for this pair.
QaPair make_qa(const geometry::ScenePair& pair, const geometry::SceneConfig& scene_config,
               const QaVocabulary& vocab);

// JSONL: {"seed": int, "question_ids": [...], "answer_ids": [...]}
void save_qa_jsonl(const std::vector<QaPair>& pairs, const std::filesystem::path& path);
std::vector<QaPair> load_qa_jsonl(const std::filesystem::path& path, int64_t vocab_size);

}  // namespace uniugg::harness
