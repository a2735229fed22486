#include "uniugg/harness/qa.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

namespace uniugg::harness {

namespace {

const std::vector<std::string>& standard_tokens() {
    static const std::vector<std::string> toks = {
        "<pad>", "<bos>", "<eos>", "did",    "the",    "camera",  "move",    "left",
        "right", "up",    "down",  "toward", "away",   "or",      "how",     "many",
        "objects", "are", "in",    "scene",  "is",     "second",  "view",    "of",
        "first", "zero",  "one",   "two",    "three",  "four",    "five",    "six",
        "seven", "eight", "nine",  "ten",    "eleven", "twelve",  "closer",  "farther",
        "than",  "what",  "direction", "count", "plane", "box",   "yes",     "no",
        "near",  "far",   "front", "back",   "above",  "below",  "a",       "b",
        "c",     "d",     "this",  "that",   "same",   "different", "visible", "object"};
    return toks;
}

const char* kNumberWords[] = {"zero", "one", "two",   "three", "four",  "five",  "six",
                              "seven", "eight", "nine", "ten",  "eleven", "twelve"};

}  // namespace

QaVocabulary QaVocabulary::standard() {
    QaVocabulary v;
    v.tokens_ = standard_tokens();
    return v;
}

int64_t QaVocabulary::id(const std::string& word) const {
    for (size_t i = 0; i < tokens_.size(); ++i)
        if (tokens_[i] == word) return static_cast<int64_t>(i);
    throw ValidationError("word not in vocabulary: " + word);
}

const std::string& QaVocabulary::word(int64_t id) const {
    if (id < 0 || id >= size()) throw ValidationError("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

models::TokenSequence QaVocabulary::encode(const std::string& text) const {
    models::TokenSequence seq;
    seq.vocab = size();
    std::istringstream in(text);
    std::string word;
    while (in >> word) seq.ids.push_back(id(word));
    return seq;
}

std::string QaVocabulary::decode(const models::TokenSequence& seq) const {
    std::string out;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (i) out += " ";
        out += word(seq.ids[i]);
    }
    return out;
}

void QaVocabulary::save(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["tokens"] = tokens_;
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << j.dump(2) << "\n";
}

QaVocabulary QaVocabulary::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    nlohmann::json j;
    f >> j;
    QaVocabulary v;
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    return v;
}

QaPair make_qa(const geometry::ScenePair& pair, const geometry::SceneConfig& scene_config,
               const QaVocabulary& vocab) {
    // camera-j center expressed in the camera-i frame
    Eigen::Vector3d cj = geometry::relative_pose(pair.pose_j, pair.pose_i).translation;
    const double thresh = 0.03;

    struct Candidate {
        std::string question, answer;
    };
    std::vector<Candidate> candidates;
    if (std::abs(cj.x()) > thresh)
        candidates.push_back(
            {"did the camera move left or right", cj.x() < 0 ? "left" : "right"});
    // image y points down, so a negative y offset is a move up
    if (std::abs(cj.y()) > thresh)
        candidates.push_back({"did the camera move up or down", cj.y() < 0 ? "up" : "down"});
    if (std::abs(cj.z()) > thresh)
        candidates.push_back(
            {"did the camera move toward or away", cj.z() > 0 ? "toward" : "away"});
    int count = scene_config.n_planes + scene_config.n_boxes;
    if (count >= 0 && count <= 12)
        candidates.push_back({"how many objects are in the scene", kNumberWords[count]});
    if (candidates.empty())
        throw GenerationError("no unambiguous question template for this pair");

    const Candidate& chosen =
        candidates[static_cast<size_t>(pair.seed % candidates.size())];
    QaPair qa;
    qa.seed = pair.seed;
    qa.question = vocab.encode(chosen.question);
    qa.answer = vocab.encode(chosen.answer);
    return qa;
}

void save_qa_jsonl(const std::vector<QaPair>& pairs, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    for (const auto& qa : pairs) {
        nlohmann::json j;
        j["seed"] = qa.seed;
        j["question_ids"] = qa.question.ids;
        j["answer_ids"] = qa.answer.ids;
        f << j.dump() << "\n";
    }
}

std::vector<QaPair> load_qa_jsonl(const std::filesystem::path& path, int64_t vocab_size) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    std::vector<QaPair> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        QaPair qa;
        qa.seed = j.at("seed").get<uint64_t>();
        qa.question.ids = j.at("question_ids").get<std::vector<int64_t>>();
        qa.answer.ids = j.at("answer_ids").get<std::vector<int64_t>>();
        qa.question.vocab = qa.answer.vocab = vocab_size;
        qa.question.validate();
        qa.answer.validate();
        out.push_back(std::move(qa));
    }
    return out;
}

}  // namespace uniugg::harness
