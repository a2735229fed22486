#include "uniugg/harness/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace uniugg::harness {

namespace {

constexpr char kMagic[8] = {'U', 'G', 'G', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw IoError("checkpoint: truncated file");
    return v;
}

}  // namespace

void Checkpoint::add(const std::string& key, std::vector<int64_t> shape,
                     std::vector<float> data) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != static_cast<int64_t>(data.size()))
        throw ValidationError("checkpoint: data does not match shape for " + key);
    if (index_.count(key)) throw ValidationError("checkpoint: duplicate key " + key);
    index_[key] = blobs_.size();
    blobs_.push_back({key, std::move(shape), std::move(data)});
}

const Checkpoint::Blob* Checkpoint::find(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &blobs_[it->second];
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    for (const auto& b : blobs_)
        if (b.key.rfind(prefix, 0) == 0) return true;
    return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(kMagic, 8);
    write_pod<uint32_t>(f, 1);  // format version
    write_pod<uint64_t>(f, global_step);
    write_pod<uint32_t>(f, static_cast<uint32_t>(config_json.size()));
    f.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    write_pod<uint32_t>(f, static_cast<uint32_t>(blobs_.size()));
    for (const auto& b : blobs_) {
        write_pod<uint16_t>(f, static_cast<uint16_t>(b.key.size()));
        f.write(b.key.data(), static_cast<std::streamsize>(b.key.size()));
        write_pod<uint8_t>(f, static_cast<uint8_t>(b.shape.size()));
        for (int64_t d : b.shape) write_pod<int64_t>(f, d);
        f.write(reinterpret_cast<const char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    }
    if (!f) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    uint32_t version = read_pod<uint32_t>(f);
    if (version != 1) throw IoError("unsupported checkpoint version");
    Checkpoint ck;
    ck.global_step = read_pod<uint64_t>(f);
    uint32_t cfg_len = read_pod<uint32_t>(f);
    ck.config_json.resize(cfg_len);
    f.read(ck.config_json.data(), cfg_len);
    uint32_t n_blobs = read_pod<uint32_t>(f);
    for (uint32_t i = 0; i < n_blobs; ++i) {
        uint16_t klen = read_pod<uint16_t>(f);
        std::string key(klen, '\0');
        f.read(key.data(), klen);
        uint8_t ndim = read_pod<uint8_t>(f);
        std::vector<int64_t> shape(ndim);
        int64_t n = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            shape[d] = read_pod<int64_t>(f);
            n *= shape[d];
        }
        std::vector<float> data(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!f) throw IoError("checkpoint: truncated blob " + key);
        ck.add(key, std::move(shape), std::move(data));
    }
    return ck;
}

}  // namespace uniugg::harness
