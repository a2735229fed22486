#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "uniugg/core/errors.hpp"

namespace uniugg::harness {

// Binary checkpoint: named little-endian float32 blobs with shape headers,
// plus a config snapshot and the global step. Save/load round trips are
// byte-identical.
class Checkpoint {
public:
    struct Blob {
        std::string key;
        std::vector<int64_t> shape;
        std::vector<float> data;
    };

    uint64_t global_step = 0;
    std::string config_json;

    void add(const std::string& key, std::vector<int64_t> shape, std::vector<float> data);
    const Blob* find(const std::string& key) const;
    const std::vector<Blob>& blobs() const { return blobs_; }
    bool has_prefix(const std::string& prefix) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::vector<Blob> blobs_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace uniugg::harness
