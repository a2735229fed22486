#include "uniugg/geometry/scene_io.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace uniugg::geometry {

namespace {

using nlohmann::json;

void write_file(const std::filesystem::path& path, const void* data, size_t bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("write failed: " + path.string());
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<size_t>(n));
    f.read(buf.data(), n);
    if (!f) throw IoError("read failed: " + path.string());
    return buf;
}

json pose_to_json(const Pose& p) {
    std::vector<double> r(9), t(3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[static_cast<size_t>(i * 3 + j)] = p.rotation(i, j);
    for (int i = 0; i < 3; ++i) t[static_cast<size_t>(i)] = p.translation[i];
    return json{{"rotation", r}, {"translation", t}};
}

Pose pose_from_json(const json& j) {
    Pose p;
    auto r = j.at("rotation").get<std::vector<double>>();
    auto t = j.at("translation").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw IoError("malformed pose in meta.json");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) p.rotation(i, k) = r[static_cast<size_t>(i * 3 + k)];
    for (int i = 0; i < 3; ++i) p.translation[i] = t[static_cast<size_t>(i)];
    return p;
}

void save_f32(const core::Tensor<float>& t, const std::filesystem::path& path) {
    write_file(path, t.v.data(), t.v.size() * sizeof(float));
}

std::vector<float> load_f32(const std::filesystem::path& path) {
    auto buf = read_file(path);
    if (buf.size() % sizeof(float) != 0) throw IoError("truncated f32 file: " + path.string());
    std::vector<float> out(buf.size() / sizeof(float));
    std::memcpy(out.data(), buf.data(), buf.size());
    return out;
}

}  // namespace

void write_ppm(const Image& image, const std::filesystem::path& path) {
    if (image.ndim() != 3 || image.shape[2] != 3) throw ValidationError("write_ppm: [H,W,3] expected");
    int64_t h = image.shape[0], w = image.shape[1];
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                float v = image.at3(y, x, c);
                v = std::min(std::max(v, 0.0f), 1.0f);
                row[static_cast<size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("write failed: " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w < 1 || h < 1)
        throw IoError("unsupported PPM: " + path.string());
    f.get();  // single whitespace after header
    Image img({h, w, 3});
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw IoError("truncated PPM: " + path.string());
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at3(y, x, c) = static_cast<float>(row[static_cast<size_t>(x * 3 + c)]) / 255.0f;
    }
    return img;
}

void save_scene_pair(const ScenePair& pair, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());

    json meta;
    meta["seed"] = pair.seed;
    meta["intrinsics"] = {{"fx", pair.intrinsics.fx}, {"fy", pair.intrinsics.fy},
                          {"cx", pair.intrinsics.cx}, {"cy", pair.intrinsics.cy},
                          {"width", pair.intrinsics.width}, {"height", pair.intrinsics.height}};
    meta["pose_i"] = pose_to_json(pair.pose_i);
    meta["pose_j"] = pose_to_json(pair.pose_j);
    meta["n_correspondences"] = pair.correspondences.size();
    {
        std::ofstream f(dir / "meta.json");
        if (!f) throw IoError("cannot open for writing: " + (dir / "meta.json").string());
        f << meta.dump(2) << "\n";
    }

    write_ppm(pair.image_i, dir / "image_i.ppm");
    write_ppm(pair.image_j, dir / "image_j.ppm");
    save_f32(pair.gt_pointmap_ii, dir / "pointmap_ii.f32");
    save_f32(pair.gt_pointmap_ji, dir / "pointmap_ji.f32");
    write_file(dir / "mask_i.u8", pair.valid_i.v.data(), pair.valid_i.v.size());
    write_file(dir / "mask_j.u8", pair.valid_j.v.data(), pair.valid_j.v.size());

    std::vector<float> corr(pair.correspondences.size() * 4);
    for (size_t k = 0; k < pair.correspondences.size(); ++k) {
        corr[k * 4 + 0] = static_cast<float>(pair.correspondences[k].xi);
        corr[k * 4 + 1] = static_cast<float>(pair.correspondences[k].yi);
        corr[k * 4 + 2] = static_cast<float>(pair.correspondences[k].xj);
        corr[k * 4 + 3] = static_cast<float>(pair.correspondences[k].yj);
    }
    write_file(dir / "corr.f32", corr.data(), corr.size() * sizeof(float));
}

ScenePair load_scene_pair(const std::filesystem::path& dir) {
    json meta;
    {
        std::ifstream f(dir / "meta.json");
        if (!f) throw IoError("cannot open: " + (dir / "meta.json").string());
        f >> meta;
    }
    ScenePair pair;
    pair.seed = meta.at("seed").get<uint64_t>();
    const auto& ji = meta.at("intrinsics");
    pair.intrinsics = {ji.at("fx").get<double>(),  ji.at("fy").get<double>(),
                       ji.at("cx").get<double>(),  ji.at("cy").get<double>(),
                       ji.at("width").get<int>(),  ji.at("height").get<int>()};
    pair.pose_i = pose_from_json(meta.at("pose_i"));
    pair.pose_j = pose_from_json(meta.at("pose_j"));

    pair.image_i = read_ppm(dir / "image_i.ppm");
    pair.image_j = read_ppm(dir / "image_j.ppm");
    int64_t h = pair.intrinsics.height, w = pair.intrinsics.width;

    pair.gt_pointmap_ii = PointMap({h, w, 3}, load_f32(dir / "pointmap_ii.f32"));
    pair.gt_pointmap_ji = PointMap({h, w, 3}, load_f32(dir / "pointmap_ji.f32"));

    auto mi = read_file(dir / "mask_i.u8");
    auto mj = read_file(dir / "mask_j.u8");
    if (static_cast<int64_t>(mi.size()) != h * w || static_cast<int64_t>(mj.size()) != h * w)
        throw IoError("mask size mismatch in " + dir.string());
    pair.valid_i = Mask({h, w}, std::vector<uint8_t>(mi.begin(), mi.end()));
    pair.valid_j = Mask({h, w}, std::vector<uint8_t>(mj.begin(), mj.end()));

    auto corr = load_f32(dir / "corr.f32");
    if (corr.size() % 4 != 0) throw IoError("corr.f32 size not divisible by 4");
    pair.correspondences.resize(corr.size() / 4);
    for (size_t k = 0; k < pair.correspondences.size(); ++k)
        pair.correspondences[k] = {corr[k * 4 + 0], corr[k * 4 + 1], corr[k * 4 + 2],
                                   corr[k * 4 + 3]};
    return pair;
}

}  // namespace uniugg::geometry
