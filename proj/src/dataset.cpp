#include "jumpcut/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace jcut {

std::string keypoints_to_provider_json(const KeypointSet& kps, const LandmarkSet& lms, int width,
                                       int height) {
    json j;
    j["width"] = width;
    j["height"] = height;
    j["parts"] = kps.parts;
    j["n"] = kps.n;
    json slots = json::array();
    for (int i = 0; i < kps.num_slots(); ++i) {
        const Slot& s = kps.slots[i];
        if (!s.visible) continue;
        slots.push_back({{"p", kps.slot_part(i)},
                         {"a", kps.slot_cell_a(i)},
                         {"b", kps.slot_cell_b(i)},
                         {"x", s.x},
                         {"y", s.y},
                         {"u", s.u},
                         {"v", s.v}});
    }
    j["slots"] = std::move(slots);
    json lm = json::array();
    for (const auto& p : lms.points) lm.push_back({p.x, p.y, p.visible ? 1 : 0});
    j["landmarks"] = std::move(lm);
    return j.dump();
}

namespace {

[[noreturn]] void reject(const std::string& file, const std::string& field,
                         const std::string& why) {
    throw InvalidInput(file + ": " + field + " " + why);
}

double get_num(const json& j, const std::string& file, const std::string& field) {
    if (!j.contains(field) || !j[field].is_number()) reject(file, field, "missing or not a number");
    return j[field].get<double>();
}

}  // namespace

void parse_provider_json(const std::string& text, const std::string& file, KeypointSet& kps,
                         LandmarkSet& lms, int& width, int& height, int& n_cells,
                         std::string* dense_ref) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(file + ": invalid JSON (" + e.what() + ")");
    }
    width = static_cast<int>(get_num(j, file, "width"));
    height = static_cast<int>(get_num(j, file, "height"));
    const int parts = static_cast<int>(get_num(j, file, "parts"));
    n_cells = static_cast<int>(get_num(j, file, "n"));
    if (parts != kParts) reject(file, "parts", "must be " + std::to_string(kParts));
    if (n_cells < 1) reject(file, "n", "must be >= 1");
    if (width < 1 || height < 1) reject(file, "width/height", "must be positive");

    kps = KeypointSet(n_cells);
    if (dense_ref) dense_ref->clear();
    if (j.contains("dense") && dense_ref) *dense_ref = j["dense"].get<std::string>();

    if (j.contains("slots")) {
        if (!j["slots"].is_array()) reject(file, "slots", "must be an array");
        int si = 0;
        for (const auto& s : j["slots"]) {
            const std::string label = "slots[" + std::to_string(si++) + "]";
            const int p = static_cast<int>(get_num(s, file, "p"));
            const int a = static_cast<int>(get_num(s, file, "a"));
            const int b = static_cast<int>(get_num(s, file, "b"));
            if (p < 1 || p > kParts) reject(file, label + ".p", "outside 1.." + std::to_string(kParts));
            if (a < 0 || a >= n_cells) reject(file, label + ".a", "outside 0..n-1");
            if (b < 0 || b >= n_cells) reject(file, label + ".b", "outside 0..n-1");
            const double x = get_num(s, file, "x"), y = get_num(s, file, "y");
            const double u = get_num(s, file, "u"), v = get_num(s, file, "v");
            if (u < 0 || u > 1) reject(file, label + ".u", "= " + std::to_string(u) + " outside [0,1]");
            if (v < 0 || v > 1) reject(file, label + ".v", "= " + std::to_string(v) + " outside [0,1]");
            if (x < 0 || x >= width) reject(file, label + ".x", "outside image bounds");
            if (y < 0 || y >= height) reject(file, label + ".y", "outside image bounds");
            Slot& sl = kps.slots[kps.slot_index(p, a, b)];
            sl.visible = true;
            sl.x = static_cast<float>(x);
            sl.y = static_cast<float>(y);
            sl.u = static_cast<float>(u);
            sl.v = static_cast<float>(v);
        }
    }

    lms = LandmarkSet{};
    if (!j.contains("landmarks") || !j["landmarks"].is_array() ||
        j["landmarks"].size() != kLandmarkCount)
        reject(file, "landmarks", "must be an array of 68 entries");
    for (int i = 0; i < kLandmarkCount; ++i) {
        const auto& e = j["landmarks"][i];
        if (!e.is_array() || e.size() != 3)
            reject(file, "landmarks[" + std::to_string(i) + "]", "must be [x,y,visible]");
        Landmark& p = lms.points[i];
        p.x = e[0].get<float>();
        p.y = e[1].get<float>();
        p.visible = e[2].get<double>() != 0;
        if (p.visible && (p.x < 0 || p.x >= width || p.y < 0 || p.y >= height))
            reject(file, "landmarks[" + std::to_string(i) + "]", "visible point outside bounds");
    }
}

DensePoseMap read_dense_sidecar(const std::string& header_path) {
    json h;
    try {
        h = json::parse(read_text_file(header_path));
    } catch (const json::exception& e) {
        throw InvalidInput(header_path + ": invalid JSON (" + e.what() + ")");
    }
    if (!h.contains("dtype") || h["dtype"] != "f32le")
        reject(header_path, "dtype", "must be \"f32le\"");
    if (!h.contains("shape") || !h["shape"].is_array() || h["shape"].size() != 3 ||
        h["shape"][2].get<int>() != 3)
        reject(header_path, "shape", "must be [H,W,3]");
    const int H = h["shape"][0].get<int>(), W = h["shape"][1].get<int>();
    std::string data_path = header_path;
    const auto pos = data_path.rfind(".json");
    if (pos != std::string::npos) data_path = data_path.substr(0, pos);
    data_path += ".f32le";
    auto raw = read_f32le_file(data_path);
    if (raw.size() != static_cast<size_t>(H) * W * 3)
        reject(data_path, "payload", "size does not match header shape");
    DensePoseMap dp;
    dp.width = W;
    dp.height = H;
    dp.part.resize(static_cast<size_t>(W) * H);
    dp.u.resize(dp.part.size());
    dp.v.resize(dp.part.size());
    for (size_t i = 0; i < dp.part.size(); ++i) {
        const float pf = raw[i * 3];
        const int p = static_cast<int>(std::lround(pf));
        if (p < 0 || p > kParts)
            reject(data_path, "pixel " + std::to_string(i) + " part", "outside 0..14");
        dp.part[i] = p;
        dp.u[i] = raw[i * 3 + 1];
        dp.v[i] = raw[i * 3 + 2];
        if (p > 0 && (dp.u[i] < 0 || dp.u[i] > 1 || dp.v[i] < 0 || dp.v[i] > 1))
            reject(data_path, "pixel " + std::to_string(i) + " uv", "outside [0,1]");
    }
    return dp;
}

std::string generate_clip(const PuppetSpec& spec, const MotionScript& script,
                          const std::string& out_dir, int n_cells) {
    if (script.poses.empty()) throw InvalidInput("generate_clip: empty motion script");
    fs::create_directories(fs::path(out_dir) / "frames");
    fs::create_directories(fs::path(out_dir) / "keypoints");

    json manifest;
    manifest["name"] = script.name;
    manifest["fps"] = script.fps;
    manifest["width"] = spec.canvas;
    manifest["height"] = spec.canvas;
    manifest["n"] = n_cells;
    manifest["frame_count"] = script.poses.size();
    json frames = json::array();
    json checksums = json::object();

    char buf[32];
    for (size_t t = 0; t < script.poses.size(); ++t) {
        const auto& pose = script.poses[t];
        auto r = render_puppet(spec, pose);
        auto kps = quantize_densepose(r.dpose, n_cells);

        std::snprintf(buf, sizeof(buf), "frame_%05zu", t);
        const std::string img_rel = std::string("frames/") + buf + ".png";
        const std::string kp_rel = std::string("keypoints/") + buf + ".json";
        const std::string img_path = (fs::path(out_dir) / img_rel).string();
        const std::string kp_path = (fs::path(out_dir) / kp_rel).string();

        write_png(img_path, r.image);
        write_text_file(kp_path,
                        keypoints_to_provider_json(kps, r.landmarks, spec.canvas, spec.canvas));

        frames.push_back({{"image", img_rel},
                          {"keypoints", kp_rel},
                          {"yaw", pose.yaw},
                          {"tx", pose.tx},
                          {"ty", pose.ty}});
        std::snprintf(buf, sizeof(buf), "%08x", crc32_file(img_path));
        checksums[img_rel] = buf;
        std::snprintf(buf, sizeof(buf), "%08x", crc32_file(kp_path));
        checksums[kp_rel] = buf;
    }
    manifest["frames"] = std::move(frames);
    manifest["checksums"] = std::move(checksums);

    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    write_text_file(manifest_path, manifest.dump(2));
    return manifest_path;
}

namespace {

VideoClip load_clip(const std::string& dir, int target_res, int& n_cells_out) {
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw InvalidInput(manifest_path + ": invalid JSON (" + e.what() + ")");
    }
    VideoClip clip;
    clip.dir = dir;
    clip.name = manifest.value("name", fs::path(dir).filename().string());
    if (!manifest.contains("frames") || !manifest["frames"].is_array() ||
        manifest["frames"].empty())
        reject(manifest_path, "frames", "missing or empty");

    int idx = 0;
    for (const auto& f : manifest["frames"]) {
        if (!f.is_object() || !f.contains("image"))
            reject(manifest_path, "frames[" + std::to_string(idx) + "]", "missing image field");
        FrameRecord fr;
        fr.index = idx++;
        fr.image_path = (fs::path(dir) / f["image"].get<std::string>()).string();
        if (!fs::exists(fr.image_path)) reject(manifest_path, f["image"].get<std::string>(), "file missing");
        // frames without a keypoint file (e.g. detector failures on real
        // footage) stay usable as plain images
        if (!f.contains("keypoints") || f["keypoints"].is_null()) {
            Image probe = read_png(fr.image_path);
            fr.src_width = probe.width;
            fr.src_height = probe.height;
            clip.frames.push_back(std::move(fr));
            continue;
        }
        fr.has_kps = true;
        const std::string kp_path = (fs::path(dir) / f["keypoints"].get<std::string>()).string();
        int w = 0, h = 0, n = 0;
        std::string dense_ref;
        parse_provider_json(read_text_file(kp_path), kp_path, fr.kps, fr.lms, w, h, n, &dense_ref);
        if (!dense_ref.empty()) {
            auto dp = read_dense_sidecar((fs::path(dir) / dense_ref).string());
            if (dp.width != w || dp.height != h)
                reject(kp_path, "dense", "sidecar shape disagrees with width/height");
            fr.kps = quantize_densepose(dp, n);
        }
        if (n_cells_out == 0) n_cells_out = n;
        if (n != n_cells_out) reject(kp_path, "n", "inconsistent across dataset");
        fr.src_width = w;
        fr.src_height = h;
        if (w != target_res || h != target_res) {
            const float sx = static_cast<float>(target_res) / w;
            const float sy = static_cast<float>(target_res) / h;
            for (auto& s : fr.kps.slots) {
                if (!s.visible) continue;
                s.x *= sx;
                s.y *= sy;
            }
            for (auto& p : fr.lms.points) {
                if (!p.visible) continue;
                p.x *= sx;
                p.y *= sy;
            }
        }
        if (f.contains("yaw")) {
            fr.has_pose = true;
            fr.yaw = f["yaw"].get<double>();
            fr.tx = f.value("tx", 0.0);
            fr.ty = f.value("ty", 0.0);
        }
        clip.frames.push_back(std::move(fr));
    }
    return clip;
}

}  // namespace

Dataset import_provider(const std::string& dir, int target_res) {
    if (!fs::is_directory(dir)) throw IoError("import_provider: not a directory: " + dir);
    Dataset ds;
    ds.width = ds.height = target_res;
    int n_cells = 0;
    if (fs::exists(fs::path(dir) / "manifest.json")) {
        ds.videos.push_back(load_clip(dir, target_res, n_cells));
    } else {
        std::vector<std::string> subdirs;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_directory() && fs::exists(e.path() / "manifest.json"))
                subdirs.push_back(e.path().string());
        std::sort(subdirs.begin(), subdirs.end());
        for (const auto& sd : subdirs) ds.videos.push_back(load_clip(sd, target_res, n_cells));
    }
    if (ds.videos.empty())
        throw InvalidInput("import_provider: no clips with manifest.json under " + dir);
    ds.n = n_cells;
    return ds;
}

void mark_validation(Dataset& ds, int stride) {
    if (stride < 2) throw DomainError("mark_validation: stride must be >= 2");
    for (auto& v : ds.videos)
        for (auto& f : v.frames) f.validation = (f.index % stride) == stride / 2;
}

Image load_frame_image(const Dataset& ds, const FrameRecord& fr) {
    Image img = read_png(fr.image_path);
    if (img.width != ds.width || img.height != ds.height)
        img = resize_image(img, ds.width, ds.height);
    return img;
}

}  // namespace jcut
