#include "jumpcut/checkpoint.hpp"

#include <filesystem>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace jcut {

namespace {

json warp_config_to_json(const warp::WarpNetConfig& c) {
    return json{{"query_channels", c.query_channels}, {"key_channels", c.key_channels},
                {"value_channels", c.value_channels}, {"w1", c.w1},
                {"w2", c.w2},                         {"w3", c.w3},
                {"d_k", c.d_k},                       {"d_v", c.d_v}};
}

warp::WarpNetConfig warp_config_from_json(const json& j) {
    warp::WarpNetConfig c;
    c.query_channels = j.at("query_channels").get<int>();
    c.key_channels = j.at("key_channels").get<int>();
    c.value_channels = j.at("value_channels").get<int>();
    c.w1 = j.at("w1").get<int>();
    c.w2 = j.at("w2").get<int>();
    c.w3 = j.at("w3").get<int>();
    c.d_k = j.at("d_k").get<int>();
    c.d_v = j.at("d_v").get<int>();
    return c;
}

json synth_config_to_json(const synth::SynthConfig& c) {
    return json{{"feature_channels", c.feature_channels},
                {"trunk", c.trunk},
                {"up1", c.up1},
                {"up2", c.up2},
                {"latent_dim", c.latent_dim},
                {"latent_hidden", c.latent_hidden},
                {"style_dim", c.style_dim},
                {"disc_width", c.disc_width}};
}

synth::SynthConfig synth_config_from_json(const json& j) {
    synth::SynthConfig c;
    c.feature_channels = j.at("feature_channels").get<int>();
    c.trunk = j.at("trunk").get<int>();
    c.up1 = j.at("up1").get<int>();
    c.up2 = j.at("up2").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.latent_hidden = j.at("latent_hidden").get<int>();
    c.style_dim = j.at("style_dim").get<int>();
    c.disc_width = j.at("disc_width").get<int>();
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"lr", c.lr},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"batch", c.batch},
                {"r1_gamma", c.r1_gamma},
                {"l1_weight", c.l1_weight},
                {"stage1_steps", c.stage1_steps},
                {"stage2_steps", c.stage2_steps},
                {"checkpoint_every", c.checkpoint_every},
                {"val_batch", c.val_batch},
                {"val_stride", c.val_stride},
                {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.batch = j.at("batch").get<int>();
    c.r1_gamma = j.at("r1_gamma").get<double>();
    c.l1_weight = j.at("l1_weight").get<double>();
    c.stage1_steps = j.at("stage1_steps").get<int>();
    c.stage2_steps = j.at("stage2_steps").get<int>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.val_batch = j.at("val_batch").get<int>();
    c.val_stride = j.at("val_stride").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

json model_config_to_json(const ModelConfig& c) {
    return json{{"res", c.res},
                {"cells", c.cells},
                {"heatmap_sigma", c.heatmap_sigma},
                {"warp", warp_config_to_json(c.warp)},
                {"synth", synth_config_to_json(c.synth)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.res = j.at("res").get<int>();
    c.cells = j.at("cells").get<int>();
    c.heatmap_sigma = j.at("heatmap_sigma").get<double>();
    c.warp = warp_config_from_json(j.at("warp"));
    c.synth = synth_config_from_json(j.at("synth"));
    return c;
}

void write_param_file(const fs::path& path, const TensorT<float>& t, json& manifest_files) {
    write_f32le_file(path.string(), t.ptr(), static_cast<size_t>(t.numel()));
    char hex[16];
    std::snprintf(hex, sizeof hex, "%08x", crc32_file(path.string()));
    manifest_files.push_back(
        json{{"path", path.filename().string()}, {"shape", t.shape}, {"crc32", hex}});
}

TensorT<float> read_param_file(const fs::path& path, const std::vector<int64_t>& shape) {
    auto data = read_f32le_file(path.string());
    TensorT<float> t(shape);
    if (static_cast<int64_t>(data.size()) != t.numel())
        throw InvalidInput("checkpoint: " + path.string() + " holds " +
                           std::to_string(data.size()) + " floats, expected " +
                           std::to_string(t.numel()));
    t.data = std::move(data);
    return t;
}

void verify_manifest(const fs::path& dir, const json& manifest, const std::string& subdir) {
    for (const auto& entry : manifest.at(subdir)) {
        const fs::path p = dir / subdir / entry.at("path").get<std::string>();
        if (!fs::exists(p)) throw InvalidInput("checkpoint: missing file " + p.string());
        char hex[16];
        std::snprintf(hex, sizeof hex, "%08x", crc32_file(p.string()));
        if (entry.at("crc32").get<std::string>() != hex)
            throw InvalidInput("checkpoint: checksum mismatch for " + p.string());
    }
}

// writes moments in parameter-store order so reruns emit identical manifests
void save_moments(const fs::path& opt_dir, const AdamMoments& opt,
                  const std::vector<std::string>& names, json& files) {
    for (const auto& pname : names) {
        auto it = opt.m.find(pname);
        if (it == opt.m.end()) continue;
        write_param_file(opt_dir / (pname + ".m.f32le"), it->second, files);
        write_param_file(opt_dir / (pname + ".v.f32le"), opt.v.at(pname), files);
    }
}

}  // namespace

std::string model_config_json(const ModelConfig& mc, const TrainConfig& tc, int64_t step,
                              int stage, uint64_t param_seed) {
    json j{{"model", model_config_to_json(mc)},
           {"train", train_config_to_json(tc)},
           {"step", step},
           {"stage", stage},
           {"param_seed", param_seed}};
    return j.dump(2) + "\n";
}

void save_checkpoint(const std::string& dir, const ModelBundle& bundle,
                     const TrainingState* training_state) {
    const fs::path root(dir);
    fs::create_directories(root / "params");
    write_text_file((root / "config.json").string(),
                    model_config_json(bundle.config, bundle.train, bundle.step, bundle.stage,
                                      bundle.param_seed));

    json manifest;
    manifest["params"] = json::array();
    for (const auto& name : bundle.params.names())
        write_param_file(root / "params" / (name + ".f32le"), bundle.params.at(name)->value,
                         manifest["params"]);

    manifest["opt"] = json::array();
    if (training_state) {
        fs::create_directories(root / "opt");
        save_moments(root / "opt", training_state->gen_opt, bundle.params.names(), manifest["opt"]);
        save_moments(root / "opt", training_state->disc_opt, bundle.params.names(),
                     manifest["opt"]);
        manifest["adam_gen_t"] = training_state->gen_opt.t;
        manifest["adam_disc_t"] = training_state->disc_opt.t;
    }
    write_text_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    const fs::path root(dir);
    json cfg, manifest;
    try {
        cfg = json::parse(read_text_file((root / "config.json").string()));
        manifest = json::parse(read_text_file((root / "manifest.json").string()));
    } catch (const json::exception& e) {
        throw InvalidInput("checkpoint: bad JSON in " + dir + ": " + e.what());
    }

    verify_manifest(root, manifest, "params");
    verify_manifest(root, manifest, "opt");

    LoadedCheckpoint out{ModelBundle(model_config_from_json(cfg.at("model")),
                                     train_config_from_json(cfg.at("train")),
                                     cfg.at("param_seed").get<uint64_t>()),
                         std::nullopt};
    out.bundle.step = cfg.at("step").get<int64_t>();
    out.bundle.stage = cfg.at("stage").get<int>();

    for (const auto& name : out.bundle.params.names()) {
        auto param = out.bundle.params.at(name);
        param->value =
            read_param_file(root / "params" / (name + ".f32le"), param->value.shape);
    }

    if (!manifest.at("opt").empty()) {
        TrainingState ts;
        ts.gen_opt.t = manifest.at("adam_gen_t").get<int64_t>();
        ts.disc_opt.t = manifest.at("adam_disc_t").get<int64_t>();
        for (const auto& name : out.bundle.params.names()) {
            const fs::path m = root / "opt" / (name + ".m.f32le");
            if (!fs::exists(m)) continue;
            auto& opt = name.rfind("disc.", 0) == 0 ? ts.disc_opt : ts.gen_opt;
            const auto& shape = out.bundle.params.at(name)->value.shape;
            opt.m.emplace(name, read_param_file(m, shape));
            opt.v.emplace(name, read_param_file(root / "opt" / (name + ".v.f32le"), shape));
        }
        out.training_state = std::move(ts);
    }
    return out;
}

}  // namespace jcut
