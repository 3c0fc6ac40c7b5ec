#include "egogan/config.hpp"

#include <fstream>

#include "egogan/hash.hpp"

namespace egogan {

using nlohmann::json;

namespace {

json desk_preset() {
    return json{
        {"preset", "desk"},
        {"seed", 1},
        {"model",
         {{"frames", 8},
          {"height", 64},
          {"width", 64},
          {"channel_width", 0.0625},
          {"lambda_l1", 100.0},
          {"variant", "EGOGAN"},
          {"discriminator_adapt", true},
          {"pixelgan_adv_weight", 1.0}}},
        {"train",
         {{"epochs", 30},
          {"batch_size", 8},
          {"lr_seg", 0.1},
          {"lr_gan", 0.01},
          {"momentum", 0.9},
          {"weight_decay", 1e-4},
          {"beta1", 0.5},
          {"beta2", 0.999},
          {"checkpoint_every", 10}}},
        {"data",
         {{"manifest", "dataset/manifest.json"},
          {"augment", {{"enabled", true}, {"flip", true}, {"max_rot_deg", 8.0}, {"jitter", 0.1}}}}},
        {"synth",
         {{"root", "dataset"},
          {"n_train", 500},
          {"n_val", 100},
          {"size", 64},
          {"deltas", {1, 6, 12}},
          {"fps", 24.0},
          {"flow_scale", 5.0},
          {"correlation", 0.8},
          {"cam_speed", 2.6},
          {"cam_drift", 0.7},
          {"cam_period_min", 36.0},
          {"cam_period_max", 72.0},
          {"hand_lag", 6},
          {"hand_coupling", 1.2},
          {"wobble_amp", 3.0},
          {"short_history_prob", 0.08}}},
        {"metrics", {{"threshold", 0.5}}},
    };
}

// full paper widths and schedule; forward shapes only, not desk-trainable
json paper_shape_preset() {
    json j = desk_preset();
    j["preset"] = "paper-shape";
    j["model"]["height"] = 224;
    j["model"]["width"] = 224;
    j["model"]["channel_width"] = 1.0;
    j["train"]["epochs"] = 70;
    j["train"]["batch_size"] = 16;
    j["synth"]["size"] = 224;
    j["synth"]["deltas"] = {1, 15, 30};
    j["synth"]["flow_scale"] = 20.0;
    return j;
}

json parse_value(const std::string& value) {
    try {
        return json::parse(value);
    } catch (const json::exception&) {
        return json(value); // plain string
    }
}

} // namespace

RunConfig RunConfig::preset(const std::string& name) {
    if (name == "desk") return {desk_preset()};
    if (name == "paper-shape") return {paper_shape_preset()};
    throw ConfigError("unknown preset '" + name + "' (available: desk, paper-shape)");
}

RunConfig RunConfig::load(const std::string& source) {
    if (source == "desk" || source == "paper-shape") return preset(source);
    std::ifstream f(source);
    if (!f) throw ConfigError("config: cannot open '" + source + "' (not a file or preset name)");
    RunConfig cfg = preset("desk"); // file values override the desk defaults
    json user;
    try {
        f >> user;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON in " + source + ": " + e.what());
    }
    cfg.j.merge_patch(user);
    return cfg;
}

void RunConfig::set_override(const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) throw ConfigError("config: empty override key");
    json* node = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = dotted_key.find('.', start);
        const std::string key = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("config: malformed override key '" + dotted_key + "'");
        if (dot == std::string::npos) {
            (*node)[key] = parse_value(value);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

void RunConfig::set_seed(u64 seed) { j["seed"] = seed; }

u64 RunConfig::seed() const { return j.value("seed", 1ULL); }

ModelConfig RunConfig::model_config() const {
    const json& m = j.at("model");
    ModelConfig cfg;
    cfg.frames = m.value("frames", 8);
    cfg.height = m.value("height", 64);
    cfg.width = m.value("width", 64);
    cfg.channel_width = m.value("channel_width", 1.0);
    cfg.lambda_l1 = m.value("lambda_l1", 1.0);
    cfg.variant = variant_from_name(m.value("variant", "EGOGAN"));
    cfg.discriminator_adapt = m.value("discriminator_adapt", true);
    cfg.pixelgan_adv_weight = m.value("pixelgan_adv_weight", 1.0);
    cfg.validate();
    return cfg;
}

TrainHp RunConfig::train_hp() const {
    const json& t = j.at("train");
    TrainHp hp;
    hp.epochs = t.value("epochs", 30);
    hp.batch_size = t.value("batch_size", 8);
    hp.lr_seg = t.value("lr_seg", 0.1);
    hp.lr_gan = t.value("lr_gan", 0.01);
    hp.momentum = t.value("momentum", 0.9);
    hp.weight_decay = t.value("weight_decay", 1e-4);
    hp.beta1 = t.value("beta1", 0.5);
    hp.beta2 = t.value("beta2", 0.999);
    if (hp.epochs < 1 || hp.batch_size < 1) throw ConfigError("config: epochs and batch_size must be positive");
    return hp;
}

SynthConfig RunConfig::synth_config() const {
    const json& s = j.at("synth");
    SynthConfig cfg;
    cfg.n_train = s.value("n_train", 500);
    cfg.n_val = s.value("n_val", 100);
    cfg.size = s.value("size", 64);
    auto deltas = s.value("deltas", std::vector<int>{1, 6, 12});
    if (deltas.size() != 3) throw ConfigError("config: synth.deltas must have 3 entries");
    cfg.deltas = {deltas[0], deltas[1], deltas[2]};
    cfg.fps = s.value("fps", 24.0);
    cfg.flow_scale = s.value("flow_scale", 5.0f);
    cfg.correlation = s.value("correlation", 0.8);
    cfg.cam_speed = s.value("cam_speed", 2.6);
    cfg.cam_drift = s.value("cam_drift", 0.7);
    cfg.cam_period_min = s.value("cam_period_min", 36.0);
    cfg.cam_period_max = s.value("cam_period_max", 72.0);
    cfg.hand_lag = s.value("hand_lag", 6);
    cfg.hand_coupling = s.value("hand_coupling", 1.2);
    cfg.wobble_amp = s.value("wobble_amp", 3.0);
    cfg.short_history_prob = s.value("short_history_prob", 0.08);
    cfg.validate();
    return cfg;
}

AugmentConfig RunConfig::augment_config() const {
    AugmentConfig cfg;
    if (!j.contains("data") || !j["data"].contains("augment")) return cfg;
    const json& a = j["data"]["augment"];
    cfg.enabled = a.value("enabled", true);
    cfg.flip = a.value("flip", true);
    cfg.max_rot_deg = a.value("max_rot_deg", 8.0);
    cfg.jitter = a.value("jitter", 0.1);
    return cfg;
}

double RunConfig::metrics_threshold() const {
    if (!j.contains("metrics")) return 0.5;
    return j["metrics"].value("threshold", 0.5);
}

std::string RunConfig::default_manifest() const {
    if (!j.contains("data")) return "dataset/manifest.json";
    return j["data"].value("manifest", std::string("dataset/manifest.json"));
}

i64 RunConfig::checkpoint_every() const {
    if (!j.contains("train")) return 10;
    return j["train"].value("checkpoint_every", 10);
}

nlohmann::json RunConfig::provenance(const std::string& tool) const {
    nlohmann::json p;
    p["tool"] = tool;
    p["seed"] = seed();
    p["config"] = j;
    p["content_hash"] = sha1_hex(j.dump());
    return p;
}

} // namespace egogan
