#include "egogan/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "egogan/hash.hpp"

namespace egogan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// value noise on a hashed lattice, smoothstep-interpolated
double lattice(u64 seed, i64 xi, i64 yi, int octave) {
    u64 h = hash_combine(seed, static_cast<u64>(octave) * 0x9E3779B97F4A7C15ULL);
    h = hash_combine(h, static_cast<u64>(xi) * 0xC2B2AE3D27D4EB4FULL);
    h = hash_combine(h, static_cast<u64>(yi) * 0x165667B19E3779F9ULL);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double noise2(u64 seed, double x, double y, int octave) {
    const double fx = std::floor(x), fy = std::floor(y);
    const i64 xi = static_cast<i64>(fx), yi = static_cast<i64>(fy);
    const double tx = smooth(x - fx), ty = smooth(y - fy);
    const double v00 = lattice(seed, xi, yi, octave);
    const double v10 = lattice(seed, xi + 1, yi, octave);
    const double v01 = lattice(seed, xi, yi + 1, octave);
    const double v11 = lattice(seed, xi + 1, yi + 1, octave);
    return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

double tex_lum(u64 seed, double x, double y) {
    // coarse octaves keep large structure trackable across stride-8 frames;
    // fine ones add detail without aliasing the motion
    static constexpr double lambda[4] = {96.0, 48.0, 16.0, 6.0};
    static constexpr double weight[4] = {0.35, 0.30, 0.20, 0.15};
    double lum = 0;
    for (int o = 0; o < 4; ++o) lum += weight[o] * noise2(seed, x / lambda[o], y / lambda[o], o);
    return lum;
}

double eval_sinusoids(const std::vector<SceneParams::Sinusoid>& ss, double f) {
    double v = 0;
    for (const auto& s : ss) v += s.amp * std::sin(kTau * f / s.period + s.phase);
    return v;
}

struct HandPose {
    double cx, cy, rx, ry, cos_t, sin_t;

    // normalized elliptical radius of an image point
    double dist(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double ex = (dx * cos_t + dy * sin_t) / rx;
        const double ey = (-dx * sin_t + dy * cos_t) / ry;
        return std::sqrt(ex * ex + ey * ey);
    }
};

HandPose hand_pose(const SceneParams& sp, int hand, double f, int size) {
    auto c = hand_center(sp, hand, f, size);
    const auto& h = sp.hands[static_cast<size_t>(hand)];
    return {c[0], c[1], h.rx, h.ry, std::cos(h.tilt), std::sin(h.tilt)};
}

} // namespace

SceneParams make_scene(u64 dataset_seed, int video_index, const SynthConfig& cfg) {
    Rng rng = Rng::stream(dataset_seed, 0x5CE00 + static_cast<u64>(video_index));
    SceneParams sp;
    sp.correlation = cfg.correlation;
    sp.coupling = cfg.hand_coupling;
    sp.lag = cfg.hand_lag;
    sp.tex_seed = rng.next_u64();
    for (int axis = 0; axis < 2; ++axis) {
        for (int i = 0; i < 2; ++i) {
            const double period = rng.uniform(cfg.cam_period_min, cfg.cam_period_max);
            const double vel = rng.uniform(0.3, 0.7) * cfg.cam_speed * 0.5;
            sp.cam[axis].push_back({vel * period / kTau, period, rng.uniform(0.0, kTau)});
        }
    }
    // reaching scenes drift down-forward on average; the bias is part of
    // what makes future motion worth predicting
    sp.drift[0] = rng.uniform(-0.8, 0.8) * cfg.cam_drift;
    sp.drift[1] = rng.uniform(0.2, 1.2) * cfg.cam_drift;
    const double s = cfg.size;
    for (int h = 0; h < 2; ++h) {
        auto& hand = sp.hands[static_cast<size_t>(h)];
        hand.anchor_x = (h == 0 ? rng.uniform(0.24, 0.36) : rng.uniform(0.64, 0.76)) * s;
        hand.anchor_y = rng.uniform(0.60, 0.74) * s;
        hand.rx = rng.uniform(0.10, 0.135) * s;
        hand.ry = rng.uniform(0.125, 0.17) * s;
        hand.tilt = rng.uniform(-0.5, 0.5) + (h == 0 ? 0.35 : -0.35);
        for (int axis = 0; axis < 2; ++axis)
            for (int i = 0; i < 2; ++i) {
                const double period = rng.uniform(30.0, 90.0);
                hand.wobble[axis].push_back(
                    {rng.uniform(0.35, 0.65) * cfg.wobble_amp, period, rng.uniform(0.0, kTau)});
            }
    }
    sp.base_color = {static_cast<float>(rng.uniform(0.35, 0.65)), static_cast<float>(rng.uniform(0.35, 0.65)),
                     static_cast<float>(rng.uniform(0.35, 0.65))};
    sp.contrast = static_cast<float>(rng.uniform(0.5, 0.9));
    return sp;
}

std::array<double, 2> camera_pos(const SceneParams& sp, double f) {
    return {eval_sinusoids(sp.cam[0], f) + sp.drift[0] * f, eval_sinusoids(sp.cam[1], f) + sp.drift[1] * f};
}

std::array<double, 2> hand_center(const SceneParams& sp, int hand, double f, int size) {
    const auto& h = sp.hands[static_cast<size_t>(hand)];
    const auto now = camera_pos(sp, f);
    const auto before = camera_pos(sp, f - sp.lag);
    const double q = sp.correlation;
    std::array<double, 2> c;
    for (int axis = 0; axis < 2; ++axis) {
        const double coupled = sp.coupling * (now[axis] - before[axis]);
        const double own = eval_sinusoids(h.wobble[axis], f);
        const double anchor = axis == 0 ? h.anchor_x : h.anchor_y;
        c[axis] = anchor + q * coupled + (1.0 - q) * own;
        const double margin = 6.0;
        c[axis] = std::clamp(c[axis], margin, static_cast<double>(size) - margin);
    }
    return c;
}

ImageU8 render_frame(const SceneParams& sp, int f, int size) {
    ImageU8 img(size, size, 3);
    const auto p = camera_pos(sp, f);
    const HandPose h0 = hand_pose(sp, 0, f, size);
    const HandPose h1 = hand_pose(sp, 1, f, size);
    static constexpr float hand_rgb[3] = {0.80f, 0.62f, 0.50f};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double lum = tex_lum(sp.tex_seed, x + p[0], y + p[1]);
            float rgb[3];
            for (int k = 0; k < 3; ++k)
                rgb[k] = std::clamp(sp.base_color[static_cast<size_t>(k)] +
                                        sp.contrast * static_cast<float>(lum - 0.5),
                                    0.0f, 1.0f);
            for (const HandPose& hp : {h0, h1}) {
                const double d = hp.dist(x, y);
                const double cov = std::clamp(0.5 + (1.0 - d) * std::min(hp.rx, hp.ry), 0.0, 1.0);
                if (cov <= 0) continue;
                const float shade = static_cast<float>(1.0 - 0.25 * std::min(d * d, 1.0));
                for (int k = 0; k < 3; ++k)
                    rgb[k] = static_cast<float>((1.0 - cov) * rgb[k] + cov * hand_rgb[k] * shade);
            }
            for (int k = 0; k < 3; ++k)
                img.at(y, x, k) = static_cast<u8>(std::lround(std::clamp(rgb[k], 0.0f, 1.0f) * 255.0f));
        }
    return img;
}

ImageU8 render_hand_mask(const SceneParams& sp, int f, int size) {
    ImageU8 mask(size, size, 1);
    const HandPose h0 = hand_pose(sp, 0, f, size);
    const HandPose h1 = hand_pose(sp, 1, f, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            mask.at(y, x) = (h0.dist(x, y) <= 1.0 || h1.dist(x, y) <= 1.0) ? 255 : 0;
    return mask;
}

DenseFlow render_flow(const SceneParams& sp, int a, int b, int size) {
    DenseFlow flow(size, size);
    const auto pa = camera_pos(sp, a), pb = camera_pos(sp, b);
    const float bg_u = static_cast<float>(-(pb[0] - pa[0]));
    const float bg_v = static_cast<float>(-(pb[1] - pa[1]));
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            flow.u(y, x) = bg_u;
            flow.v(y, x) = bg_v;
        }
    for (int h = 0; h < 2; ++h) {
        const HandPose hp = hand_pose(sp, h, a, size);
        const auto ca = hand_center(sp, h, a, size), cb = hand_center(sp, h, b, size);
        const float hu = static_cast<float>(cb[0] - ca[0]);
        const float hv = static_cast<float>(cb[1] - ca[1]);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (hp.dist(x, y) <= 1.0) {
                    flow.u(y, x) = hu;
                    flow.v(y, x) = hv;
                }
    }
    return flow;
}

namespace {

std::string frame_path(const std::string& vid, int f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f%06d.png", f);
    return "frames/" + vid + "/" + buf;
}
std::string mask_path(const std::string& vid, int f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "m%06d.png", f);
    return "masks/" + vid + "/" + buf;
}
std::string flow_path(const std::string& vid, int a, int b) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "t%06d_%06d.flo", a, b);
    return "flow/" + vid + "/" + buf;
}

} // namespace

std::string synth_generate(const std::string& root, u64 seed, const SynthConfig& cfg) {
    cfg.validate();
    const int total = cfg.n_train + cfg.n_val;
    const int delta3 = cfg.deltas[2];
    const std::vector<int> instants = anticipation_instants(delta3);

    fs::create_directories(root);
    json splits = {{"train", json::array()}, {"val", json::array()}};
    Rng layout_rng = Rng::stream(seed, 0x1A70);

    for (int vi = 0; vi < total; ++vi) {
        char vbuf[16];
        std::snprintf(vbuf, sizeof(vbuf), "v%04d", vi);
        const std::string vid = vbuf;
        SceneParams sp = make_scene(seed, vi, cfg);
        const int t = 56;
        const int first_frame = layout_rng.bernoulli(cfg.short_history_prob) ? t - 24 : 0;
        const int action_start = t + delta3 + 1;

        fs::create_directories(fs::path(root) / "frames" / vid);
        fs::create_directories(fs::path(root) / "masks" / vid);
        fs::create_directories(fs::path(root) / "flow" / vid);

        // input frames on the stride-8 grid, clamped at the first frame
        std::vector<int> input_frames;
        for (int k = 0; k < 8; ++k) input_frames.push_back(std::max(t - 56 + 8 * k, first_frame));
        std::vector<int> emit_frames = input_frames;
        for (int d : cfg.deltas) emit_frames.push_back(t + d);
        std::sort(emit_frames.begin(), emit_frames.end());
        emit_frames.erase(std::unique(emit_frames.begin(), emit_frames.end()), emit_frames.end());
        for (int f : emit_frames) write_png((fs::path(root) / frame_path(vid, f)).string(), render_frame(sp, f, cfg.size));

        // masks at flow-source instants and at the three targets
        std::vector<int> mask_frames;
        int prev = t;
        std::vector<std::pair<int, int>> transitions;
        for (int off : instants) {
            transitions.emplace_back(prev, t + off);
            mask_frames.push_back(prev);
            prev = t + off;
        }
        for (int d : cfg.deltas) mask_frames.push_back(t + d);
        std::sort(mask_frames.begin(), mask_frames.end());
        mask_frames.erase(std::unique(mask_frames.begin(), mask_frames.end()), mask_frames.end());
        for (int f : mask_frames)
            write_png((fs::path(root) / mask_path(vid, f)).string(), render_hand_mask(sp, f, cfg.size));
        for (auto [a, b] : transitions)
            write_flo((fs::path(root) / flow_path(vid, a, b)).string(), render_flow(sp, a, b, cfg.size));

        json rec;
        rec["video"] = vid;
        rec["t"] = t;
        rec["first_frame"] = first_frame;
        rec["action_start"] = action_start;
        json tmasks = json::array(), tframes = json::array();
        for (int d : cfg.deltas) {
            tmasks.push_back(mask_path(vid, t + d));
            tframes.push_back(frame_path(vid, t + d));
        }
        rec["target_masks"] = tmasks;
        rec["target_frames"] = tframes;
        json wmasks = json::array(), wflows = json::array(), wsrc = json::array();
        for (auto [a, b] : transitions) {
            wmasks.push_back(mask_path(vid, a));
            wflows.push_back(flow_path(vid, a, b));
            wsrc.push_back(json::array({a, b}));
        }
        rec["window_masks"] = wmasks;
        rec["window_flows"] = wflows;
        rec["window_transitions"] = wsrc;
        splits[vi < cfg.n_train ? "train" : "val"].push_back(rec);
    }

    json manifest;
    manifest["format_version"] = 1;
    manifest["kind"] = "egogan-dataset";
    manifest["fps"] = cfg.fps;
    manifest["flow_scale"] = cfg.flow_scale;
    manifest["deltas"] = cfg.deltas;
    manifest["frame_size"] = {cfg.size, cfg.size};
    manifest["splits"] = splits;
    json prov;
    prov["tool"] = "egogan synth";
    prov["seed"] = seed;
    prov["config"] = {{"n_train", cfg.n_train},
                      {"n_val", cfg.n_val},
                      {"size", cfg.size},
                      {"correlation", cfg.correlation},
                      {"cam_speed", cfg.cam_speed},
                      {"cam_drift", cfg.cam_drift},
                      {"hand_coupling", cfg.hand_coupling},
                      {"wobble_amp", cfg.wobble_amp},
                      {"flow_scale", cfg.flow_scale}};
    manifest["provenance"] = prov;
    manifest["provenance"]["content_hash"] = sha1_hex(manifest.dump());

    const std::string manifest_file = (fs::path(root) / "manifest.json").string();
    std::ofstream mf(manifest_file);
    if (!mf) throw IoError("synth_generate: cannot write " + manifest_file);
    mf << manifest.dump(1) << "\n";
    return manifest_file;
}

} // namespace egogan
