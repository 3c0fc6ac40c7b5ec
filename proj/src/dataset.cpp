#include "egogan/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace egogan {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<SampleRecord>& DatasetManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    throw ConfigError("unknown split: " + name + " (expected train or val)");
}

std::string DatasetManifest::path(const std::string& rel) const { return (fs::path(root) / rel).string(); }

namespace {

const json& require(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) throw SchemaError(std::string("manifest: missing field '") + field + "'");
    return *it;
}

SampleRecord parse_record(const json& j) {
    SampleRecord r;
    r.video = require(j, "video").get<std::string>();
    r.t = require(j, "t").get<int>();
    r.first_frame = require(j, "first_frame").get<int>();
    r.action_start = require(j, "action_start").get<int>();
    r.target_masks = require(j, "target_masks").get<std::vector<std::string>>();
    r.target_frames = require(j, "target_frames").get<std::vector<std::string>>();
    r.window_masks = require(j, "window_masks").get<std::vector<std::string>>();
    r.window_flows = require(j, "window_flows").get<std::vector<std::string>>();
    for (const auto& tr : require(j, "window_transitions")) r.window_transitions.push_back({tr[0], tr[1]});
    return r;
}

json record_to_json(const SampleRecord& r) {
    json j;
    j["video"] = r.video;
    j["t"] = r.t;
    j["first_frame"] = r.first_frame;
    j["action_start"] = r.action_start;
    j["target_masks"] = r.target_masks;
    j["target_frames"] = r.target_frames;
    j["window_masks"] = r.window_masks;
    j["window_flows"] = r.window_flows;
    json tr = json::array();
    for (auto& p : r.window_transitions) tr.push_back(json::array({p[0], p[1]}));
    j["window_transitions"] = tr;
    return j;
}

} // namespace

DatasetManifest read_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("read_manifest: cannot open " + manifest_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw SchemaError("read_manifest: invalid JSON in " + manifest_path + ": " + e.what());
    }
    const int version = require(j, "format_version").get<int>();
    if (version != 1)
        throw SchemaError("read_manifest: unsupported format_version " + std::to_string(version) +
                          " (this build reads version 1)");
    DatasetManifest m;
    m.root = fs::path(manifest_path).parent_path().string();
    m.fps = require(j, "fps").get<double>();
    m.flow_scale = require(j, "flow_scale").get<float>();
    auto deltas = require(j, "deltas").get<std::vector<int>>();
    if (deltas.size() != 3) throw SchemaError("manifest: deltas must have 3 entries");
    m.deltas = {deltas[0], deltas[1], deltas[2]};
    if (!(m.deltas[0] < m.deltas[1] && m.deltas[1] < m.deltas[2]))
        throw SchemaError("manifest: deltas must be strictly increasing");
    auto size = require(j, "frame_size").get<std::vector<int>>();
    if (size.size() != 2) throw SchemaError("manifest: frame_size must be [h, w]");
    m.frame_h = size[0];
    m.frame_w = size[1];
    const json& splits = require(j, "splits");
    for (const auto& rec : require(splits, "train")) m.train.push_back(parse_record(rec));
    for (const auto& rec : require(splits, "val")) m.val.push_back(parse_record(rec));
    for (const auto* split : {&m.train, &m.val})
        for (const auto& r : *split)
            if (r.t + m.deltas[2] != r.action_start - 1)
                throw SchemaError("manifest: record " + r.video + " violates t + delta3 = action_start - 1");
    if (j.contains("provenance")) m.provenance_json = j["provenance"].dump();
    return m;
}

void write_manifest(const std::string& manifest_path, const DatasetManifest& m) {
    json j;
    j["format_version"] = 1;
    j["kind"] = "egogan-dataset";
    j["fps"] = m.fps;
    j["flow_scale"] = m.flow_scale;
    j["deltas"] = m.deltas;
    j["frame_size"] = {m.frame_h, m.frame_w};
    json splits;
    splits["train"] = json::array();
    splits["val"] = json::array();
    for (const auto& r : m.train) splits["train"].push_back(record_to_json(r));
    for (const auto& r : m.val) splits["val"].push_back(record_to_json(r));
    j["splits"] = splits;
    if (!m.provenance_json.empty()) j["provenance"] = json::parse(m.provenance_json);
    std::ofstream f(manifest_path);
    if (!f) throw IoError("write_manifest: cannot open " + manifest_path);
    f << j.dump(1) << "\n";
}

std::vector<int> input_frame_indices(const SampleRecord& rec) {
    std::vector<int> idx(8);
    for (int k = 0; k < 8; ++k) idx[static_cast<size_t>(k)] = std::max(rec.t - 56 + 8 * k, rec.first_frame);
    return idx;
}

namespace {

std::string input_frame_path(const SampleRecord& rec, int f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f%06d.png", f);
    return "frames/" + rec.video + "/" + buf;
}

ImageU8 load_png_checked(const DatasetManifest& m, const std::string& rel) {
    const std::string full = m.path(rel);
    if (!fs::exists(full)) throw IoError("dataset: missing file " + full);
    return read_png(full);
}

} // namespace

RawSample load_raw_sample(const DatasetManifest& m, const SampleRecord& rec) {
    RawSample raw;
    for (int f : input_frame_indices(rec)) raw.input_frames.push_back(load_png_checked(m, input_frame_path(rec, f)));
    for (const auto& p : rec.target_masks) raw.target_masks.push_back(load_png_checked(m, p));
    for (const auto& p : rec.window_masks) raw.window_masks.push_back(load_png_checked(m, p));
    for (const auto& p : rec.window_flows) {
        const std::string full = m.path(p);
        if (!fs::exists(full)) throw IoError("dataset: missing file " + full);
        raw.window_flows.push_back(read_flo(full));
    }
    for (const auto& tr : rec.window_transitions) raw.window_len.push_back(tr[1] - tr[0]);
    if (raw.target_masks.size() != 3) throw SchemaError("dataset: record " + rec.video + " must have 3 target masks");
    if (raw.window_flows.size() != raw.window_masks.size() || raw.window_flows.size() != raw.window_len.size())
        throw SchemaError("dataset: record " + rec.video + " has inconsistent window lists");
    return raw;
}

void validate_manifest_files(const DatasetManifest& m) {
    for (const auto* split : {&m.train, &m.val})
        for (const auto& rec : *split) {
            for (int f : input_frame_indices(rec)) {
                const std::string full = m.path(input_frame_path(rec, f));
                if (!fs::exists(full)) throw IoError("dataset: missing file " + full);
            }
            for (const auto* list : {&rec.target_masks, &rec.target_frames, &rec.window_masks, &rec.window_flows})
                for (const auto& p : *list)
                    if (!fs::exists(m.path(p))) throw IoError("dataset: missing file " + m.path(p));
        }
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

AugmentParams draw_augment(Rng& rng, const AugmentConfig& cfg, int in_h, int in_w, int out_h, int out_w) {
    AugmentParams p;
    p.out_h = out_h;
    p.out_w = out_w;
    if (!cfg.enabled) {
        // eval path: centered crop only if sizes differ
        p.crop_y = (in_h - out_h) / 2;
        p.crop_x = (in_w - out_w) / 2;
        return p;
    }
    if (cfg.flip) p.flip = rng.bernoulli(0.5);
    if (cfg.max_rot_deg > 0) p.angle = rng.uniform(-cfg.max_rot_deg, cfg.max_rot_deg) * 3.14159265358979323846 / 180.0;
    if (in_h > out_h) p.crop_y = static_cast<int>(rng.uniform_int(0, in_h - out_h));
    if (in_w > out_w) p.crop_x = static_cast<int>(rng.uniform_int(0, in_w - out_w));
    if (cfg.jitter > 0) {
        p.brightness = rng.uniform(-cfg.jitter / 2, cfg.jitter / 2);
        p.contrast = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
    }
    return p;
}

namespace {

// output pixel -> source pixel under crop, rotation about the pre-crop
// center, then horizontal flip (the inverse of the forward transform)
struct GeoMap {
    int in_h, in_w;
    const AugmentParams* p;
    double cx, cy, cos_a, sin_a;

    GeoMap(int h, int w, const AugmentParams& params) : in_h(h), in_w(w), p(&params) {
        cx = (w - 1) / 2.0;
        cy = (h - 1) / 2.0;
        cos_a = std::cos(params.angle);
        sin_a = std::sin(params.angle);
    }

    void source(double yo, double xo, double& ys, double& xs) const {
        double x = xo + p->crop_x;
        double y = yo + p->crop_y;
        // inverse rotation
        const double dx = x - cx, dy = y - cy;
        x = cx + dx * cos_a + dy * sin_a;
        y = cy - dx * sin_a + dy * cos_a;
        if (p->flip) x = (in_w - 1) - x;
        xs = x;
        ys = y;
    }
};

double bilinear(const ImageU8& img, double y, double x, int c) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double tx = x - x0, ty = y - y0;
    auto clamped = [&](int yy, int xx) {
        yy = std::clamp(yy, 0, img.h - 1);
        xx = std::clamp(xx, 0, img.w - 1);
        return static_cast<double>(img.at(yy, xx, c));
    };
    const double v00 = clamped(y0, x0), v10 = clamped(y0, x0 + 1);
    const double v01 = clamped(y0 + 1, x0), v11 = clamped(y0 + 1, x0 + 1);
    return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

} // namespace

ImageU8 augment_frame(const ImageU8& img, const AugmentParams& p) {
    const int oh = p.out_h > 0 ? p.out_h : img.h;
    const int ow = p.out_w > 0 ? p.out_w : img.w;
    ImageU8 out(oh, ow, img.channels);
    GeoMap map(img.h, img.w, p);
    for (int y = 0; y < oh; ++y) {
        // the map is affine: walk the source coordinates incrementally
        double ys, xs, ys1, xs1;
        map.source(y, 0, ys, xs);
        map.source(y, 1, ys1, xs1);
        const double dys = ys1 - ys, dxs = xs1 - xs;
        for (int x = 0; x < ow; ++x, ys += dys, xs += dxs) {
            for (int c = 0; c < img.channels; ++c) {
                double v = bilinear(img, ys, xs, c) / 255.0;
                v = (v - 0.5) * p.contrast + 0.5 + p.brightness;
                out.at(y, x, c) = static_cast<u8>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    }
    return out;
}

ImageU8 augment_mask(const ImageU8& mask, const AugmentParams& p) {
    const int oh = p.out_h > 0 ? p.out_h : mask.h;
    const int ow = p.out_w > 0 ? p.out_w : mask.w;
    ImageU8 out(oh, ow, 1);
    GeoMap map(mask.h, mask.w, p);
    for (int y = 0; y < oh; ++y) {
        double ys, xs, ys1, xs1;
        map.source(y, 0, ys, xs);
        map.source(y, 1, ys1, xs1);
        const double dys = ys1 - ys, dxs = xs1 - xs;
        for (int x = 0; x < ow; ++x, ys += dys, xs += dxs) {
            const int yi = std::clamp(static_cast<int>(std::lround(ys)), 0, mask.h - 1);
            const int xi = std::clamp(static_cast<int>(std::lround(xs)), 0, mask.w - 1);
            out.at(y, x) = mask.at(yi, xi) >= 128 ? 255 : 0;
        }
    }
    return out;
}

DenseFlow augment_flow(const DenseFlow& flow, const AugmentParams& p) {
    const int oh = p.out_h > 0 ? p.out_h : flow.h;
    const int ow = p.out_w > 0 ? p.out_w : flow.w;
    DenseFlow out(oh, ow);
    GeoMap map(flow.h, flow.w, p);
    const double c = std::cos(p.angle), s = std::sin(p.angle);
    for (int y = 0; y < oh; ++y) {
        double ys, xs, ys1, xs1;
        map.source(y, 0, ys, xs);
        map.source(y, 1, ys1, xs1);
        const double dys = ys1 - ys, dxs = xs1 - xs;
        for (int x = 0; x < ow; ++x, ys += dys, xs += dxs) {
            const int yi = std::clamp(static_cast<int>(std::lround(ys)), 0, flow.h - 1);
            const int xi = std::clamp(static_cast<int>(std::lround(xs)), 0, flow.w - 1);
            double u = flow.u(yi, xi), v = flow.v(yi, xi);
            if (p.flip) u = -u;
            // vectors rotate with the image content
            const double ur = u * c - v * s;
            const double vr = u * s + v * c;
            out.u(y, x) = static_cast<float>(ur);
            out.v(y, x) = static_cast<float>(vr);
        }
    }
    return out;
}

RawSample augment_sample(const RawSample& raw, const AugmentParams& p) {
    RawSample out;
    AugmentParams geom = p; // frames get jitter, masks and flow only geometry
    AugmentParams geom_only = p;
    geom_only.brightness = 0.0;
    geom_only.contrast = 1.0;
    for (const auto& f : raw.input_frames) out.input_frames.push_back(augment_frame(f, geom));
    for (const auto& m : raw.target_masks) out.target_masks.push_back(augment_mask(m, geom_only));
    for (const auto& m : raw.window_masks) out.window_masks.push_back(augment_mask(m, geom_only));
    for (const auto& f : raw.window_flows) out.window_flows.push_back(augment_flow(f, geom_only));
    out.window_len = raw.window_len;
    return out;
}

// ---------------------------------------------------------------------------
// tensor assembly
// ---------------------------------------------------------------------------

SampleTensors assemble_sample(const RawSample& raw, float flow_scale) {
    SampleTensors st;
    const int H = raw.input_frames[0].h, W = raw.input_frames[0].w;
    const i64 T = static_cast<i64>(raw.input_frames.size());
    st.clip = Tensor<float>::uninit({3, T, H, W});
    for (i64 t = 0; t < T; ++t) {
        const ImageU8& img = raw.input_frames[static_cast<size_t>(t)];
        if (img.h != H || img.w != W || img.channels != 3)
            throw ConfigError("assemble_sample: inconsistent frame dimensions");
        for (i64 c = 0; c < 3; ++c)
            for (i64 y = 0; y < H; ++y)
                for (i64 x = 0; x < W; ++x)
                    st.clip[((c * T + t) * H + y) * W + x] =
                        static_cast<float>(img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c))) /
                        255.0f;
    }
    const i64 nh = static_cast<i64>(raw.target_masks.size());
    st.gt = Tensor<float>::uninit({1, nh, H, W});
    for (i64 t = 0; t < nh; ++t) {
        const ImageU8& m = raw.target_masks[static_cast<size_t>(t)];
        if (m.h != H || m.w != W) throw ConfigError("assemble_sample: mask dimensions differ from frames");
        for (i64 y = 0; y < H; ++y)
            for (i64 x = 0; x < W; ++x)
                st.gt[(t * H + y) * W + x] = m.at(static_cast<int>(y), static_cast<int>(x)) >= 128 ? 1.0f : 0.0f;
    }
    std::vector<FlowGrid> slices;
    for (size_t i = 0; i < raw.window_flows.size(); ++i) {
        DenseFlow vel = raw.window_flows[i];
        const float inv_len = 1.0f / static_cast<float>(std::max(1, raw.window_len[i]));
        for (float& v : vel.uv) v *= inv_len; // displacement -> per-frame velocity
        slices.push_back(normalize_flow(sparsify_flow(vel, raw.window_masks[i]), flow_scale));
    }
    st.m_real = stack_flow_slices(slices);
    return st;
}

SampleTensors sample_clip(const DatasetManifest& m, const SampleRecord& rec) {
    return assemble_sample(load_raw_sample(m, rec), m.flow_scale);
}

LoadedDataset load_dataset(const std::string& manifest_path, bool preload_train, bool preload_val) {
    LoadedDataset ds;
    ds.manifest = read_manifest(manifest_path);
    if (preload_train)
        for (const auto& rec : ds.manifest.train) ds.train.push_back(load_raw_sample(ds.manifest, rec));
    if (preload_val)
        for (const auto& rec : ds.manifest.val) ds.val.push_back(load_raw_sample(ds.manifest, rec));
    return ds;
}

} // namespace egogan
