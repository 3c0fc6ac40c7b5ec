#include "egogan/cli_commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "egogan/checkpoint.hpp"
#include "egogan/metrics.hpp"
#include "egogan/synth.hpp"

namespace egogan {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    return 1;
}

Batch<float> make_batch(const LoadedDataset& ds, const std::vector<i64>& indices, i64 epoch, u64 seed,
                        const AugmentConfig& aug) {
    if (indices.empty()) throw ConfigError("make_batch: empty index list");
    const i64 N = static_cast<i64>(indices.size());
    Batch<float> batch;
    bool first = true;
    for (i64 bi = 0; bi < N; ++bi) {
        const i64 idx = indices[static_cast<size_t>(bi)];
        if (idx < 0 || idx >= static_cast<i64>(ds.train.size()))
            throw ConfigError("make_batch: sample index out of range");
        const RawSample& raw = ds.train[static_cast<size_t>(idx)];
        Rng rng = Rng::stream(seed, hash_combine(0xA06 + static_cast<u64>(epoch), static_cast<u64>(idx)));
        const int H = raw.input_frames[0].h, W = raw.input_frames[0].w;
        AugmentParams p = draw_augment(rng, aug, H, W, H, W);
        SampleTensors st = assemble_sample(p.identity() ? raw : augment_sample(raw, p), ds.manifest.flow_scale);
        if (first) {
            batch.clips = Tensor<float>::uninit({N, 3, st.clip.size(1), st.clip.size(2), st.clip.size(3)});
            batch.gt_masks = Tensor<float>::uninit({N, 1, st.gt.size(1), st.gt.size(2), st.gt.size(3)});
            batch.m_real = Tensor<float>::uninit({N, 2, st.m_real.size(1), st.m_real.size(2), st.m_real.size(3)});
            first = false;
        }
        std::memcpy(batch.clips.ptr() + bi * st.clip.numel(), st.clip.ptr(),
                    sizeof(float) * static_cast<size_t>(st.clip.numel()));
        std::memcpy(batch.gt_masks.ptr() + bi * st.gt.numel(), st.gt.ptr(),
                    sizeof(float) * static_cast<size_t>(st.gt.numel()));
        std::memcpy(batch.m_real.ptr() + bi * st.m_real.numel(), st.m_real.ptr(),
                    sizeof(float) * static_cast<size_t>(st.m_real.numel()));
    }
    return batch;
}

int cmd_synth(const CliArgs& args) {
    SynthConfig synth = args.config.synth_config();
    const std::string root =
        !args.out.empty() && args.out != "." ? args.out : args.config.j["synth"].value("root", "dataset");
    const std::string manifest = synth_generate(root, args.config.seed(), synth);
    std::printf("wrote %s: %d train / %d val samples at %dx%d\n", manifest.c_str(), synth.n_train, synth.n_val,
                synth.size, synth.size);
    return 0;
}

int cmd_train(const CliArgs& args) {
    const std::string manifest_path = args.manifest.empty() ? args.config.default_manifest() : args.manifest;
    LoadedDataset ds = load_dataset(manifest_path, true, false);
    validate_manifest_files(ds.manifest);
    const AugmentConfig aug = args.config.augment_config();
    const u64 seed = args.config.seed();

    std::optional<TrainState<float>> state;
    RunConfig config = args.config;
    if (!args.ckpt.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(args.ckpt);
        config = loaded.config;
        state.emplace(std::move(loaded.state));
        std::printf("resumed from %s at epoch %lld, step %lld\n", args.ckpt.c_str(),
                    static_cast<long long>(state->epoch), static_cast<long long>(state->step));
    } else {
        state.emplace(config.model_config(), config.train_hp(), seed);
    }
    TrainState<float>& ts = *state;

    fs::create_directories(args.out);
    const std::string log_path = (fs::path(args.out) / "train_log.jsonl").string();
    std::ofstream log(log_path, args.ckpt.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cmd_train: cannot open " + log_path);
    if (args.ckpt.empty()) log << json{{"provenance", config.provenance("egogan train")}}.dump() << "\n";

    StepLogger logger = [&](const StepLog& s) {
        json line{{"step", s.step},     {"epoch", s.epoch},   {"l_d", s.l_d},       {"l_g_adv", s.l_g_adv},
                  {"l_g_l1", s.l_g_l1}, {"l_seg", s.l_seg},   {"lr_seg", s.lr_seg}, {"lr_gan", s.lr_gan}};
        log << line.dump() << "\n";
    };

    const i64 n = static_cast<i64>(ds.train.size());
    BatchProvider<float> provider = [&](i64 epoch, const std::vector<i64>& idx) {
        return make_batch(ds, idx, epoch, seed, aug);
    };
    const i64 ckpt_every = config.checkpoint_every();
    while (ts.epoch < ts.hp.epochs) {
        train_epoch(ts, n, provider, logger);
        log.flush();
        if (ckpt_every > 0 && (ts.epoch % ckpt_every == 0 || ts.epoch == ts.hp.epochs)) {
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_epoch%04lld.eck", static_cast<long long>(ts.epoch));
            save_checkpoint((fs::path(args.out) / name).string(), ts, config);
        }
        std::printf("epoch %lld/%lld done (step %lld)\n", static_cast<long long>(ts.epoch),
                    static_cast<long long>(ts.hp.epochs), static_cast<long long>(ts.step));
        std::fflush(stdout);
    }
    save_checkpoint((fs::path(args.out) / "ckpt_final.eck").string(), ts, config);
    return 0;
}

namespace {

json report_json(const MetricsReport& r, const DatasetManifest& m, const RunConfig& config) {
    json horizons = json::array();
    for (int h = 0; h < 3; ++h)
        horizons.push_back({{"delta", m.deltas[static_cast<size_t>(h)]},
                            {"precision", r.horizon[static_cast<size_t>(h)].precision},
                            {"recall", r.horizon[static_cast<size_t>(h)].recall},
                            {"f1", r.horizon[static_cast<size_t>(h)].f1}});
    json out{{"variant", r.variant},
             {"averaging", r.averaging},
             {"threshold", r.threshold},
             {"n_samples", r.n_samples},
             {"anticipation_violation", r.anticipation_violation},
             {"horizons", horizons},
             {"mean_f1", r.mean_f1}};
    if (r.head_motion_epe >= 0) {
        out["head_motion_epe"] = r.head_motion_epe;
        out["zero_motion_epe"] = r.zero_motion_epe;
    }
    out["provenance"] = config.provenance("egogan eval");
    return out;
}

} // namespace

int cmd_eval(const CliArgs& args) {
    if (args.ckpt.empty()) throw ConfigError("cmd_eval: --ckpt is required");
    LoadedCheckpoint loaded = load_checkpoint(args.ckpt);
    const std::string manifest_path = args.manifest.empty() ? loaded.config.default_manifest() : args.manifest;
    LoadedDataset ds = load_dataset(manifest_path, args.split == "train", args.split == "val");
    MetricsReport r = evaluate(loaded.state.model, ds, args.split, loaded.config.metrics_threshold());
    const std::string table = metrics_table(r, ds.manifest.deltas);
    std::fputs(table.c_str(), stdout);
    fs::create_directories(args.out);
    json rep = report_json(r, ds.manifest, loaded.config);
    {
        std::ofstream f((fs::path(args.out) / "report.json").string());
        if (!f) throw IoError("cmd_eval: cannot write report.json");
        f << rep.dump(1) << "\n";
    }
    {
        std::ofstream f((fs::path(args.out) / "report.txt").string());
        if (!f) throw IoError("cmd_eval: cannot write report.txt");
        f << table;
    }
    return 0;
}

int cmd_predict(const CliArgs& args, bool overlays) {
    if (args.ckpt.empty()) throw ConfigError("cmd_predict: --ckpt is required");
    LoadedCheckpoint loaded = load_checkpoint(args.ckpt);
    const std::string manifest_path = args.manifest.empty() ? loaded.config.default_manifest() : args.manifest;
    DatasetManifest manifest = read_manifest(manifest_path);
    const auto& records = manifest.split(args.split);
    if (args.sample < 0 || args.sample >= static_cast<i64>(records.size()))
        throw ConfigError("cmd_predict: sample index " + std::to_string(args.sample) + " out of range (split has " +
                          std::to_string(records.size()) + ")");
    const SampleRecord& rec = records[static_cast<size_t>(args.sample)];
    SampleTensors st = sample_clip(manifest, rec);
    auto& model = loaded.state.model;
    Tensor<float> clip = st.clip.reshaped({1, 3, st.clip.size(1), st.clip.size(2), st.clip.size(3)});
    Tensor<float> m_real = st.m_real.reshaped({1, 2, st.m_real.size(1), st.m_real.size(2), st.m_real.size(3)});
    auto fw = model.forward(clip, nn::FwdCtx::eval(),
                            model.cfg.variant == Variant::HEADDIR ? &m_real : nullptr);

    fs::create_directories(args.out);
    const json prov = loaded.config.provenance(overlays ? "egogan visualize" : "egogan predict");
    const std::vector<PngText> texts = {{"provenance", prov.dump()}};
    const i64 H = fw.probs.size(3), W = fw.probs.size(4);
    const double thr = loaded.config.metrics_threshold();
    for (int h = 0; h < 3; ++h) {
        ImageU8 mask(static_cast<int>(H), static_cast<int>(W), 1);
        const float* p = fw.probs.ptr() + h * H * W;
        for (i64 i = 0; i < H * W; ++i)
            mask.pix[static_cast<size_t>(i)] = static_cast<u8>(std::lround(std::clamp(p[i], 0.f, 1.f) * 255.f));
        char name[64];
        std::snprintf(name, sizeof(name), "mask_d%d.png", manifest.deltas[static_cast<size_t>(h)]);
        write_png((fs::path(args.out) / name).string(), mask, texts);
        if (!overlays) continue;
        ImageU8 frame = read_png(manifest.path(rec.target_frames[static_cast<size_t>(h)]));
        for (i64 i = 0; i < H * W; ++i) {
            if (p[i] < thr) continue;
            // alpha-blend a fixed red over predicted hand pixels
            const double a = 0.45;
            u8* px = frame.pix.data() + static_cast<size_t>(i) * 3;
            px[0] = static_cast<u8>(std::lround((1 - a) * px[0] + a * 255.0));
            px[1] = static_cast<u8>(std::lround((1 - a) * px[1]));
            px[2] = static_cast<u8>(std::lround((1 - a) * px[2]));
        }
        std::snprintf(name, sizeof(name), "overlay_d%d.png", manifest.deltas[static_cast<size_t>(h)]);
        write_png((fs::path(args.out) / name).string(), frame, texts);
    }
    std::printf("wrote %s for sample %lld (%s split) to %s\n", overlays ? "masks + overlays" : "masks",
                static_cast<long long>(args.sample), args.split.c_str(), args.out.c_str());
    return 0;
}

} // namespace egogan
