#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "egogan/cli_commands.hpp"
#include "egogan/png_io.hpp"

// Exercises the operator entry points end to end on a miniature run: the
// library functions directly, plus the installed binary for exit codes.

using namespace egogan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig mini_config(const fs::path& root) {
    RunConfig cfg = RunConfig::preset("desk");
    cfg.set_override("model.channel_width", "0.03125");
    cfg.set_override("train.epochs", "2");
    cfg.set_override("train.batch_size", "4");
    cfg.set_override("train.checkpoint_every", "1");
    cfg.set_override("synth.n_train", "8");
    cfg.set_override("synth.n_val", "3");
    cfg.set_override("synth.root", (root / "data").string());
    cfg.set_override("data.manifest", (root / "data" / "manifest.json").string());
    return cfg;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(EGOGAN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("synth, train, eval, predict, visualize pipeline") {
    TempDir dir("egogan_cli_pipeline");
    CliArgs args;
    args.config = mini_config(dir.path);
    args.out = (dir.path / "data").string();
    CHECK(cmd_synth(args) == 0);
    CHECK(fs::exists(dir.path / "data" / "manifest.json"));

    CliArgs train_args;
    train_args.config = args.config;
    train_args.out = (dir.path / "run").string();
    CHECK(cmd_train(train_args) == 0);
    const fs::path final_ckpt = dir.path / "run" / "ckpt_final.eck";
    CHECK(fs::exists(final_ckpt));

    // the JSONL log has a provenance header plus one line per step
    std::ifstream log((dir.path / "run" / "train_log.jsonl").string());
    std::string line;
    REQUIRE(std::getline(log, line));
    CHECK(json::parse(line).contains("provenance"));
    int steps = 0;
    while (std::getline(log, line)) {
        json row = json::parse(line);
        for (const char* key : {"step", "epoch", "l_d", "l_g_adv", "l_g_l1", "l_seg", "lr_seg", "lr_gan"})
            CHECK(row.contains(key));
        CHECK(std::isfinite(row["l_seg"].get<double>()));
        ++steps;
    }
    CHECK(steps == 2 * 2); // 8 samples / batch 4, 2 epochs

    // resume continues the step counter exactly
    CliArgs resume_args = train_args;
    resume_args.ckpt = (dir.path / "run" / "ckpt_epoch0001.eck").string();
    resume_args.config.set_override("train.epochs", "2");
    CHECK(cmd_train(resume_args) == 0);

    CliArgs eval_args;
    eval_args.config = args.config;
    eval_args.ckpt = final_ckpt.string();
    eval_args.split = "val";
    eval_args.out = (dir.path / "eval").string();
    CHECK(cmd_eval(eval_args) == 0);
    json report = json::parse(file_bytes(dir.path / "eval" / "report.json"));
    CHECK(report["variant"] == "EGOGAN");
    CHECK(report["averaging"] == "micro");
    CHECK(report["n_samples"] == 3);
    CHECK(report["horizons"].size() == 3);
    for (auto& h : report["horizons"]) {
        CHECK(h["f1"].get<double>() >= 0.0);
        CHECK(h["f1"].get<double>() <= 1.0);
    }
    CHECK(report.contains("head_motion_epe"));
    CHECK(report["provenance"].contains("content_hash"));
    const std::string table = file_bytes(dir.path / "eval" / "report.txt");
    CHECK(table.find("Precision/ Recall/ F1 Score") != std::string::npos);
    CHECK(table.find("EGOGAN") != std::string::npos);

    CliArgs pred_args;
    pred_args.config = args.config;
    pred_args.ckpt = final_ckpt.string();
    pred_args.split = "val";
    pred_args.sample = 1;
    pred_args.out = (dir.path / "pred").string();
    CHECK(cmd_predict(pred_args, true) == 0);
    int masks = 0, overlays = 0;
    for (auto& e : fs::directory_iterator(dir.path / "pred")) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("mask_")) ++masks;
        if (name.starts_with("overlay_")) ++overlays;
        ImageU8 img = read_png(e.path().string());
        CHECK(img.h == 64);
        CHECK(img.w == 64);
        auto texts = read_png_texts(e.path().string());
        REQUIRE(texts.size() == 1);
        CHECK(texts[0].keyword == "provenance");
        CHECK(json::parse(texts[0].text).contains("content_hash"));
    }
    CHECK(masks == 3);
    CHECK(overlays == 3);

    // deterministic bytes under a fixed checkpoint
    CliArgs pred2 = pred_args;
    pred2.out = (dir.path / "pred2").string();
    CHECK(cmd_predict(pred2, true) == 0);
    for (auto& e : fs::directory_iterator(dir.path / "pred"))
        CHECK(file_bytes(e.path()) == file_bytes(dir.path / "pred2" / e.path().filename()));
}

TEST_CASE("binary exit codes: 0 ok, 2 config, 3 io") {
    TempDir dir("egogan_cli_codes");
    const std::string out = (dir.path / "d").string();
    CHECK(run_binary("synth --out " + out +
                     " --set synth.n_train=2 --set synth.n_val=1 --set model.channel_width=0.03125") == 0);
    // invalid size -> config error -> 2
    CHECK(run_binary("synth --out " + out + " --set synth.size=60") == 2);
    // unknown preset -> 2
    CHECK(run_binary("synth --config not_a_preset --out " + out) == 2);
    // eval against a missing checkpoint -> 3
    CHECK(run_binary("eval --ckpt " + (dir.path / "missing.eck").string() + " --manifest " + out +
                     "/manifest.json") == 3);
    // train against a missing manifest -> 3
    CHECK(run_binary("train --manifest " + (dir.path / "nope.json").string() + " --out " + out) == 3);
}

TEST_CASE("synth is byte reproducible through the CLI surface") {
    TempDir dir("egogan_cli_det");
    CliArgs a;
    a.config = mini_config(dir.path);
    a.config.set_override("synth.n_train", "3");
    a.config.set_override("synth.n_val", "1");
    a.out = (dir.path / "a").string();
    CliArgs b = a;
    b.out = (dir.path / "b").string();
    CHECK(cmd_synth(a) == 0);
    CHECK(cmd_synth(b) == 0);
    for (auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), dir.path / "a");
        CHECK(file_bytes(e.path()) == file_bytes(dir.path / "b" / rel));
    }
}
