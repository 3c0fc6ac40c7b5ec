#include <cstdio>

#include "CLI11.hpp"

#include "egogan/cli_commands.hpp"

// egogan <synth|train|eval|predict|visualize> [--config P] [--set k=v]...
// exit codes: 0 ok, 2 config error, 3 I/O error, 4 numeric failure

using namespace egogan;

int main(int argc, char** argv) {
    CLI::App app{"future hand segmentation from egocentric video"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_src = "desk";
    std::vector<std::string> overrides;
    long long seed = -1;
    CliArgs args;

    app.add_option("--config", config_src, "preset name (desk, paper-shape) or JSON config path");
    app.add_option("--set", overrides, "dotted-key override, e.g. model.variant=FCN3D");
    app.add_option("--seed", seed, "RNG seed (overrides config)");
    app.add_option("--manifest", args.manifest, "dataset manifest path");
    app.add_option("--ckpt", args.ckpt, "checkpoint path");
    app.add_option("--split", args.split, "dataset split (train|val)");
    app.add_option("--out", args.out, "output directory");
    app.add_option("--sample", args.sample, "record index for predict/visualize");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    auto* train = app.add_subcommand("train", "train a model");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    auto* predict = app.add_subcommand("predict", "write predicted mask PNGs for one sample");
    auto* visualize = app.add_subcommand("visualize", "write masks plus overlay PNGs for one sample");

    CLI11_PARSE(app, argc, argv);

    try {
        args.config = RunConfig::load(config_src);
        for (const std::string& kv : overrides) {
            const size_t eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            args.config.set_override(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed >= 0) args.config.set_seed(static_cast<u64>(seed));

        if (synth->parsed()) return cmd_synth(args);
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args);
        if (predict->parsed()) return cmd_predict(args, false);
        if (visualize->parsed()) return cmd_predict(args, true);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
}
