#pragma once

#include <string>

#include "egogan/config.hpp"

namespace egogan {

// Command implementations shared by the CLI binary and the test suites.
// They throw ConfigError / IoError / NumericError; main maps those to exit
// codes 2 / 3 / 4.

struct CliArgs {
    RunConfig config;
    std::string manifest; // dataset manifest path (empty: config default)
    std::string ckpt;
    std::string split = "val";
    std::string out = ".";
    i64 sample = 0; // record index for predict/visualize
};

int cmd_synth(const CliArgs& args);
int cmd_train(const CliArgs& args);
int cmd_eval(const CliArgs& args);
int cmd_predict(const CliArgs& args, bool overlays);

// batch assembly shared with tests: deterministic per (seed, epoch, index)
Batch<float> make_batch(const LoadedDataset& ds, const std::vector<i64>& indices, i64 epoch, u64 seed,
                        const AugmentConfig& aug);

int exit_code_for(const std::exception& e);

} // namespace egogan
