#pragma once

#include <string>

#include "json.hpp"

#include "egogan/dataset.hpp"
#include "egogan/model.hpp"
#include "egogan/synth.hpp"
#include "egogan/trainer.hpp"

namespace egogan {

// JSON-backed run configuration: a preset or file, plus dotted-key overrides
// from the command line. The full tree is serialized into every artifact.
struct RunConfig {
    nlohmann::json j;

    static RunConfig preset(const std::string& name);
    // `source` is a preset name or a path to a JSON file
    static RunConfig load(const std::string& source);

    void set_override(const std::string& dotted_key, const std::string& value);
    void set_seed(u64 seed);

    u64 seed() const;
    ModelConfig model_config() const;
    TrainHp train_hp() const;
    SynthConfig synth_config() const;
    AugmentConfig augment_config() const;
    double metrics_threshold() const;
    std::string default_manifest() const;
    i64 checkpoint_every() const;

    std::string dump(int indent = -1) const { return j.dump(indent); }
    nlohmann::json provenance(const std::string& tool) const;
};

} // namespace egogan
