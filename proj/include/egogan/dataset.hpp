#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "egogan/flow.hpp"
#include "egogan/rng.hpp"
#include "egogan/tensor.hpp"

namespace egogan {

struct SampleRecord {
    std::string video;
    int t = 0;            // observation frame (last input frame)
    int first_frame = 0;  // earliest frame on disk; inputs clamp here
    int action_start = 0; // t + delta3 + 1
    std::vector<std::string> target_masks, target_frames;
    std::vector<std::string> window_masks, window_flows;
    std::vector<std::array<int, 2>> window_transitions;
};

struct DatasetManifest {
    std::string root; // directory holding manifest.json
    double fps = 0;
    float flow_scale = 0;
    std::array<int, 3> deltas = {0, 0, 0};
    int frame_h = 0, frame_w = 0;
    std::vector<SampleRecord> train, val;
    std::string provenance_json; // verbatim provenance block

    const std::vector<SampleRecord>& split(const std::string& name) const;
    std::string path(const std::string& rel) const;
};

DatasetManifest read_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path, const DatasetManifest& m);
// checks that every referenced file exists; throws IoError naming the path
void validate_manifest_files(const DatasetManifest& m);

// decoded but untransformed sample data
struct RawSample {
    std::vector<ImageU8> input_frames; // 8 RGB frames, stride-8 window ending at t
    std::vector<ImageU8> target_masks; // 3 binary masks
    std::vector<ImageU8> window_masks; // flow-source masks
    std::vector<DenseFlow> window_flows;
    std::vector<int> window_len; // frames spanned by each transition
};

RawSample load_raw_sample(const DatasetManifest& m, const SampleRecord& rec);

struct SampleTensors {
    Tensor<float> clip;    // [3, 8, H, W]
    Tensor<float> gt;      // [1, 3, H, W] binary
    Tensor<float> m_real;  // [2, 4, H/32, W/32] normalized
};

struct AugmentConfig {
    bool enabled = true;
    bool flip = true;
    double max_rot_deg = 8.0;
    double jitter = 0.1;
};

struct AugmentParams {
    bool flip = false;
    double angle = 0.0; // radians
    int crop_y = 0, crop_x = 0;
    int out_h = 0, out_w = 0; // crop size; 0 means full frame
    double brightness = 0.0;  // additive, [0,1] space
    double contrast = 1.0;

    bool identity() const {
        return !flip && angle == 0.0 && crop_y == 0 && crop_x == 0 && brightness == 0.0 && contrast == 1.0;
    }
};

AugmentParams draw_augment(Rng& rng, const AugmentConfig& cfg, int in_h, int in_w, int out_h, int out_w);

// one consistent geometric transform for frames, masks, and flow; color
// jitter on frames only
ImageU8 augment_frame(const ImageU8& img, const AugmentParams& p);
ImageU8 augment_mask(const ImageU8& mask, const AugmentParams& p);
DenseFlow augment_flow(const DenseFlow& flow, const AugmentParams& p);
RawSample augment_sample(const RawSample& raw, const AugmentParams& p);

// tensor assembly; sparsifies, normalizes (per-frame velocity), stacks m_r
SampleTensors assemble_sample(const RawSample& raw, float flow_scale);

// spec-level op: decode + assemble without augmentation
SampleTensors sample_clip(const DatasetManifest& m, const SampleRecord& rec);

// the stride-8 input frame indices for a record, first-frame padded
std::vector<int> input_frame_indices(const SampleRecord& rec);

// all-splits in-memory cache for training/eval drivers
struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<RawSample> train, val;
};

LoadedDataset load_dataset(const std::string& manifest_path, bool preload_train = true, bool preload_val = true);

} // namespace egogan
