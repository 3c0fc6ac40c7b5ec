#pragma once

#include <array>
#include <string>

#include "egogan/flow.hpp"
#include "egogan/rng.hpp"

namespace egogan {

// Synthetic egocentric scenes: a textured plane scrolled by a smooth camera
// trajectory (the "head"), with two elliptical hand blobs whose image motion
// is coupled to the camera motion, so future head motion carries information
// about future hand placement.
struct SynthConfig {
    int n_train = 500;
    int n_val = 100;
    int size = 64; // square frames
    std::array<int, 3> deltas = {1, 6, 12};
    double fps = 24.0;
    float flow_scale = 5.0f; // pixels/frame mapped to 1.0
    double correlation = 0.8; // share of hand motion driven by the camera
    double cam_speed = 2.6;   // peak sinusoidal camera speed, pixels/frame
    double cam_drift = 0.7;   // drift scale, pixels/frame (downward-biased)
    // camera velocity periods: short enough to turn inside the anticipation
    // window, long enough that the stride-8 input can read the phase
    double cam_period_min = 36.0;
    double cam_period_max = 72.0;
    int hand_lag = 6;            // frames of camera travel the hands track
    double hand_coupling = 1.2;  // offset per pixel of lagged camera travel
    double wobble_amp = 3.0;     // own-motion amplitude, pixels
    double short_history_prob = 0.08;

    void validate() const {
        if (size % 32 != 0) throw ConfigError("synth: frame size must be divisible by 32");
        if (!(deltas[0] < deltas[1] && deltas[1] < deltas[2])) throw ConfigError("synth: deltas must increase");
        if (deltas[2] < 4) throw ConfigError("synth: long horizon must allow 4 flow samples");
        if (correlation < 0 || correlation > 1) throw ConfigError("synth: correlation must be in [0,1]");
        if (n_train < 1 || n_val < 1) throw ConfigError("synth: need at least one sample per split");
    }
};

// Analytic scene description for one clip; all quantities are pure functions
// of (seed, video index), so regeneration is bitwise identical.
struct SceneParams {
    struct Sinusoid {
        double amp, period, phase;
    };
    std::array<std::vector<Sinusoid>, 2> cam; // per axis
    std::array<double, 2> drift;
    struct Hand {
        double anchor_x, anchor_y;
        double rx, ry, tilt;
        std::array<std::vector<Sinusoid>, 2> wobble;
    };
    std::array<Hand, 2> hands;
    double correlation, coupling;
    int lag;
    u64 tex_seed;
    std::array<float, 3> base_color;
    float contrast;
};

SceneParams make_scene(u64 dataset_seed, int video_index, const SynthConfig& cfg);

// camera position at (possibly fractional) frame time
std::array<double, 2> camera_pos(const SceneParams& sp, double f);
// hand center in image coordinates
std::array<double, 2> hand_center(const SceneParams& sp, int hand, double f, int size);

ImageU8 render_frame(const SceneParams& sp, int f, int size);
ImageU8 render_hand_mask(const SceneParams& sp, int f, int size);
// flow from frame a to frame b: camera flow on background, hand displacement
// under hand pixels of frame a
DenseFlow render_flow(const SceneParams& sp, int a, int b, int size);

// writes frames/masks/flows plus manifest.json under root; returns the
// manifest path
std::string synth_generate(const std::string& root, u64 seed, const SynthConfig& cfg);

} // namespace egogan
