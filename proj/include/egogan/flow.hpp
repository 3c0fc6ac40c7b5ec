#pragma once

#include <functional>
#include <string>
#include <vector>

#include "egogan/png_io.hpp"
#include "egogan/tensor.hpp"

namespace egogan {

// Dense per-pixel flow in pixels/frame; (u, v) interleaved, row-major.
// Convention: a point at pixel p in the source frame appears at p + flow(p)
// in the target frame.
struct DenseFlow {
    int h = 0, w = 0;
    std::vector<float> uv;

    DenseFlow() = default;
    DenseFlow(int h_, int w_) : h(h_), w(w_), uv(static_cast<size_t>(h_) * w_ * 2, 0.f) {}

    float& u(int y, int x) { return uv[(static_cast<size_t>(y) * w + x) * 2]; }
    float& v(int y, int x) { return uv[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
    float u(int y, int x) const { return uv[(static_cast<size_t>(y) * w + x) * 2]; }
    float v(int y, int x) const { return uv[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
};

// One time slice of the /32 head-motion grid, same interleaving.
struct FlowGrid {
    int h = 0, w = 0;
    std::vector<float> uv;

    FlowGrid() = default;
    FlowGrid(int h_, int w_) : h(h_), w(w_), uv(static_cast<size_t>(h_) * w_ * 2, 0.f) {}

    float& u(int y, int x) { return uv[(static_cast<size_t>(y) * w + x) * 2]; }
    float& v(int y, int x) { return uv[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
    float u(int y, int x) const { return uv[(static_cast<size_t>(y) * w + x) * 2]; }
    float v(int y, int x) const { return uv[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
};

// raw little-endian file: "FLO1", int32 h, int32 w, h*w*2 float32
void write_flo(const std::string& path, const DenseFlow& flow);
DenseFlow read_flo(const std::string& path);

// Per 32x32 cell: mean flow over non-hand pixels; a fully-hand cell falls
// back to the mean over all of its pixels.
FlowGrid sparsify_flow(const DenseFlow& dense, const ImageU8& hand_mask);

// divide by scale then clamp to [-1, 1]
FlowGrid normalize_flow(const FlowGrid& grid, float scale);
FlowGrid denormalize_flow(const FlowGrid& grid, float scale);

// the 4 sampled instants t + ceil(k * delta3 / 4), k = 1..4
std::vector<int> anticipation_instants(int delta3, int count = 4);

// Assembles the real head-motion map: for each sampled transition, the
// dense flow between consecutive instants is sparsified against the
// source-frame hand mask, normalized, and stacked into a [2, 4, h, w] tensor.
using FlowBetweenFn = std::function<DenseFlow(int from_frame, int to_frame)>;
using MaskAtFn = std::function<ImageU8(int frame)>;
Tensor<float> sample_future_flows(const FlowBetweenFn& flow_between, const MaskAtFn& mask_at, int t, int delta3,
                                  float scale);

// stack normalized slices into the model's [2, T, h, w] layout
Tensor<float> stack_flow_slices(const std::vector<FlowGrid>& slices);

// mean endpoint error in pixel units between two [2, T, h, w] maps holding
// normalized values; both are denormalized by `scale` before comparison
double epe(const Tensor<float>& pred, const Tensor<float>& gt, float scale);

} // namespace egogan
