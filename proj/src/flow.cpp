#include "egogan/flow.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace egogan {

static_assert(std::endian::native == std::endian::little, "FLO1 and checkpoint files assume a little-endian host");

void write_flo(const std::string& path, const DenseFlow& flow) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_flo: cannot open " + path);
    f.write("FLO1", 4);
    const int32_t dims[2] = {static_cast<int32_t>(flow.h), static_cast<int32_t>(flow.w)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(flow.uv.data()),
            static_cast<std::streamsize>(flow.uv.size() * sizeof(float)));
    if (!f) throw IoError("write_flo: write failed for " + path);
}

DenseFlow read_flo(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_flo: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "FLO1", 4) != 0) throw IoError("read_flo: bad magic in " + path);
    int32_t dims[2] = {0, 0};
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f || dims[0] <= 0 || dims[1] <= 0) throw IoError("read_flo: bad dimensions in " + path);
    DenseFlow flow(dims[0], dims[1]);
    f.read(reinterpret_cast<char*>(flow.uv.data()), static_cast<std::streamsize>(flow.uv.size() * sizeof(float)));
    if (!f) throw IoError("read_flo: truncated data in " + path);
    return flow;
}

FlowGrid sparsify_flow(const DenseFlow& dense, const ImageU8& hand_mask) {
    if (dense.h % 32 != 0 || dense.w % 32 != 0)
        throw ConfigError("sparsify_flow: dimensions must be divisible by 32 (got " + std::to_string(dense.h) + "x" +
                          std::to_string(dense.w) + ")");
    if (hand_mask.h != dense.h || hand_mask.w != dense.w || hand_mask.channels != 1)
        throw ConfigError("sparsify_flow: mask must be single-channel and match the flow dimensions");
    const int gh = dense.h / 32, gw = dense.w / 32;
    FlowGrid grid(gh, gw);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            double su = 0, sv = 0, su_all = 0, sv_all = 0;
            int n_bg = 0;
            for (int y = gy * 32; y < (gy + 1) * 32; ++y)
                for (int x = gx * 32; x < (gx + 1) * 32; ++x) {
                    const float u = dense.u(y, x), v = dense.v(y, x);
                    su_all += u;
                    sv_all += v;
                    if (hand_mask.at(y, x) == 0) {
                        su += u;
                        sv += v;
                        ++n_bg;
                    }
                }
            if (n_bg > 0) {
                grid.u(gy, gx) = static_cast<float>(su / n_bg);
                grid.v(gy, gx) = static_cast<float>(sv / n_bg);
            } else {
                grid.u(gy, gx) = static_cast<float>(su_all / (32.0 * 32.0));
                grid.v(gy, gx) = static_cast<float>(sv_all / (32.0 * 32.0));
            }
        }
    return grid;
}

FlowGrid normalize_flow(const FlowGrid& grid, float scale) {
    if (!(scale > 0)) throw ConfigError("normalize_flow: scale must be positive");
    FlowGrid out = grid;
    for (float& v : out.uv) v = std::clamp(v / scale, -1.0f, 1.0f);
    return out;
}

FlowGrid denormalize_flow(const FlowGrid& grid, float scale) {
    if (!(scale > 0)) throw ConfigError("denormalize_flow: scale must be positive");
    FlowGrid out = grid;
    for (float& v : out.uv) v *= scale;
    return out;
}

std::vector<int> anticipation_instants(int delta3, int count) {
    if (delta3 < count)
        throw ConfigError("anticipation_instants: window of " + std::to_string(delta3) + " frames is shorter than " +
                          std::to_string(count) + " samples");
    std::vector<int> instants(static_cast<size_t>(count));
    for (int k = 1; k <= count; ++k)
        instants[static_cast<size_t>(k - 1)] = (k * delta3 + count - 1) / count; // ceil(k*delta3/count)
    return instants;
}

Tensor<float> stack_flow_slices(const std::vector<FlowGrid>& slices) {
    if (slices.empty()) throw ConfigError("stack_flow_slices: no slices");
    const i64 T = static_cast<i64>(slices.size());
    const i64 h = slices[0].h, w = slices[0].w;
    Tensor<float> out({2, T, h, w});
    for (i64 t = 0; t < T; ++t) {
        const FlowGrid& g = slices[static_cast<size_t>(t)];
        if (g.h != h || g.w != w) throw ConfigError("stack_flow_slices: slice dimensions differ");
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x) {
                out[(0 * T + t) * h * w + y * w + x] = g.u(static_cast<int>(y), static_cast<int>(x));
                out[(1 * T + t) * h * w + y * w + x] = g.v(static_cast<int>(y), static_cast<int>(x));
            }
    }
    return out;
}

Tensor<float> sample_future_flows(const FlowBetweenFn& flow_between, const MaskAtFn& mask_at, int t, int delta3,
                                  float scale) {
    const std::vector<int> instants = anticipation_instants(delta3);
    std::vector<FlowGrid> slices;
    slices.reserve(instants.size());
    int prev = t;
    for (int offset : instants) {
        const int cur = t + offset;
        DenseFlow dense = flow_between(prev, cur);
        // transitions span different frame counts when the window does not
        // divide evenly; per-frame velocity keeps the slices in one unit
        const float inv_len = 1.0f / static_cast<float>(cur - prev);
        for (float& v : dense.uv) v *= inv_len;
        ImageU8 mask = mask_at(prev);
        slices.push_back(normalize_flow(sparsify_flow(dense, mask), scale));
        prev = cur;
    }
    return stack_flow_slices(slices);
}

double epe(const Tensor<float>& pred, const Tensor<float>& gt, float scale) {
    if (!pred.same_shape(gt)) throw ConfigError("epe: shape mismatch " + pred.shape_str() + " vs " + gt.shape_str());
    if (pred.dim() < 4) throw ConfigError("epe: expected a [2, T, h, w] flow map");
    const i64 ch_dim = pred.dim() == 5 ? 1 : 0;
    if (pred.size(ch_dim) != 2) throw ConfigError("epe: flow maps must have 2 channels");
    const i64 N = pred.dim() == 5 ? pred.size(0) : 1;
    const i64 cells = pred.numel() / (N * 2);
    double total = 0;
    for (i64 n = 0; n < N; ++n) {
        const float* pu = pred.ptr() + n * 2 * cells;
        const float* gu = gt.ptr() + n * 2 * cells;
        for (i64 i = 0; i < cells; ++i) {
            const double du = static_cast<double>(scale) * (pu[i] - gu[i]);
            const double dv = static_cast<double>(scale) * (pu[cells + i] - gu[cells + i]);
            total += std::sqrt(du * du + dv * dv);
        }
    }
    return total / static_cast<double>(N * cells);
}

} // namespace egogan
