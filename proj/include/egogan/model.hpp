#pragma once

#include <array>
#include <map>
#include <optional>

#include "egogan/nn.hpp"

namespace egogan {

enum class Variant { EGOGAN, FCN3D, HEADREG, PIXELGAN, HEADDIR, ZEROMOTION };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::EGOGAN: return "EGOGAN";
        case Variant::FCN3D: return "FCN3D";
        case Variant::HEADREG: return "HEADREG";
        case Variant::PIXELGAN: return "PIXELGAN";
        case Variant::HEADDIR: return "HEADDIR";
        case Variant::ZEROMOTION: return "ZEROMOTION";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    for (Variant v : {Variant::EGOGAN, Variant::FCN3D, Variant::HEADREG, Variant::PIXELGAN, Variant::HEADDIR,
                      Variant::ZEROMOTION})
        if (s == variant_name(v)) return v;
    throw ConfigError("unknown variant: " + s);
}

struct ModelConfig {
    i64 frames = 8;
    i64 height = 224;
    i64 width = 224;
    double channel_width = 1.0; // uniform multiplier on every channel count
    double lambda_l1 = 1.0;     // weight of the L1 term in the generator loss
    Variant variant = Variant::EGOGAN;
    bool discriminator_adapt = true; // resample non-native grids onto 7x7
    double pixelgan_adv_weight = 1.0;

    static constexpr int kHorizons = 3;
    static constexpr int kFlowFrames = 4;

    void validate() const {
        if (height % 32 != 0 || width % 32 != 0) throw ConfigError("model: height and width must be divisible by 32");
        if (frames % 2 != 0) throw ConfigError("model: frame count must be even");
        if (frames != 8) throw ConfigError("model: temporal reduction head requires exactly 8 input frames");
        if (channel_width <= 0) throw ConfigError("model: channel width multiplier must be positive");
        if (lambda_l1 < 0) throw ConfigError("model: lambda_l1 must be nonnegative");
    }

    i64 ch(i64 base) const {
        const double scaled = std::ceil(static_cast<double>(base) * channel_width);
        return std::max<i64>(1, static_cast<i64>(scaled));
    }

    i64 flow_t() const { return kFlowFrames; }
    i64 flow_h() const { return height / 32; }
    i64 flow_w() const { return width / 32; }
};

// Named shape observed during a traced forward; ids follow the architecture
// table used by the shape-conformance test.
struct TraceRow {
    int id;
    std::string name;
    std::vector<i64> dims; // [T, H, W, C] order, batch omitted
};

inline void trace_push(std::vector<TraceRow>* tr, int id, const std::string& name, const std::vector<i64>& ncthw) {
    if (!tr) return;
    tr->push_back({id, name, {ncthw[2], ncthw[3], ncthw[4], ncthw[1]}});
}

namespace nn {

// ---------------------------------------------------------------------------
// Residual bottleneck: 3x1x1 -> 1x3x3 (spatial stride) -> 1x1x1, BN after
// each conv, projection shortcut when shape changes.
// ---------------------------------------------------------------------------

template <class T>
struct Bottleneck {
    Conv3d<T> conv1, conv2, conv3;
    BatchNorm3d<T> bn1, bn2, bn3;
    ReLU<T> relu1, relu2, relu_out;
    bool has_proj = false;
    Conv3d<T> proj;
    BatchNorm3d<T> proj_bn;

    Bottleneck() = default;
    Bottleneck(i64 in_c, i64 planes, i64 out_c, int spatial_stride) {
        conv1 = Conv3d<T>(in_c, planes, {3, 1, 1}, {1, 1, 1}, {1, 0, 0});
        bn1 = BatchNorm3d<T>(planes);
        conv2 = Conv3d<T>(planes, planes, {1, 3, 3}, {1, spatial_stride, spatial_stride}, {0, 1, 1});
        bn2 = BatchNorm3d<T>(planes);
        conv3 = Conv3d<T>(planes, out_c, {1, 1, 1});
        bn3 = BatchNorm3d<T>(out_c);
        has_proj = in_c != out_c || spatial_stride != 1;
        if (has_proj) {
            proj = Conv3d<T>(in_c, out_c, {1, 1, 1}, {1, spatial_stride, spatial_stride});
            proj_bn = BatchNorm3d<T>(out_c);
        }
    }

    void init(Rng& rng) {
        conv1.init_he(rng);
        conv2.init_he(rng);
        conv3.init_he(rng);
        if (has_proj) proj.init_he(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) {
        Tensor<T> y = relu1.forward(bn1.forward(conv1.forward(x, ctx), ctx), ctx);
        y = relu2.forward(bn2.forward(conv2.forward(y, ctx), ctx), ctx);
        y = bn3.forward(conv3.forward(y, ctx), ctx);
        if (has_proj)
            add_inplace(y, proj_bn.forward(proj.forward(x, ctx), ctx));
        else
            add_inplace(y, x);
        return relu_out.forward(y, ctx);
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gz = relu_out.backward(gy);
        Tensor<T> gmain = conv3.backward(bn3.backward(gz));
        gmain = conv2.backward(bn2.backward(relu2.backward(gmain)));
        gmain = conv1.backward(bn1.backward(relu1.backward(gmain)));
        if (has_proj) {
            Tensor<T> gres = proj.backward(proj_bn.backward(gz));
            add_inplace(gmain, gres);
        } else {
            add_inplace(gmain, gz);
        }
        return gmain;
    }

    void collect(const std::string& p, std::vector<ParamRef<T>>& out) {
        conv1.collect(p + ".conv1", out);
        bn1.collect(p + ".bn1", out);
        conv2.collect(p + ".conv2", out);
        bn2.collect(p + ".bn2", out);
        conv3.collect(p + ".conv3", out);
        bn3.collect(p + ".bn3", out);
        if (has_proj) {
            proj.collect(p + ".proj", out);
            proj_bn.collect(p + ".proj_bn", out);
        }
    }

    void collect_buffers(const std::string& p, std::vector<BufferRef<T>>& out) {
        bn1.collect_buffers(p + ".bn1", out);
        bn2.collect_buffers(p + ".bn2", out);
        bn3.collect_buffers(p + ".bn3", out);
        if (has_proj) proj_bn.collect_buffers(p + ".proj_bn", out);
    }

    void commit_bn() {
        bn1.commit();
        bn2.commit();
        bn3.commit();
        if (has_proj) proj_bn.commit();
    }
};

// ---------------------------------------------------------------------------
// Encoder: stem + two max-pools + four bottleneck stages; keeps the five
// feature levels that the decoder taps.
// ---------------------------------------------------------------------------

template <class T>
struct FeaturePyramid {
    // level[0] after pool1, level[1] after pool2, then stage outputs;
    // level[4] is the bottleneck fed to the generator / decoder.
    std::array<Tensor<T>, 5> level;
};

template <class T>
struct Encoder {
    Conv3d<T> stem;
    BatchNorm3d<T> stem_bn;
    ReLU<T> stem_relu;
    MaxPool3d<T> pool1, pool2;
    std::vector<Bottleneck<T>> layer1, layer2, layer3, layer4;

    Encoder() = default;
    explicit Encoder(const ModelConfig& cfg) {
        const i64 c64 = cfg.ch(64), c256 = cfg.ch(256), c512 = cfg.ch(512), c1024 = cfg.ch(1024),
                  c2048 = cfg.ch(2048);
        stem = Conv3d<T>(3, c64, {5, 7, 7}, {1, 2, 2}, {2, 3, 3});
        stem.skip_input_grad = true; // the clip itself never needs gradients
        stem_bn = BatchNorm3d<T>(c64);
        pool1 = MaxPool3d<T>({1, 3, 3}, {1, 2, 2}, {0, 1, 1});
        pool2 = MaxPool3d<T>({2, 1, 1}, {2, 1, 1});
        auto make_stage = [&](std::vector<Bottleneck<T>>& stage, int blocks, i64 in_c, i64 planes, i64 out_c,
                              int stride0) {
            stage.emplace_back(in_c, planes, out_c, stride0);
            for (int i = 1; i < blocks; ++i) stage.emplace_back(out_c, planes, out_c, 1);
        };
        make_stage(layer1, 3, c64, c64, c256, 1);
        make_stage(layer2, 4, c256, cfg.ch(128), c512, 2);
        make_stage(layer3, 6, c512, cfg.ch(256), c1024, 2);
        make_stage(layer4, 3, c1024, cfg.ch(512), c2048, 2);
    }

    void init(Rng& rng) {
        stem.init_he(rng);
        for (auto* stage : {&layer1, &layer2, &layer3, &layer4})
            for (auto& b : *stage) b.init(rng);
    }

    FeaturePyramid<T> forward(const Tensor<T>& x, const FwdCtx& ctx, std::vector<TraceRow>* tr = nullptr) {
        FeaturePyramid<T> pyr;
        Tensor<T> y = stem_relu.forward(stem_bn.forward(stem.forward(x, ctx), ctx), ctx);
        trace_push(tr, 1, "encoder.stem", y.shape);
        pyr.level[0] = pool1.forward(y, ctx);
        trace_push(tr, 2, "encoder.pool1", pyr.level[0].shape);
        y = layer1[0].forward(pyr.level[0], ctx);
        for (size_t i = 1; i < layer1.size(); ++i) y = layer1[i].forward(y, ctx);
        trace_push(tr, 3, "encoder.layer1", y.shape);
        pyr.level[1] = pool2.forward(y, ctx);
        trace_push(tr, 4, "encoder.pool2", pyr.level[1].shape);
        y = layer2[0].forward(pyr.level[1], ctx);
        trace_push(tr, 5, "encoder.layer2.b0", y.shape);
        for (size_t i = 1; i < layer2.size(); ++i) y = layer2[i].forward(y, ctx);
        trace_push(tr, 6, "encoder.layer2", y.shape);
        pyr.level[2] = std::move(y);
        y = layer3[0].forward(pyr.level[2], ctx);
        trace_push(tr, 7, "encoder.layer3.b0", y.shape);
        for (size_t i = 1; i < layer3.size(); ++i) y = layer3[i].forward(y, ctx);
        trace_push(tr, 8, "encoder.layer3", y.shape);
        pyr.level[3] = std::move(y);
        y = layer4[0].forward(pyr.level[3], ctx);
        trace_push(tr, 9, "encoder.layer4.b0", y.shape);
        for (size_t i = 1; i < layer4.size(); ++i) y = layer4[i].forward(y, ctx);
        trace_push(tr, 10, "encoder.layer4", y.shape);
        pyr.level[4] = std::move(y);
        return pyr;
    }

    // grads: per-level gradients (any entry may be empty); returns grad wrt input
    Tensor<T> backward(std::array<Tensor<T>, 5>& grads) {
        auto add_maybe = [](Tensor<T>& g, const Tensor<T>& extra) {
            if (extra.numel() > 0) add_inplace(g, extra);
        };
        Tensor<T> g = std::move(grads[4]);
        for (auto it = layer4.rbegin(); it != layer4.rend(); ++it) g = it->backward(g);
        add_maybe(g, grads[3]);
        for (auto it = layer3.rbegin(); it != layer3.rend(); ++it) g = it->backward(g);
        add_maybe(g, grads[2]);
        for (auto it = layer2.rbegin(); it != layer2.rend(); ++it) g = it->backward(g);
        add_maybe(g, grads[1]);
        g = pool2.backward(g);
        for (auto it = layer1.rbegin(); it != layer1.rend(); ++it) g = it->backward(g);
        add_maybe(g, grads[0]);
        g = pool1.backward(g);
        return stem.backward(stem_bn.backward(stem_relu.backward(g)));
    }

    void collect(std::vector<ParamRef<T>>& out) {
        stem.collect("encoder.stem", out);
        stem_bn.collect("encoder.stem_bn", out);
        auto stage = [&](std::vector<Bottleneck<T>>& s, const std::string& name) {
            for (size_t i = 0; i < s.size(); ++i) s[i].collect("encoder." + name + ".b" + std::to_string(i), out);
        };
        stage(layer1, "layer1");
        stage(layer2, "layer2");
        stage(layer3, "layer3");
        stage(layer4, "layer4");
    }

    void collect_buffers(std::vector<BufferRef<T>>& out) {
        stem_bn.collect_buffers("encoder.stem_bn", out);
        auto stage = [&](std::vector<Bottleneck<T>>& s, const std::string& name) {
            for (size_t i = 0; i < s.size(); ++i)
                s[i].collect_buffers("encoder." + name + ".b" + std::to_string(i), out);
        };
        stage(layer1, "layer1");
        stage(layer2, "layer2");
        stage(layer3, "layer3");
        stage(layer4, "layer4");
    }

    void commit_bn() {
        stem_bn.commit();
        for (auto* stage : {&layer1, &layer2, &layer3, &layer4})
            for (auto& b : *stage) b.commit_bn();
    }
};

// ---------------------------------------------------------------------------
// Generator: three pointwise conv stages narrowing to 2 flow channels + tanh
// ---------------------------------------------------------------------------

template <class T>
struct Generator {
    Conv3d<T> conv1, conv2, conv3;
    ReLU<T> relu1, relu2;
    Tanh<T> tanh;

    Generator() = default;
    explicit Generator(const ModelConfig& cfg) {
        conv1 = Conv3d<T>(cfg.ch(2048), cfg.ch(1024), {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, true);
        conv2 = Conv3d<T>(cfg.ch(1024), cfg.ch(512), {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, true);
        conv3 = Conv3d<T>(cfg.ch(512), 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, true);
    }

    void init(Rng& rng) {
        conv1.init_he(rng);
        conv2.init_he(rng);
        conv3.init_he(rng);
    }

    Tensor<T> forward(const Tensor<T>& bottleneck, const FwdCtx& ctx, std::vector<TraceRow>* tr = nullptr) {
        Tensor<T> y = relu1.forward(conv1.forward(bottleneck, ctx), ctx);
        trace_push(tr, 11, "generator.conv1", y.shape);
        y = relu2.forward(conv2.forward(y, ctx), ctx);
        trace_push(tr, 12, "generator.conv2", y.shape);
        y = conv3.forward(y, ctx);
        trace_push(tr, 13, "generator.conv3", y.shape);
        y = tanh.forward(y, ctx);
        trace_push(tr, 14, "generator.tanh", y.shape);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> g = conv3.backward(tanh.backward(gy));
        g = conv2.backward(relu2.backward(g));
        return conv1.backward(relu1.backward(g));
    }

    void collect(std::vector<ParamRef<T>>& out) {
        conv1.collect("generator.conv1", out);
        conv2.collect("generator.conv2", out);
        conv3.collect("generator.conv3", out);
    }
};

// ---------------------------------------------------------------------------
// Discriminator: three unpadded 1x3x3 stages (the last temporally strided),
// global average pool, linear, sigmoid. The conv stack is native to a 7x7
// grid; other spatial sizes are resampled onto it when adaptation is on.
// ---------------------------------------------------------------------------

template <class T>
struct Discriminator {
    i64 in_c = 2;
    bool adapt = true;
    Conv3d<T> conv1, conv2, conv3;
    ReLU<T> relu1, relu2, relu3;
    AdaptiveAvgPool3d<T> resize_pool, gap;
    Sigmoid<T> sigmoid;
    Linear<T> fc;
    bool resized_ = false;
    i64 feat_c_ = 0;
    std::vector<i64> gap_in_shape_;

    Discriminator() = default;
    Discriminator(const ModelConfig& cfg, i64 input_channels) : in_c(input_channels), adapt(cfg.discriminator_adapt) {
        conv1 = Conv3d<T>(in_c, cfg.ch(32), {1, 3, 3}, {1, 1, 1}, {0, 0, 0}, true);
        conv2 = Conv3d<T>(cfg.ch(32), cfg.ch(64), {1, 3, 3}, {1, 1, 1}, {0, 0, 0}, true);
        conv3 = Conv3d<T>(cfg.ch(64), cfg.ch(128), {1, 3, 3}, {2, 1, 1}, {0, 0, 0}, true);
        feat_c_ = cfg.ch(128);
        fc = Linear<T>(feat_c_, 1);
        gap = AdaptiveAvgPool3d<T>({1, 1, 1});
    }

    void init(Rng& rng) {
        conv1.init_he(rng);
        conv2.init_he(rng);
        conv3.init_he(rng);
        fc.init_he(rng);
    }

    // returns probability-of-real per sample: [N, 1]
    Tensor<T> forward(const Tensor<T>& m, const FwdCtx& ctx, std::vector<TraceRow>* tr = nullptr) {
        Tensor<T> x = m;
        if (x.size(3) != 7 || x.size(4) != 7) {
            if (!adapt)
                throw ConfigError("discriminator: input spatial dims must be at least 7x7 for the unpadded conv "
                                  "stack (got " +
                                  std::to_string(x.size(3)) + "x" + std::to_string(x.size(4)) + ")");
            // keep the pool object alive: a no-grad pass must not clobber
            // the shapes a pending backward depends on
            resize_pool.out = {static_cast<int>(x.size(2)), 7, 7};
            x = resize_pool.forward(x, ctx);
            if (ctx.keep) resized_ = true;
        } else if (ctx.keep) {
            resized_ = false;
        }
        Tensor<T> y = relu1.forward(conv1.forward(x, ctx), ctx);
        trace_push(tr, 15, "discriminator.conv1", y.shape);
        y = relu2.forward(conv2.forward(y, ctx), ctx);
        trace_push(tr, 16, "discriminator.conv2", y.shape);
        y = relu3.forward(conv3.forward(y, ctx), ctx);
        trace_push(tr, 17, "discriminator.conv3", y.shape);
        gap_in_shape_ = y.shape;
        y = gap.forward(y, ctx);
        trace_push(tr, 18, "discriminator.gap", y.shape);
        Tensor<T> flat = y.reshaped({y.size(0), feat_c_});
        Tensor<T> logits = fc.forward(flat, ctx);
        if (tr) tr->push_back({19, "discriminator.fc", {logits.size(1)}});
        Tensor<T> probs = sigmoid.forward(logits, ctx);
        if (tr) tr->push_back({20, "discriminator.sigmoid", {probs.size(1)}});
        return probs;
    }

    // g wrt probabilities -> grad wrt discriminator input
    Tensor<T> backward(const Tensor<T>& g_probs) {
        Tensor<T> g = fc.backward(sigmoid.backward(g_probs));
        g = g.reshaped({g.size(0), feat_c_, 1, 1, 1});
        g = gap.backward(g);
        g = conv3.backward(relu3.backward(g));
        g = conv2.backward(relu2.backward(g));
        g = conv1.backward(relu1.backward(g));
        if (resized_) g = resize_pool.backward(g);
        return g;
    }

    void collect(std::vector<ParamRef<T>>& out, const std::string& prefix = "discriminator") {
        conv1.collect(prefix + ".conv1", out);
        conv2.collect(prefix + ".conv2", out);
        conv3.collect(prefix + ".conv3", out);
        fc.collect(prefix + ".fc", out);
    }
};

// ---------------------------------------------------------------------------
// Decoder: five transposed-conv stages with additive skips, then the
// temporal-reduction head squeezing T=8 down to the 3 horizon slices.
// ---------------------------------------------------------------------------

template <class T>
struct Decoder {
    struct Stage {
        ConvTranspose3d<T> deconv;
        BatchNorm3d<T> bn;
        ReLU<T> relu;
    };
    std::array<Stage, 5> stages;
    Conv3d<T> tconv1, tconv2, classifier;
    BatchNorm3d<T> tbn1, tbn2;
    ReLU<T> trelu1, trelu2;
    i64 bottleneck_c = 0; // encoder level-5 channels (before flow concat)

    Decoder() = default;
    explicit Decoder(const ModelConfig& cfg) {
        if (cfg.frames != 8) throw ConfigError("decoder: temporal reduction head requires exactly 8 input frames");
        bottleneck_c = cfg.ch(2048);
        const i64 c1024 = cfg.ch(1024), c512 = cfg.ch(512), c256 = cfg.ch(256), c64 = cfg.ch(64);
        auto up_spatial = [](i64 in, i64 out2) {
            return ConvTranspose3d<T>(in, out2, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, {0, 1, 1});
        };
        stages[0].deconv = up_spatial(bottleneck_c + 2, c1024);
        stages[1].deconv = up_spatial(c1024, c512);
        stages[2].deconv = up_spatial(c512, c256);
        stages[3].deconv = ConvTranspose3d<T>(c256, c64, {3, 3, 3}, {2, 1, 1}, {1, 1, 1}, {1, 0, 0});
        stages[4].deconv = ConvTranspose3d<T>(c64, c64, {1, 5, 5}, {1, 4, 4}, {0, 1, 1}, {0, 1, 1});
        for (int i = 0; i < 5; ++i) stages[i].bn = BatchNorm3d<T>(stages[i].deconv.out_c);
        tconv1 = Conv3d<T>(c64, cfg.ch(32), {4, 1, 1});
        tbn1 = BatchNorm3d<T>(cfg.ch(32));
        tconv2 = Conv3d<T>(cfg.ch(32), cfg.ch(16), {3, 1, 1});
        tbn2 = BatchNorm3d<T>(cfg.ch(16));
        classifier = Conv3d<T>(cfg.ch(16), 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, true);
    }

    void init(Rng& rng) {
        for (auto& s : stages) s.deconv.init_he(rng);
        tconv1.init_he(rng);
        tconv2.init_he(rng);
        classifier.init_he(rng);
        classifier.b.zero();
    }

    static void check_skip(const Tensor<T>& dec, const Tensor<T>& enc, int stage, int enc_level) {
        if (!dec.same_shape(enc))
            throw ConfigError("decoder: skip shape mismatch between decoder stage " + std::to_string(stage) +
                              " output " + dec.shape_str() + " and encoder level " + std::to_string(enc_level) + " " +
                              enc.shape_str());
    }

    // returns horizon logits [N, 1, 3, H, W]
    Tensor<T> forward(const FeaturePyramid<T>& pyr, const Tensor<T>& m, const FwdCtx& ctx,
                      std::vector<TraceRow>* tr = nullptr) {
        if (m.size(1) != 2) throw ConfigError("decoder: head-motion map must have 2 channels");
        Tensor<T> x = concat_channels(pyr.level[4], m);
        auto run_stage = [&](int i, const Tensor<T>& in) {
            return stages[i].relu.forward(stages[i].bn.forward(stages[i].deconv.forward(in, ctx), ctx), ctx);
        };
        Tensor<T> y = run_stage(0, x);
        trace_push(tr, 21, "decoder.deconv1", y.shape);
        check_skip(y, pyr.level[3], 1, 4);
        add_inplace(y, pyr.level[3]);
        y = run_stage(1, y);
        trace_push(tr, 22, "decoder.deconv2", y.shape);
        check_skip(y, pyr.level[2], 2, 3);
        add_inplace(y, pyr.level[2]);
        y = run_stage(2, y);
        trace_push(tr, 23, "decoder.deconv3", y.shape);
        check_skip(y, pyr.level[1], 3, 2);
        add_inplace(y, pyr.level[1]);
        y = run_stage(3, y);
        trace_push(tr, 24, "decoder.deconv4", y.shape);
        check_skip(y, pyr.level[0], 4, 1);
        add_inplace(y, pyr.level[0]);
        y = run_stage(4, y);
        trace_push(tr, 25, "decoder.deconv5", y.shape);
        y = trelu1.forward(tbn1.forward(tconv1.forward(y, ctx), ctx), ctx);
        trace_push(tr, 26, "decoder.tconv1", y.shape);
        y = trelu2.forward(tbn2.forward(tconv2.forward(y, ctx), ctx), ctx);
        trace_push(tr, 27, "decoder.tconv2", y.shape);
        y = classifier.forward(y, ctx);
        trace_push(tr, 28, "decoder.classifier", y.shape);
        return y;
    }

    struct Grads {
        std::array<Tensor<T>, 5> pyramid; // grads wrt encoder levels
        Tensor<T> flow;                   // grad wrt the injected head-motion map
    };

    Grads backward(const Tensor<T>& g_logits) {
        Grads out;
        Tensor<T> g = classifier.backward(g_logits);
        g = tconv2.backward(tbn2.backward(trelu2.backward(g)));
        g = tconv1.backward(tbn1.backward(trelu1.backward(g)));
        auto back_stage = [&](int i, const Tensor<T>& gin) {
            return stages[i].deconv.backward(stages[i].bn.backward(stages[i].relu.backward(gin)));
        };
        g = back_stage(4, g);
        out.pyramid[0] = g; // skip add: same grad flows to encoder level 1
        g = back_stage(3, g);
        out.pyramid[1] = g;
        g = back_stage(2, g);
        out.pyramid[2] = g;
        g = back_stage(1, g);
        out.pyramid[3] = g;
        g = back_stage(0, g);
        split_channels(g, bottleneck_c, out.pyramid[4], out.flow);
        return out;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        for (int i = 0; i < 5; ++i) {
            stages[i].deconv.collect("decoder.deconv" + std::to_string(i + 1), out);
            stages[i].bn.collect("decoder.bn" + std::to_string(i + 1), out);
        }
        tconv1.collect("decoder.tconv1", out);
        tbn1.collect("decoder.tbn1", out);
        tconv2.collect("decoder.tconv2", out);
        tbn2.collect("decoder.tbn2", out);
        classifier.collect("decoder.classifier", out);
    }

    void collect_buffers(std::vector<BufferRef<T>>& out) {
        for (int i = 0; i < 5; ++i) stages[i].bn.collect_buffers("decoder.bn" + std::to_string(i + 1), out);
        tbn1.collect_buffers("decoder.tbn1", out);
        tbn2.collect_buffers("decoder.tbn2", out);
    }

    void commit_bn() {
        for (auto& s : stages) s.bn.commit();
        tbn1.commit();
        tbn2.commit();
    }
};

} // namespace nn

// ---------------------------------------------------------------------------
// Full model: owns the sub-networks a variant needs and wires the forward.
// ---------------------------------------------------------------------------

template <class T>
struct EgoGanModel {
    ModelConfig cfg;
    nn::Encoder<T> encoder;
    nn::Decoder<T> decoder;
    std::optional<nn::Generator<T>> generator;
    std::optional<nn::Discriminator<T>> discriminator; // flow D, or mask D for PIXELGAN
    nn::Sigmoid<T> out_sigmoid;

    explicit EgoGanModel(const ModelConfig& c) : cfg(c), encoder(c), decoder(c) {
        cfg.validate();
        if (cfg.variant == Variant::EGOGAN || cfg.variant == Variant::HEADREG) generator.emplace(cfg);
        if (cfg.variant == Variant::EGOGAN) discriminator.emplace(cfg, 2);
        if (cfg.variant == Variant::PIXELGAN) discriminator.emplace(cfg, 1);
    }

    void init(u64 seed) {
        Rng enc_rng = Rng::stream(seed, 0xE0C0DE);
        encoder.init(enc_rng);
        Rng dec_rng = Rng::stream(seed, 0xDEC0DE);
        decoder.init(dec_rng);
        if (generator) {
            Rng g_rng = Rng::stream(seed, 0x6E6E);
            generator->init(g_rng);
        }
        if (discriminator) {
            Rng d_rng = Rng::stream(seed, 0xD15C);
            discriminator->init(d_rng);
        }
    }

    bool uses_generator() const { return generator.has_value(); }
    bool uses_flow_discriminator() const { return cfg.variant == Variant::EGOGAN; }
    bool uses_mask_discriminator() const { return cfg.variant == Variant::PIXELGAN; }

    Tensor<T> zero_flow(i64 batch) const {
        return Tensor<T>({batch, 2, cfg.flow_t(), cfg.flow_h(), cfg.flow_w()});
    }

    // Head-motion source per variant. HEADDIR requires a provided real map.
    Tensor<T> head_motion(const nn::FeaturePyramid<T>& pyr, const Tensor<T>* m_real, const nn::FwdCtx& ctx,
                          std::vector<TraceRow>* tr = nullptr) {
        switch (cfg.variant) {
            case Variant::EGOGAN:
            case Variant::HEADREG: return generator->forward(pyr.level[4], ctx, tr);
            case Variant::HEADDIR:
                if (!m_real || m_real->numel() == 0)
                    throw ConfigError("HEADDIR variant requires a real head-motion map as input");
                return *m_real;
            case Variant::FCN3D:
            case Variant::PIXELGAN:
            case Variant::ZEROMOTION: return zero_flow(pyr.level[4].size(0));
        }
        throw ConfigError("unreachable variant");
    }

    struct Forward {
        Tensor<T> logits; // [N, 1, 3, H, W]
        Tensor<T> probs;  // same shape
        Tensor<T> flow;   // head-motion map used by the decoder
    };

    // Replicates the first horizon slice over the later two (logit level).
    static void copy_first_slice(Tensor<T>& logits) {
        const i64 N = logits.size(0);
        const i64 S = logits.size(3) * logits.size(4);
        for (i64 n = 0; n < N; ++n) {
            T* base = logits.ptr() + n * 3 * S;
            std::memcpy(base + S, base, sizeof(T) * static_cast<size_t>(S));
            std::memcpy(base + 2 * S, base, sizeof(T) * static_cast<size_t>(S));
        }
    }

    // Folds the copied-slice gradients back onto the first slice.
    static void fold_copied_slices(Tensor<T>& g_logits) {
        const i64 N = g_logits.size(0);
        const i64 S = g_logits.size(3) * g_logits.size(4);
        for (i64 n = 0; n < N; ++n) {
            T* base = g_logits.ptr() + n * 3 * S;
            for (i64 i = 0; i < S; ++i) base[i] += base[S + i] + base[2 * S + i];
            std::memset(base + S, 0, sizeof(T) * static_cast<size_t>(2 * S));
        }
    }

    Forward forward(const Tensor<T>& clip, const nn::FwdCtx& ctx, const Tensor<T>* m_real = nullptr,
                    std::vector<TraceRow>* tr = nullptr) {
        validate_clip(clip);
        Forward fw;
        nn::FeaturePyramid<T> pyr = encoder.forward(clip, ctx, tr);
        fw.flow = head_motion(pyr, m_real, ctx, tr);
        if (uses_flow_discriminator() && tr) discriminator->forward(fw.flow, nn::FwdCtx::no_grad(), tr);
        fw.logits = decoder.forward(pyr, fw.flow, ctx, tr);
        if (cfg.variant == Variant::ZEROMOTION) copy_first_slice(fw.logits);
        fw.probs = out_sigmoid.forward(fw.logits, ctx);
        return fw;
    }

    void validate_clip(const Tensor<T>& clip) const {
        if (clip.dim() != 5 || clip.size(1) != 3 || clip.size(2) != cfg.frames || clip.size(3) != cfg.height ||
            clip.size(4) != cfg.width)
            throw ConfigError("clip shape " + clip.shape_str() + " does not match configured [N,3," +
                              std::to_string(cfg.frames) + "," + std::to_string(cfg.height) + "," +
                              std::to_string(cfg.width) + "]");
    }

    std::vector<nn::ParamRef<T>> encoder_params() {
        std::vector<nn::ParamRef<T>> v;
        encoder.collect(v);
        return v;
    }
    std::vector<nn::ParamRef<T>> decoder_params() {
        std::vector<nn::ParamRef<T>> v;
        decoder.collect(v);
        return v;
    }
    std::vector<nn::ParamRef<T>> generator_params() {
        std::vector<nn::ParamRef<T>> v;
        if (generator) generator->collect(v);
        return v;
    }
    std::vector<nn::ParamRef<T>> discriminator_params() {
        std::vector<nn::ParamRef<T>> v;
        if (discriminator) discriminator->collect(v);
        return v;
    }
    std::vector<nn::ParamRef<T>> all_params() {
        auto v = encoder_params();
        for (auto& g : {decoder_params(), generator_params(), discriminator_params()})
            v.insert(v.end(), g.begin(), g.end());
        return v;
    }
    std::vector<nn::BufferRef<T>> all_buffers() {
        std::vector<nn::BufferRef<T>> v;
        encoder.collect_buffers(v);
        decoder.collect_buffers(v);
        return v;
    }

    void zero_grad() {
        for (auto& p : all_params()) p.grad->zero();
    }

    // copy parameters/buffers by name from another model (used by tests and
    // by variant-comparison tooling; silently skips names the source lacks)
    void copy_common_state_from(EgoGanModel<T>& src) {
        std::map<std::string, Tensor<T>*> theirs;
        for (auto& p : src.all_params()) theirs[p.name] = p.value;
        for (auto& p : all_params()) {
            auto it = theirs.find(p.name);
            if (it != theirs.end()) *p.value = *it->second;
        }
        std::map<std::string, Tensor<T>*> their_bufs;
        for (auto& b : src.all_buffers()) their_bufs[b.name] = b.value;
        for (auto& b : all_buffers()) {
            auto it = their_bufs.find(b.name);
            if (it != their_bufs.end()) *b.value = *it->second;
        }
    }
};

// ---------------------------------------------------------------------------
// Spec-level operations on a model
// ---------------------------------------------------------------------------

// Encoder as a standalone operation; checks input and output health.
template <class T>
nn::FeaturePyramid<T> encode(EgoGanModel<T>& model, const Tensor<T>& clip) {
    model.validate_clip(clip);
    if (!clip.all_finite()) throw NumericError("encode: clip contains non-finite values");
    auto pyr = model.encoder.forward(clip, nn::FwdCtx::eval());
    for (int i = 0; i < 5; ++i)
        if (!pyr.level[i].all_finite())
            throw NumericError("encode: non-finite activations at pyramid level " + std::to_string(i + 1));
    return pyr;
}

template <class T>
Tensor<T> generate_head_motion(EgoGanModel<T>& model, const Tensor<T>& bottleneck) {
    if (!model.generator) throw ConfigError("variant has no head-motion generator");
    return model.generator->forward(bottleneck, nn::FwdCtx::eval());
}

template <class T>
Tensor<T> discriminate(EgoGanModel<T>& model, const Tensor<T>& m) {
    if (!model.discriminator) throw ConfigError("variant has no discriminator");
    return model.discriminator->forward(m, nn::FwdCtx::eval());
}

// Full-table shape trace on a real forward pass (batch of 1).
template <class T>
std::vector<TraceRow> shape_trace(const ModelConfig& cfg) {
    EgoGanModel<T> model(cfg);
    model.init(1);
    Tensor<T> clip({1, 3, cfg.frames, cfg.height, cfg.width});
    Rng rng(7);
    for (auto& v : clip.data) v = static_cast<T>(rng.uniform());
    std::vector<TraceRow> tr;
    model.forward(clip, nn::FwdCtx::eval(), nullptr, &tr);
    return tr;
}

} // namespace egogan
