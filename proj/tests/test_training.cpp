#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include "egogan/hash.hpp"
#include "egogan/trainer.hpp"
#include "test_util.hpp"

using namespace egogan;
using namespace egogan::test;

namespace {

ModelConfig tiny_cfg(Variant v = Variant::EGOGAN) {
    ModelConfig cfg;
    cfg.height = 32;
    cfg.width = 32;
    cfg.channel_width = 1.0 / 32.0;
    cfg.variant = v;
    return cfg;
}

TrainHp tiny_hp() {
    TrainHp hp;
    hp.epochs = 4;
    hp.batch_size = 2;
    return hp;
}

Batch<float> random_batch(const ModelConfig& cfg, i64 n, u64 seed) {
    Rng rng(seed);
    Batch<float> b;
    b.clips = Tensor<float>({n, 3, cfg.frames, cfg.height, cfg.width});
    for (auto& v : b.clips.data) v = static_cast<float>(rng.uniform());
    b.gt_masks = Tensor<float>({n, 1, 3, cfg.height, cfg.width});
    for (auto& v : b.gt_masks.data) v = rng.bernoulli(0.2) ? 1.0f : 0.0f;
    b.m_real = Tensor<float>({n, 2, 4, cfg.height / 32, cfg.width / 32});
    for (auto& v : b.m_real.data) v = static_cast<float>(rng.uniform(-0.8, 0.8));
    return b;
}

std::string group_hash(std::vector<nn::ParamRef<float>> params) {
    Sha1 h;
    for (auto& p : params) h.update(p.value->ptr(), static_cast<size_t>(p.value->numel()) * sizeof(float));
    return h.hex();
}

struct GroupHashes {
    std::string enc, dec, gen, dis, buf;
};

GroupHashes hashes(EgoGanModel<float>& m) {
    GroupHashes g;
    g.enc = group_hash(m.encoder_params());
    g.dec = group_hash(m.decoder_params());
    g.gen = group_hash(m.generator_params());
    g.dis = group_hash(m.discriminator_params());
    Sha1 h;
    for (auto& b : m.all_buffers()) h.update(b.value->ptr(), static_cast<size_t>(b.value->numel()) * sizeof(float));
    g.buf = h.hex();
    return g;
}

} // namespace

TEST_CASE("train_step_d updates only the discriminator") {
    TrainState<float> ts(tiny_cfg(), tiny_hp(), 3);
    Batch<float> b = random_batch(ts.model.cfg, 2, 5);
    GroupHashes before = hashes(ts.model);
    auto loss = train_step_d(ts, b);
    GroupHashes after = hashes(ts.model);
    CHECK(after.enc == before.enc);
    CHECK(after.dec == before.dec);
    CHECK(after.gen == before.gen);
    CHECK(after.buf == before.buf);
    CHECK(after.dis != before.dis);
    CHECK(std::isfinite(loss.l_d));
}

TEST_CASE("train_step_d requires real head motion") {
    TrainState<float> ts(tiny_cfg(), tiny_hp(), 3);
    Batch<float> b = random_batch(ts.model.cfg, 2, 5);
    b.m_real = Tensor<float>();
    CHECK_THROWS_WITH_AS(train_step_d(ts, b), doctest::Contains("head-motion"), ConfigError);
}

TEST_CASE("train_step_g updates only the generator") {
    TrainState<float> ts(tiny_cfg(), tiny_hp(), 7);
    Batch<float> b = random_batch(ts.model.cfg, 2, 9);
    GroupHashes before = hashes(ts.model);
    train_step_g(ts, b);
    GroupHashes after = hashes(ts.model);
    CHECK(after.enc == before.enc);
    CHECK(after.dec == before.dec);
    CHECK(after.dis == before.dis);
    CHECK(after.buf == before.buf);
    CHECK(after.gen != before.gen);
}

TEST_CASE("train_step_seg updates encoder and decoder only") {
    TrainState<float> ts(tiny_cfg(), tiny_hp(), 11);
    Batch<float> b = random_batch(ts.model.cfg, 2, 13);
    GroupHashes before = hashes(ts.model);
    train_step_seg(ts, b);
    GroupHashes after = hashes(ts.model);
    CHECK(after.gen == before.gen);
    CHECK(after.dis == before.dis);
    CHECK(after.enc != before.enc);
    CHECK(after.dec != before.dec);
    CHECK(after.buf != before.buf); // batch-norm running stats moved
}

TEST_CASE("steps are deterministic given identical state and batch") {
    for (int run = 0; run < 1; ++run) {
        TrainState<float> a(tiny_cfg(), tiny_hp(), 21), b(tiny_cfg(), tiny_hp(), 21);
        Batch<float> batch = random_batch(a.model.cfg, 2, 23);
        train_step_d(a, batch);
        train_step_d(b, batch);
        train_step_g(a, batch);
        train_step_g(b, batch);
        train_step_seg(a, batch);
        train_step_seg(b, batch);
        GroupHashes ha = hashes(a.model), hb = hashes(b.model);
        CHECK(ha.enc == hb.enc);
        CHECK(ha.dec == hb.dec);
        CHECK(ha.gen == hb.gen);
        CHECK(ha.dis == hb.dis);
        CHECK(ha.buf == hb.buf);
    }
}

TEST_CASE("fused batch equals the composed three-step path bitwise") {
    TrainState<float> fused(tiny_cfg(), tiny_hp(), 31), composed(tiny_cfg(), tiny_hp(), 31);
    for (int i = 0; i < 2; ++i) {
        Batch<float> batch = random_batch(fused.model.cfg, 2, 33 + static_cast<u64>(i));
        train_batch(fused, batch);
        train_step_d(composed, batch);
        train_step_g(composed, batch);
        train_step_seg(composed, batch);
    }
    GroupHashes hf = hashes(fused.model), hc = hashes(composed.model);
    CHECK(hf.enc == hc.enc);
    CHECK(hf.dec == hc.dec);
    CHECK(hf.gen == hc.gen);
    CHECK(hf.dis == hc.dis);
    CHECK(hf.buf == hc.buf);
}

TEST_CASE("HEADREG has no discriminator and trains G with L1 only") {
    TrainState<float> ts(tiny_cfg(Variant::HEADREG), tiny_hp(), 41);
    CHECK(ts.model.discriminator_params().empty());
    Batch<float> b = random_batch(ts.model.cfg, 2, 43);
    CHECK_THROWS_AS(train_step_d(ts, b), ConfigError);
    auto loss = train_step_g(ts, b);
    CHECK(loss.l_g_adv == 0.0f);
    CHECK(loss.l_g_l1 > 0.0f);
}

TEST_CASE("FCN3D variant has neither generator nor discriminator steps") {
    TrainState<float> ts(tiny_cfg(Variant::FCN3D), tiny_hp(), 51);
    CHECK(ts.model.generator_params().empty());
    CHECK(ts.model.discriminator_params().empty());
    Batch<float> b = random_batch(ts.model.cfg, 2, 53);
    CHECK_THROWS_AS(train_step_g(ts, b), ConfigError);
    auto loss = train_step_seg(ts, b);
    CHECK(std::isfinite(loss.l_seg));
}

TEST_CASE("PIXELGAN trains a mask discriminator and adds a fooling term") {
    TrainState<float> ts(tiny_cfg(Variant::PIXELGAN), tiny_hp(), 61);
    CHECK_FALSE(ts.model.discriminator_params().empty());
    CHECK(ts.model.generator_params().empty());
    Batch<float> b = random_batch(ts.model.cfg, 2, 63);
    GroupHashes before = hashes(ts.model);
    auto d = train_step_d(ts, b);
    CHECK(std::isfinite(d.l_d));
    GroupHashes mid = hashes(ts.model);
    CHECK(mid.dis != before.dis);
    CHECK(mid.enc == before.enc);
    auto s = train_step_seg(ts, b);
    CHECK(s.l_g_adv > 0.0f);
    GroupHashes after = hashes(ts.model);
    CHECK(after.dis == mid.dis); // adversarial term does not move D
}

TEST_CASE("train_epoch composes the step order and advances schedules") {
    TrainState<float> ts(tiny_cfg(), tiny_hp(), 71);
    Batch<float> fixed = random_batch(ts.model.cfg, 2, 73);
    std::vector<StepLog> logs;
    BatchProvider<float> provider = [&](i64, const std::vector<i64>&) { return fixed; };
    const double lr0 = ts.lr_seg_now();
    CHECK(lr0 == doctest::Approx(ts.hp.lr_seg));
    train_epoch(ts, 4, provider, [&](const StepLog& s) { logs.push_back(s); });
    CHECK(ts.epoch == 1);
    CHECK(ts.step == 2); // 4 samples / batch 2
    CHECK(logs.size() == 2);
    CHECK(logs[0].lr_seg == doctest::Approx(ts.hp.lr_seg)); // epoch-0 rate
    CHECK(ts.lr_seg_now() < lr0);
    CHECK_THROWS_AS(train_epoch(ts, 0, provider, nullptr), ConfigError);
}

TEST_CASE("segmentation loss falls when overfitting one batch") {
    ModelConfig cfg = tiny_cfg(Variant::FCN3D);
    TrainHp hp = tiny_hp();
    hp.epochs = 60;
    hp.lr_seg = 0.05;
    TrainState<float> ts(cfg, hp, 81);
    Batch<float> b = random_batch(cfg, 2, 83);
    // blobby, learnable masks
    b.gt_masks.zero();
    for (i64 n = 0; n < 2; ++n)
        for (i64 h = 0; h < 3; ++h)
            for (i64 y = 8; y < 24; ++y)
                for (i64 x = 8; x < 24; ++x)
                    b.gt_masks[((n * 3 + h) * 32 + y) * 32 + x] = 1.0f;
    float first = train_step_seg(ts, b).l_seg;
    float last = first;
    for (int i = 0; i < 100; ++i) last = train_step_seg(ts, b).l_seg;
    CHECK(last < first * 0.6f); // the loss keeps falling on a repeated batch

}

TEST_CASE("ZEROMOTION training keeps slices identical and converges on repeats") {
    TrainState<float> ts(tiny_cfg(Variant::ZEROMOTION), tiny_hp(), 91);
    Batch<float> b = random_batch(ts.model.cfg, 2, 93);
    train_step_seg(ts, b);
    auto fw = ts.model.forward(b.clips, nn::FwdCtx::eval());
    const i64 S = 32 * 32;
    for (i64 n = 0; n < 2; ++n)
        for (i64 i = 0; i < S; ++i) {
            const float* base = fw.probs.ptr() + n * 3 * S;
            CHECK(base[S + i] == base[i]);
            CHECK(base[2 * S + i] == base[i]);
        }
}

TEST_CASE("non-finite losses abort with a numeric error") {
    TrainState<float> ts(tiny_cfg(Variant::FCN3D), tiny_hp(), 95);
    Batch<float> b = random_batch(ts.model.cfg, 2, 97);
    // poison the classifier bias: nothing downstream masks the NaN
    for (auto& p : ts.model.decoder_params())
        if (p.name == "decoder.classifier.bias") (*p.value)[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(train_step_seg(ts, b), NumericError);
}

TEST_CASE("training is invariant to the OpenMP thread count") {
    auto run = [](int threads) {
        omp_set_num_threads(threads);
        TrainState<float> ts(tiny_cfg(), tiny_hp(), 303);
        Batch<float> b = random_batch(ts.model.cfg, 2, 305);
        train_batch(ts, b);
        train_batch(ts, b);
        GroupHashes h = hashes(ts.model);
        return h.enc + h.dec + h.gen + h.dis + h.buf;
    };
    const std::string two = run(2);
    const std::string one = run(1);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(one == two);
}
