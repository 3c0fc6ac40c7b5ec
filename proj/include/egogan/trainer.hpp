#pragma once

#include <functional>

#include "egogan/losses.hpp"
#include "egogan/model.hpp"
#include "egogan/optim.hpp"

namespace egogan {

struct TrainHp {
    i64 epochs = 70;
    i64 batch_size = 16;
    double lr_seg = 0.1;
    double lr_gan = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
};

template <class T>
struct Batch {
    Tensor<T> clips;    // [N, 3, 8, H, W]
    Tensor<T> gt_masks; // [N, 1, 3, H, W], binary
    Tensor<T> m_real;   // [N, 2, 4, H/32, W/32]; may be empty for variants that never read it
};

template <class T>
struct TrainState {
    EgoGanModel<T> model;
    TrainHp hp;
    SgdState<T> sgd;
    AdamState<T> adam_g, adam_d;
    i64 epoch = 0;
    i64 step = 0;
    Rng rng; // drives batch order

    TrainState(const ModelConfig& cfg, const TrainHp& h, u64 seed) : model(cfg), hp(h), rng(Rng::stream(seed, 0x7217)) {
        model.init(seed);
    }

    double lr_seg_now() const { return cosine_lr(hp.lr_seg, epoch, hp.epochs); }
    double lr_gan_now() const { return cosine_lr(hp.lr_gan, epoch, hp.epochs); }
};

struct StepLog {
    i64 step = 0;
    i64 epoch = 0;
    double l_d = 0, l_g_adv = 0, l_g_l1 = 0, l_seg = 0;
    double lr_seg = 0, lr_gan = 0;
};

using StepLogger = std::function<void(const StepLog&)>;

namespace detail {

template <class T>
Tensor<T> stack_batch(const Tensor<T>& a, const Tensor<T>& b) {
    std::vector<i64> s = a.shape;
    s[0] += b.size(0);
    Tensor<T> out(s);
    std::memcpy(out.ptr(), a.ptr(), sizeof(T) * static_cast<size_t>(a.numel()));
    std::memcpy(out.ptr() + a.numel(), b.ptr(), sizeof(T) * static_cast<size_t>(b.numel()));
    return out;
}

template <class T>
void require_m_real(const Batch<T>& batch) {
    if (batch.m_real.numel() == 0)
        throw ConfigError("training step requires real future head-motion maps (m_r is only available "
                          "for training data)");
}

template <class T>
void zero_grads(const std::vector<nn::ParamRef<T>>& params) {
    for (auto& p : params) p.grad->zero();
}

template <class T>
void check_loss_finite(const char* what, T v, i64 step) {
    if (!std::isfinite(static_cast<double>(v)))
        throw NumericError(std::string(what) + " is non-finite at step " + std::to_string(step));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Discriminator step: touches discriminator parameters only.
// ---------------------------------------------------------------------------

template <class T>
LossBreakdown<T> train_step_d(TrainState<T>& ts, const Batch<T>& batch) {
    auto& model = ts.model;
    LossBreakdown<T> out;
    const nn::FwdCtx no_grad = nn::FwdCtx::no_grad();
    if (model.uses_flow_discriminator()) {
        detail::require_m_real(batch);
        auto d_params = model.discriminator_params();
        detail::zero_grads(d_params);
        auto pyr = model.encoder.forward(batch.clips, no_grad);
        Tensor<T> m_g = model.generator->forward(pyr.level[4], no_grad);
        Tensor<T> both = detail::stack_batch(batch.m_real, m_g);
        Tensor<T> probs = model.discriminator->forward(both, nn::FwdCtx::frozen());
        const i64 nb = batch.m_real.size(0);
        Tensor<T> d_real({nb, 1}), d_fake({nb, 1});
        for (i64 i = 0; i < nb; ++i) {
            d_real[i] = probs[i];
            d_fake[i] = probs[nb + i];
        }
        auto loss = losses::discriminator_loss(d_real, d_fake);
        Tensor<T> g_probs(probs.shape);
        for (i64 i = 0; i < nb; ++i) {
            g_probs[i] = loss.grad_real[i];
            g_probs[nb + i] = loss.grad_fake[i];
        }
        model.discriminator->backward(g_probs);
        adam_step(d_params, ts.adam_d, static_cast<T>(ts.lr_gan_now()), static_cast<T>(ts.hp.beta1),
                  static_cast<T>(ts.hp.beta2));
        out.l_d = loss.value;
    } else if (model.uses_mask_discriminator()) {
        auto d_params = model.discriminator_params();
        detail::zero_grads(d_params);
        auto fw = model.forward(batch.clips, no_grad);
        Tensor<T> both = detail::stack_batch(batch.gt_masks, fw.probs);
        Tensor<T> probs = model.discriminator->forward(both, nn::FwdCtx::frozen());
        const i64 nb = batch.gt_masks.size(0);
        Tensor<T> d_real({nb, 1}), d_fake({nb, 1});
        for (i64 i = 0; i < nb; ++i) {
            d_real[i] = probs[i];
            d_fake[i] = probs[nb + i];
        }
        auto loss = losses::discriminator_loss(d_real, d_fake);
        Tensor<T> g_probs(probs.shape);
        for (i64 i = 0; i < nb; ++i) {
            g_probs[i] = loss.grad_real[i];
            g_probs[nb + i] = loss.grad_fake[i];
        }
        model.discriminator->backward(g_probs);
        adam_step(d_params, ts.adam_d, static_cast<T>(ts.lr_gan_now()), static_cast<T>(ts.hp.beta1),
                  static_cast<T>(ts.hp.beta2));
        out.l_d = loss.value;
    } else {
        throw ConfigError(std::string("variant ") + variant_name(model.cfg.variant) + " has no discriminator step");
    }
    detail::check_loss_finite("discriminator loss", out.l_d, ts.step);
    return out;
}

// ---------------------------------------------------------------------------
// Generator step: touches generator parameters only.
// ---------------------------------------------------------------------------

template <class T>
LossBreakdown<T> train_step_g(TrainState<T>& ts, const Batch<T>& batch) {
    auto& model = ts.model;
    if (!model.uses_generator())
        throw ConfigError(std::string("variant ") + variant_name(model.cfg.variant) + " has no generator step");
    detail::require_m_real(batch);
    LossBreakdown<T> out;
    auto g_params = model.generator_params();
    detail::zero_grads(g_params);
    auto pyr = model.encoder.forward(batch.clips, nn::FwdCtx::no_grad());
    Tensor<T> m_g = model.generator->forward(pyr.level[4], nn::FwdCtx::frozen());
    const T lambda = static_cast<T>(model.cfg.lambda_l1);
    Tensor<T> g_flow;
    if (model.uses_flow_discriminator()) {
        auto d_params = model.discriminator_params();
        detail::zero_grads(d_params); // gradients pass through D; its parameters are not stepped
        Tensor<T> d_fake = model.discriminator->forward(m_g, nn::FwdCtx::frozen());
        auto loss = losses::generator_loss(d_fake, m_g, batch.m_real, lambda);
        g_flow = model.discriminator->backward(loss.grad_fake);
        nn::add_inplace(g_flow, loss.grad_flow);
        out.l_g_adv = loss.adv;
        out.l_g_l1 = loss.l1;
        out.l_g_total = loss.value;
    } else {
        // HEADREG: regression with only the L1 distance term
        auto loss = losses::l1_mean(m_g, batch.m_real);
        g_flow = Tensor<T>(loss.grad.shape);
        for (i64 i = 0; i < g_flow.numel(); ++i) g_flow[i] = lambda * loss.grad[i];
        out.l_g_adv = 0;
        out.l_g_l1 = loss.value;
        out.l_g_total = lambda * loss.value;
    }
    model.generator->backward(g_flow);
    adam_step(g_params, ts.adam_g, static_cast<T>(ts.lr_gan_now()), static_cast<T>(ts.hp.beta1),
              static_cast<T>(ts.hp.beta2));
    detail::check_loss_finite("generator loss", out.l_g_total, ts.step);
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation step: updates encoder + decoder via SGD; generator and
// discriminator stay frozen (gradients into the head-motion map are dropped).
// ---------------------------------------------------------------------------

template <class T>
LossBreakdown<T> train_step_seg(TrainState<T>& ts, const Batch<T>& batch) {
    auto& model = ts.model;
    LossBreakdown<T> out;
    auto enc_params = model.encoder_params();
    auto dec_params = model.decoder_params();
    detail::zero_grads(enc_params);
    detail::zero_grads(dec_params);
    const nn::FwdCtx train = nn::FwdCtx::train();
    auto pyr = model.encoder.forward(batch.clips, train);
    const Tensor<T>* m_real = batch.m_real.numel() > 0 ? &batch.m_real : nullptr;
    Tensor<T> m = model.head_motion(pyr, m_real, nn::FwdCtx::no_grad());
    Tensor<T> logits = model.decoder.forward(pyr, m, train);
    if (model.cfg.variant == Variant::ZEROMOTION) EgoGanModel<T>::copy_first_slice(logits);
    auto seg = losses::segmentation_loss(logits, batch.gt_masks);
    out.l_seg = seg.value;
    Tensor<T> g_logits = seg.grad_logits;
    if (model.uses_mask_discriminator()) {
        auto d_params = model.discriminator_params();
        detail::zero_grads(d_params);
        Tensor<T> probs = model.out_sigmoid.forward(logits, nn::FwdCtx::frozen());
        Tensor<T> d_fake = model.discriminator->forward(probs, nn::FwdCtx::frozen());
        auto adv = losses::fool_discriminator_loss(d_fake);
        Tensor<T> g_probs = model.discriminator->backward(adv.grad_fake);
        Tensor<T> g_from_adv = model.out_sigmoid.backward(g_probs);
        const T w = static_cast<T>(model.cfg.pixelgan_adv_weight);
        parallel_for(g_logits.numel(), [&](i64 lo, i64 hi) {
            for (i64 i = lo; i < hi; ++i) g_logits[i] += w * g_from_adv[i];
        });
        out.l_g_adv = adv.value;
    }
    if (model.cfg.variant == Variant::ZEROMOTION) EgoGanModel<T>::fold_copied_slices(g_logits);
    auto dgrads = model.decoder.backward(g_logits);
    // dgrads.flow is dropped: the head-motion value acts as a constant input here
    model.encoder.backward(dgrads.pyramid);
    auto seg_params = enc_params;
    seg_params.insert(seg_params.end(), dec_params.begin(), dec_params.end());
    sgd_step(seg_params, ts.sgd, static_cast<T>(ts.lr_seg_now()), static_cast<T>(ts.hp.momentum),
             static_cast<T>(ts.hp.weight_decay));
    detail::check_loss_finite("segmentation loss", out.l_seg, ts.step);
    return out;
}

// ---------------------------------------------------------------------------
// Epoch driver: D step, G step, seg step per batch (as the variant wires
// them), cosine schedules advanced per epoch. The fused path computes the
// encoder features once per batch; the parameter trajectory is identical to
// composing the three public steps because the encoder is frozen during the
// D and G updates (a unit test asserts the equivalence).
// ---------------------------------------------------------------------------

template <class T>
LossBreakdown<T> train_batch(TrainState<T>& ts, const Batch<T>& batch) {
    auto& model = ts.model;
    const Variant variant = model.cfg.variant;
    if (variant != Variant::EGOGAN && variant != Variant::HEADREG && variant != Variant::PIXELGAN) {
        return train_step_seg(ts, batch); // no GAN branch; nothing to fuse
    }
    LossBreakdown<T> bd;
    auto enc_params = model.encoder_params();
    auto dec_params = model.decoder_params();
    detail::zero_grads(enc_params);
    detail::zero_grads(dec_params);
    const T lambda = static_cast<T>(model.cfg.lambda_l1);
    // shared encoder forward: caches kept for the seg backward, batch-norm
    // running buffers untouched until the seg phase commits them
    auto pyr = model.encoder.forward(batch.clips, nn::FwdCtx::frozen());
    Tensor<T> seg_flow;
    if (variant == Variant::EGOGAN || variant == Variant::HEADREG) {
        detail::require_m_real(batch);
        auto g_params = model.generator_params();
        detail::zero_grads(g_params);
        Tensor<T> m_g = model.generator->forward(pyr.level[4], nn::FwdCtx::frozen());
        if (variant == Variant::EGOGAN) {
            // discriminator update
            auto d_params = model.discriminator_params();
            detail::zero_grads(d_params);
            Tensor<T> both = detail::stack_batch(batch.m_real, m_g);
            Tensor<T> probs = model.discriminator->forward(both, nn::FwdCtx::frozen());
            const i64 nb = batch.m_real.size(0);
            Tensor<T> d_real({nb, 1}), d_fake({nb, 1});
            for (i64 i = 0; i < nb; ++i) {
                d_real[i] = probs[i];
                d_fake[i] = probs[nb + i];
            }
            auto dl = losses::discriminator_loss(d_real, d_fake);
            Tensor<T> g_probs(probs.shape);
            for (i64 i = 0; i < nb; ++i) {
                g_probs[i] = dl.grad_real[i];
                g_probs[nb + i] = dl.grad_fake[i];
            }
            model.discriminator->backward(g_probs);
            adam_step(d_params, ts.adam_d, static_cast<T>(ts.lr_gan_now()), static_cast<T>(ts.hp.beta1),
                      static_cast<T>(ts.hp.beta2));
            bd.l_d = dl.value;
            detail::check_loss_finite("discriminator loss", bd.l_d, ts.step);
            // generator update against the refreshed discriminator
            detail::zero_grads(d_params);
            Tensor<T> d_fake2 = model.discriminator->forward(m_g, nn::FwdCtx::frozen());
            auto gl = losses::generator_loss(d_fake2, m_g, batch.m_real, lambda);
            Tensor<T> g_flow = model.discriminator->backward(gl.grad_fake);
            nn::add_inplace(g_flow, gl.grad_flow);
            model.generator->backward(g_flow);
            bd.l_g_adv = gl.adv;
            bd.l_g_l1 = gl.l1;
            bd.l_g_total = gl.value;
        } else {
            auto gl = losses::l1_mean(m_g, batch.m_real);
            Tensor<T> g_flow = Tensor<T>::uninit(gl.grad.shape);
            for (i64 i = 0; i < g_flow.numel(); ++i) g_flow[i] = lambda * gl.grad[i];
            model.generator->backward(g_flow);
            bd.l_g_l1 = gl.value;
            bd.l_g_total = lambda * gl.value;
        }
        adam_step(model.generator_params(), ts.adam_g, static_cast<T>(ts.lr_gan_now()), static_cast<T>(ts.hp.beta1),
                  static_cast<T>(ts.hp.beta2));
        detail::check_loss_finite("generator loss", bd.l_g_total, ts.step);
        // seg phase reads the post-update generator
        seg_flow = model.generator->forward(pyr.level[4], nn::FwdCtx::no_grad());
    } else {
        seg_flow = model.zero_flow(batch.clips.size(0));
    }
    // segmentation phase
    Tensor<T> logits = model.decoder.forward(pyr, seg_flow, nn::FwdCtx::train());
    auto seg = losses::segmentation_loss(logits, batch.gt_masks);
    bd.l_seg = seg.value;
    Tensor<T> g_logits = seg.grad_logits;
    if (model.uses_mask_discriminator()) {
        // PIXELGAN: update the mask discriminator on this forward's output,
        // then add the fooling term to the segmentation gradient
        auto d_params = model.discriminator_params();
        detail::zero_grads(d_params);
        Tensor<T> probs = model.out_sigmoid.forward(logits, nn::FwdCtx::frozen());
        Tensor<T> both = detail::stack_batch(batch.gt_masks, probs);
        Tensor<T> d_probs = model.discriminator->forward(both, nn::FwdCtx::frozen());
        const i64 nb = batch.gt_masks.size(0);
        Tensor<T> d_real({nb, 1}), d_fake({nb, 1});
        for (i64 i = 0; i < nb; ++i) {
            d_real[i] = d_probs[i];
            d_fake[i] = d_probs[nb + i];
        }
        auto dl = losses::discriminator_loss(d_real, d_fake);
        Tensor<T> g_probs(d_probs.shape);
        for (i64 i = 0; i < nb; ++i) {
            g_probs[i] = dl.grad_real[i];
            g_probs[nb + i] = dl.grad_fake[i];
        }
        model.discriminator->backward(g_probs);
        adam_step(d_params, ts.adam_d, static_cast<T>(ts.lr_gan_now()), static_cast<T>(ts.hp.beta1),
                  static_cast<T>(ts.hp.beta2));
        bd.l_d = dl.value;
        detail::check_loss_finite("discriminator loss", bd.l_d, ts.step);
        detail::zero_grads(d_params);
        Tensor<T> d_fake2 = model.discriminator->forward(probs, nn::FwdCtx::frozen());
        auto adv = losses::fool_discriminator_loss(d_fake2);
        Tensor<T> g_probs2 = model.discriminator->backward(adv.grad_fake);
        Tensor<T> g_from_adv = model.out_sigmoid.backward(g_probs2);
        const T w = static_cast<T>(model.cfg.pixelgan_adv_weight);
        parallel_for(g_logits.numel(), [&](i64 lo, i64 hi) {
            for (i64 i = lo; i < hi; ++i) g_logits[i] += w * g_from_adv[i];
        });
        bd.l_g_adv = adv.value;
    }
    auto dgrads = model.decoder.backward(g_logits);
    model.encoder.backward(dgrads.pyramid);
    model.encoder.commit_bn();
    auto seg_params = enc_params;
    seg_params.insert(seg_params.end(), dec_params.begin(), dec_params.end());
    sgd_step(seg_params, ts.sgd, static_cast<T>(ts.lr_seg_now()), static_cast<T>(ts.hp.momentum),
             static_cast<T>(ts.hp.weight_decay));
    detail::check_loss_finite("segmentation loss", bd.l_seg, ts.step);
    return bd;
}

template <class T>
using BatchProvider = std::function<Batch<T>(i64 epoch, const std::vector<i64>& sample_indices)>;

template <class T>
void train_epoch(TrainState<T>& ts, i64 n_samples, const BatchProvider<T>& provider,
                 const StepLogger& logger = nullptr) {
    if (n_samples <= 0) throw ConfigError("train_epoch: empty dataset");
    std::vector<i64> order(static_cast<size_t>(n_samples));
    for (i64 i = 0; i < n_samples; ++i) order[static_cast<size_t>(i)] = i;
    Rng epoch_rng = Rng::stream(ts.rng.next_u64(), static_cast<u64>(ts.epoch));
    epoch_rng.shuffle(order.begin(), order.end());
    const i64 bs = ts.hp.batch_size;
    for (i64 start = 0; start < n_samples; start += bs) {
        const i64 end = std::min(start + bs, n_samples);
        std::vector<i64> idx(order.begin() + start, order.begin() + end);
        Batch<T> batch = provider(ts.epoch, idx);
        LossBreakdown<T> bd = train_batch(ts, batch);
        ts.step += 1;
        if (logger) {
            StepLog log;
            log.step = ts.step;
            log.epoch = ts.epoch;
            log.l_d = static_cast<double>(bd.l_d);
            log.l_g_adv = static_cast<double>(bd.l_g_adv);
            log.l_g_l1 = static_cast<double>(bd.l_g_l1);
            log.l_seg = static_cast<double>(bd.l_seg);
            log.lr_seg = ts.lr_seg_now();
            log.lr_gan = ts.lr_gan_now();
            logger(log);
        }
    }
    ts.epoch += 1;
}

} // namespace egogan
