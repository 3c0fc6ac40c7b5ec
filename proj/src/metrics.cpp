#include "egogan/metrics.hpp"

#include <cstdio>

namespace egogan {

std::vector<u8> binarize(const Tensor<float>& probs, double threshold) {
    std::vector<u8> out(static_cast<size_t>(probs.numel()));
    for (i64 i = 0; i < probs.numel(); ++i) out[static_cast<size_t>(i)] = probs[i] >= threshold ? 1 : 0;
    return out;
}

void accumulate(ConfusionCounts& counts, const std::vector<u8>& pred, const std::vector<u8>& gt, i64 h, i64 w) {
    const size_t plane = static_cast<size_t>(h * w);
    if (pred.size() != 3 * plane || gt.size() != 3 * plane)
        throw ConfigError("accumulate: expected 3 horizon planes of " + std::to_string(plane) + " pixels");
    for (int hz = 0; hz < 3; ++hz) {
        const u8* p = pred.data() + static_cast<size_t>(hz) * plane;
        const u8* g = gt.data() + static_cast<size_t>(hz) * plane;
        u64 tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < plane; ++i) {
            tp += (p[i] & g[i]);
            fp += (p[i] & (g[i] ^ 1));
            fn += ((p[i] ^ 1) & g[i]);
        }
        counts.tp[hz] += tp;
        counts.fp[hz] += fp;
        counts.fn[hz] += fn;
    }
}

MetricsReport finalize(const ConfusionCounts& counts) {
    MetricsReport r;
    double f1_sum = 0;
    for (int h = 0; h < 3; ++h) {
        const double tp = static_cast<double>(counts.tp[h]);
        const double fp = static_cast<double>(counts.fp[h]);
        const double fn = static_cast<double>(counts.fn[h]);
        HorizonMetrics& m = r.horizon[h];
        m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        f1_sum += m.f1;
    }
    r.mean_f1 = f1_sum / 3.0;
    return r;
}

MetricsReport evaluate(EgoGanModel<float>& model, const LoadedDataset& ds, const std::string& split,
                       double threshold) {
    const auto& records = ds.manifest.split(split);
    const auto& raws = split == "train" ? ds.train : ds.val;
    if (records.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
    if (raws.size() != records.size())
        throw ConfigError("evaluate: split '" + split + "' is not preloaded");
    ConfusionCounts counts;
    const bool generates = model.uses_generator();
    const bool needs_m_real = model.cfg.variant == Variant::HEADDIR || generates;
    double epe_sum = 0, epe_zero_sum = 0;
    const float scale = ds.manifest.flow_scale;
    for (size_t i = 0; i < records.size(); ++i) {
        SampleTensors st = assemble_sample(raws[i], scale);
        Tensor<float> clip = st.clip.reshaped({1, 3, st.clip.size(1), st.clip.size(2), st.clip.size(3)});
        Tensor<float> m_real;
        if (needs_m_real)
            m_real = st.m_real.reshaped({1, 2, st.m_real.size(1), st.m_real.size(2), st.m_real.size(3)});
        auto fw = model.forward(clip, nn::FwdCtx::eval(), m_real.numel() > 0 ? &m_real : nullptr);
        std::vector<u8> pred = binarize(fw.probs, threshold);
        std::vector<u8> gt = binarize(st.gt, 0.5);
        accumulate(counts, pred, gt, st.gt.size(2), st.gt.size(3));
        if (generates) {
            epe_sum += epe(fw.flow, m_real, scale);
            Tensor<float> zero(m_real.shape);
            epe_zero_sum += epe(zero, m_real, scale);
        }
    }
    MetricsReport r = finalize(counts);
    r.variant = variant_name(model.cfg.variant);
    r.threshold = threshold;
    r.n_samples = static_cast<i64>(records.size());
    r.anticipation_violation = model.cfg.variant == Variant::HEADDIR;
    if (generates) {
        r.head_motion_epe = epe_sum / static_cast<double>(records.size());
        r.zero_motion_epe = epe_zero_sum / static_cast<double>(records.size());
    }
    return r;
}

std::string metrics_table(const MetricsReport& r, const std::array<int, 3>& deltas) {
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof(buf), "variant: %s  (micro-averaged over pixels, threshold %.2f, %lld samples)%s\n",
                  r.variant.c_str(), r.threshold, static_cast<long long>(r.n_samples),
                  r.anticipation_violation ? "  [uses future head motion at inference]" : "");
    out += buf;
    out += "  horizon        Precision/ Recall/ F1 Score\n";
    static const char* names[3] = {"short-term", "middle-term", "long-term"};
    for (int h = 0; h < 3; ++h) {
        std::snprintf(buf, sizeof(buf), "  %-11s d=%-3d  %6.2f/ %6.2f/ %6.2f\n", names[h], deltas[h],
                      100.0 * r.horizon[h].precision, 100.0 * r.horizon[h].recall, 100.0 * r.horizon[h].f1);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "  mean F1 %.2f\n", 100.0 * r.mean_f1);
    out += buf;
    if (r.head_motion_epe >= 0) {
        std::snprintf(buf, sizeof(buf), "  head-motion EPE %.4f px/frame (all-zero predictor %.4f)\n",
                      r.head_motion_epe, r.zero_motion_epe);
        out += buf;
    }
    return out;
}

} // namespace egogan
