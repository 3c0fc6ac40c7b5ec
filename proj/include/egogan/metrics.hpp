#pragma once

#include <array>
#include <string>
#include <vector>

#include "egogan/dataset.hpp"
#include "egogan/model.hpp"
#include "egogan/trainer.hpp"

namespace egogan {

struct ConfusionCounts {
    std::array<u64, 3> tp{}, fp{}, fn{};

    void merge(const ConfusionCounts& o) {
        for (int h = 0; h < 3; ++h) {
            tp[h] += o.tp[h];
            fp[h] += o.fp[h];
            fn[h] += o.fn[h];
        }
    }
};

struct HorizonMetrics {
    double precision = 0, recall = 0, f1 = 0;
};

struct MetricsReport {
    std::string variant;
    std::array<HorizonMetrics, 3> horizon;
    double mean_f1 = 0;
    double head_motion_epe = -1;      // pixels/frame; negative when not applicable
    double zero_motion_epe = -1;      // EPE of an all-zero flow predictor
    i64 n_samples = 0;
    double threshold = 0.5;
    std::string averaging = "micro";
    bool anticipation_violation = false; // true for HEADDIR (uses future input)
};

// pixel >= threshold -> 1
std::vector<u8> binarize(const Tensor<float>& probs, double threshold = 0.5);

// adds per-horizon tp/fp/fn; masks are [1, 3, H, W] flattened series
void accumulate(ConfusionCounts& counts, const std::vector<u8>& pred, const std::vector<u8>& gt, i64 h, i64 w);

MetricsReport finalize(const ConfusionCounts& counts);

// runs the model over a split and micro-averages pixel counts per horizon;
// reports head-motion EPE when the variant generates it
MetricsReport evaluate(EgoGanModel<float>& model, const LoadedDataset& ds, const std::string& split,
                       double threshold = 0.5);

std::string metrics_table(const MetricsReport& r, const std::array<int, 3>& deltas);

} // namespace egogan
