#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dafar/detection.hpp"

namespace dafar {

enum class DefenseMode { hybrid, detect_only, purify_only };

const char* to_string(DefenseMode m);
DefenseMode defense_mode_from_string(const std::string& s);

// Per-sample verdict: either rejected as adversarial, or a class label. An
// accepted sample never carries a score above the calibrated threshold.
struct DefenseOutcome {
    bool rejected = false;
    int label = -1;  // valid iff !rejected
    double anomaly_score = 0;
    bool reconstruction_used = false;

    bool operator==(const DefenseOutcome&) const = default;
};

struct PipelineConfig {
    DefenseMode mode = DefenseMode::hybrid;
    Scorer scorer = Scorer::detector;
    std::optional<ThresholdCalibration> calibration;

    void validate(bool model_has_detector) const {
        if (mode != DefenseMode::purify_only && !calibration)
            throw ConfigError(std::string(to_string(mode)) + " mode requires a calibration");
        if (scorer == Scorer::detector && !model_has_detector)
            throw ConfigError("detector scorer requires a model with a detector");
        if (calibration && calibration->scored_with != scorer)
            throw ConfigError("calibration was fitted with a different scorer");
    }
};

// sample_id, verdict, score, label, mode
std::string outcomes_csv(const std::vector<DefenseOutcome>& outcomes, DefenseMode mode);

// The full defense on a batch:
//   hybrid:      score the input; above alpha -> rejected; otherwise classify
//                the reconstruction D(E(x)).
//   detect_only: same test, but accepted samples are classified from the raw
//                input (matches the detection-accuracy experiments).
//   purify_only: always classify the reconstruction.
template <typename S>
std::vector<DefenseOutcome> defend_batch(const DefendedModelT<S>& model, const ImageBatch& xs,
                                         const PipelineConfig& cfg) {
    cfg.validate(model.has_detector());
    if (cfg.calibration) cfg.calibration->require_model(model.param_hash());

    const int64_t n = xs.size();
    std::vector<DefenseOutcome> out(static_cast<size_t>(n));
    if (n == 0) return out;

    std::vector<double> scores;
    const bool scored = cfg.mode != DefenseMode::purify_only;
    if (scored) scores = defense_scores(model, xs, cfg.scorer);

    // labels for accepted samples
    std::vector<int> labels(static_cast<size_t>(n), -1);
    const bool from_reconstruction = cfg.mode != DefenseMode::detect_only;
    {
        const int chunk = 256;
        auto px = xs.pixels.template cast<S>();
        for (int64_t at = 0; at < n; at += chunk) {
            const int64_t m = std::min<int64_t>(chunk, n - at);
            TensorT<S> part(std::vector<int64_t>{m, px.shape[1], px.shape[2], px.shape[3]});
            std::copy(px.sample(at), px.sample(at) + m * px.sample_size(), part.data.begin());
            TensorT<S> probs;
            if (from_reconstruction) {
                auto rec = model.reconstruct(part);
                probs = model.classify(rec);
            } else {
                probs = model.classify(part);
            }
            const int64_t d = probs.shape[1];
            for (int64_t i = 0; i < m; ++i) {
                int64_t arg = 0;
                for (int64_t c = 1; c < d; ++c)
                    if (probs.data[i * d + c] > probs.data[i * d + arg]) arg = c;
                labels[static_cast<size_t>(at + i)] = static_cast<int>(arg);
            }
        }
    }

    for (int64_t i = 0; i < n; ++i) {
        auto& o = out[static_cast<size_t>(i)];
        o.anomaly_score = scored ? scores[static_cast<size_t>(i)] : 0.0;
        o.reconstruction_used = from_reconstruction;
        if (scored && is_adversarial(o.anomaly_score, *cfg.calibration)) {
            o.rejected = true;
            o.label = -1;
        } else {
            o.rejected = false;
            o.label = labels[static_cast<size_t>(i)];
        }
    }
    return out;
}

template <typename S>
DefenseOutcome defend(const DefendedModelT<S>& model, const ImageBatch& x,
                      const PipelineConfig& cfg) {
    if (x.size() != 1) throw ShapeMismatchError("defend takes a single sample");
    return defend_batch(model, x, cfg)[0];
}

}  // namespace dafar
