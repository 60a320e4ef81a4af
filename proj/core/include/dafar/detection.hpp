#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dafar/model.hpp"
#include "dafar/training.hpp"

namespace dafar {

enum class Scorer { detector, plain_l2 };
enum class ThresholdMode { population, paper_literal };

const char* to_string(Scorer s);
const char* to_string(ThresholdMode m);
Scorer scorer_from_string(const std::string& s);
ThresholdMode threshold_mode_from_string(const std::string& s);

// Rejection threshold fitted on clean anomaly scores. population mode puts
// alpha at mean + z * std of the score distribution; paper_literal divides the
// deviation term by the sample count instead.
struct ThresholdCalibration {
    double mean = 0;    // x-bar
    double stddev = 0;  // population convention (divide by n)
    int64_t count = 0;
    double z = 3;
    ThresholdMode mode = ThresholdMode::population;
    double alpha = 0;
    Scorer scored_with = Scorer::detector;
    uint64_t model_hash = 0;

    void bind_to(uint64_t hash) { model_hash = hash; }
    void require_model(uint64_t hash) const {
        if (model_hash != 0 && hash != model_hash)
            throw CalibrationMismatchError(
                "calibration was fitted for a different model checkpoint");
    }
};

ThresholdCalibration calibrate_threshold(const std::vector<double>& scores, double z,
                                         ThresholdMode mode);

// strict rejection: scores above alpha are adversarial, ties are clean
inline bool is_adversarial(double score, const ThresholdCalibration& cal) {
    if (score < 0) throw ConfigError("anomaly scores are nonnegative");
    return score > cal.alpha;
}

// JSON record; refuses to load against a mismatching model hash at use time
void save_calibration(const ThresholdCalibration& cal, const std::filesystem::path& path);
ThresholdCalibration load_calibration(const std::filesystem::path& path);

// ||x - D(E(x))||_p per sample
template <typename S>
std::vector<double> reconstruction_distance(const DefendedModelT<S>& model,
                                            const ImageBatch& batch, double p = 2.0) {
    if (p <= 0) throw ConfigError("norm order must be positive");
    std::vector<double> out;
    out.reserve(static_cast<size_t>(batch.size()));
    const int chunk = 256;
    auto px = batch.pixels.template cast<S>();
    const int64_t dim = px.sample_size();
    for (int64_t at = 0; at < px.batch(); at += chunk) {
        const int64_t m = std::min<int64_t>(chunk, px.batch() - at);
        TensorT<S> part(std::vector<int64_t>{m, px.shape[1], px.shape[2], px.shape[3]});
        std::copy(px.sample(at), px.sample(at) + m * dim, part.data.begin());
        auto rec = model.reconstruct(part);
        for (int64_t i = 0; i < m; ++i) {
            const S* xs = part.sample(i);
            const S* rs = rec.sample(i);
            double acc = 0;
            for (int64_t j = 0; j < dim; ++j)
                acc += std::pow(std::abs(static_cast<double>(xs[j]) - static_cast<double>(rs[j])),
                                p);
            out.push_back(std::pow(acc, 1.0 / p));
        }
    }
    return out;
}

// detector-free mode: identical to the L2 reconstruction distance
template <typename S>
std::vector<double> plain_l2_score(const DefendedModelT<S>& model, const ImageBatch& batch) {
    return reconstruction_distance(model, batch, 2.0);
}

// ||delta - C(delta)||_2 for a batch of flattened reconstruction errors
template <typename S>
std::vector<double> anomaly_score(const DefendedModelT<S>& model, const TensorT<S>& deltas) {
    if (!model.has_detector()) throw ConfigError("model has no detector");
    if (deltas.rank() != 2)
        throw ShapeMismatchError("anomaly_score expects (n, dim) flattened errors");
    const int64_t want = model.spec().input_shape[0] * model.spec().input_shape[1] *
                         model.spec().input_shape[2];
    if (deltas.shape[1] != want)
        throw ShapeMismatchError("error vector length " + std::to_string(deltas.shape[1]) +
                                 " does not match detector input " + std::to_string(want));
    auto rec = model.detector_apply(deltas);
    const int64_t n = deltas.batch(), dim = deltas.sample_size();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const S* ds = deltas.sample(i);
        const S* rs = rec.sample(i);
        double acc = 0;
        for (int64_t j = 0; j < dim; ++j) {
            const double d = static_cast<double>(ds[j]) - static_cast<double>(rs[j]);
            acc += d * d;
        }
        out[static_cast<size_t>(i)] = std::sqrt(acc);
    }
    return out;
}

// end-to-end scores for a batch of images under the chosen scorer
template <typename S>
std::vector<double> defense_scores(const DefendedModelT<S>& model, const ImageBatch& batch,
                                   Scorer scorer) {
    if (scorer == Scorer::plain_l2) return plain_l2_score(model, batch);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(batch.size()));
    const int chunk = 256;
    auto px = batch.pixels.template cast<S>();
    const int64_t dim = px.sample_size();
    for (int64_t at = 0; at < px.batch(); at += chunk) {
        const int64_t m = std::min<int64_t>(chunk, px.batch() - at);
        TensorT<S> part(std::vector<int64_t>{m, px.shape[1], px.shape[2], px.shape[3]});
        std::copy(px.sample(at), px.sample(at) + m * dim, part.data.begin());
        auto rec = model.reconstruct(part);
        TensorT<S> deltas(std::vector<int64_t>{m, dim});
        for (int64_t i = 0; i < m; ++i) {
            const S* xs = part.sample(i);
            const S* rs = rec.sample(i);
            S* d = deltas.sample(i);
            for (int64_t j = 0; j < dim; ++j) d[j] = xs[j] - rs[j];
        }
        auto part_scores = anomaly_score(model, deltas);
        out.insert(out.end(), part_scores.begin(), part_scores.end());
    }
    return out;
}

// ||E(x) - E(x')||_2 per pair, over flattened encoder features
template <typename S>
std::vector<double> feature_interference(const DefendedModelT<S>& model, const ImageBatch& a,
                                         const ImageBatch& b) {
    if (a.pixels.shape != b.pixels.shape)
        throw ShapeMismatchError("feature_interference: pair shapes differ");
    std::vector<double> out;
    out.reserve(static_cast<size_t>(a.size()));
    const int chunk = 256;
    auto pa = a.pixels.template cast<S>();
    auto pb = b.pixels.template cast<S>();
    for (int64_t at = 0; at < pa.batch(); at += chunk) {
        const int64_t m = std::min<int64_t>(chunk, pa.batch() - at);
        TensorT<S> xa(std::vector<int64_t>{m, pa.shape[1], pa.shape[2], pa.shape[3]});
        TensorT<S> xb(xa.shape);
        std::copy(pa.sample(at), pa.sample(at) + m * pa.sample_size(), xa.data.begin());
        std::copy(pb.sample(at), pb.sample(at) + m * pb.sample_size(), xb.data.begin());
        auto fa = model.encode(xa);
        auto fb = model.encode(xb);
        const int64_t fdim = fa.sample_size();
        for (int64_t i = 0; i < m; ++i) {
            const S* u = fa.sample(i);
            const S* v = fb.sample(i);
            double acc = 0;
            for (int64_t j = 0; j < fdim; ++j) {
                const double d = static_cast<double>(u[j]) - static_cast<double>(v[j]);
                acc += d * d;
            }
            out.push_back(std::sqrt(acc));
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v);
double stddev_population(const std::vector<double>& v);

}  // namespace dafar
