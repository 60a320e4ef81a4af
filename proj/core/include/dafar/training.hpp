#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "dafar/checkpoint.hpp"
#include "dafar/dataset.hpp"
#include "dafar/model.hpp"
#include "dafar/optimizer.hpp"

namespace dafar {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double lambda = 1.0;  // weight of the reconstruction term
    std::string optimizer = "adam";
    uint64_t seed = 1;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
        if (lambda <= 0) throw ConfigError("lambda must be > 0");
        if (optimizer != "adam") throw ConfigError("unknown optimizer: " + optimizer);
    }
};

// decomposed value of the combined training objective
struct JointLoss {
    double reconstruction = 0;  // mean per-sample L2 norm of x - D(E(x))
    double cross_entropy = 0;   // mean -log p_true, probabilities clamped at 1e-12
    double lambda = 1.0;
    double total() const { return lambda * reconstruction + cross_entropy; }
};

namespace train_detail {

constexpr double kProbClamp = 1e-12;

template <typename S>
double ce_of_probs(const TensorT<S>& probs, const std::vector<int>& labels) {
    const int64_t n = probs.shape[0], d = probs.shape[1];
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double p = static_cast<double>(probs.data[i * d + labels[static_cast<size_t>(i)]]);
        acc += -std::log(std::max(p, kProbClamp));
    }
    return acc / static_cast<double>(n);
}

template <typename S>
double recon_norm_mean(const TensorT<S>& x, const TensorT<S>& r) {
    const int64_t n = x.batch(), m = x.sample_size();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const S* xs = x.sample(i);
        const S* rs = r.sample(i);
        double q = 0;
        for (int64_t j = 0; j < m; ++j) {
            const double d = static_cast<double>(xs[j]) - static_cast<double>(rs[j]);
            q += d * d;
        }
        acc += std::sqrt(q);
    }
    return acc / static_cast<double>(n);
}

// d/d(recon) of mean_i lambda * ||x_i - r_i||_2; zero where the norm vanishes
template <typename S>
TensorT<S> recon_grad(const TensorT<S>& x, const TensorT<S>& r, double lambda) {
    TensorT<S> g(r.shape);
    const int64_t n = x.batch(), m = x.sample_size();
    for (int64_t i = 0; i < n; ++i) {
        const S* xs = x.sample(i);
        const S* rs = r.sample(i);
        S* gs = g.sample(i);
        double q = 0;
        for (int64_t j = 0; j < m; ++j) {
            const double d = static_cast<double>(rs[j]) - static_cast<double>(xs[j]);
            q += d * d;
        }
        const double nrm = std::sqrt(q);
        if (nrm == 0) continue;
        const double scale = lambda / (nrm * static_cast<double>(n));
        for (int64_t j = 0; j < m; ++j)
            gs[j] = static_cast<S>(scale * (static_cast<double>(rs[j]) - static_cast<double>(xs[j])));
    }
    return g;
}

// d/d(logits) of mean_i -log softmax(z_i)[y_i]  ==  (p - onehot(y)) / n
template <typename S>
TensorT<S> ce_logit_grad(const TensorT<S>& probs, const std::vector<int>& labels) {
    TensorT<S> g(probs.shape);
    const int64_t n = probs.shape[0], d = probs.shape[1];
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < d; ++c)
            g.data[i * d + c] =
                (probs.data[i * d + c] - S(labels[static_cast<size_t>(i)] == c ? 1 : 0)) /
                static_cast<S>(n);
    return g;
}

}  // namespace train_detail

template <typename S>
JointLoss joint_loss(const DefendedModelT<S>& model, const TensorT<S>& pixels,
                     const std::vector<int>& labels, double lambda) {
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    if (static_cast<int64_t>(labels.size()) != pixels.batch())
        throw ShapeMismatchError("joint_loss: batch has no labels for every sample");
    auto out = model.forward_full(pixels);
    JointLoss l;
    l.lambda = lambda;
    l.reconstruction = train_detail::recon_norm_mean(pixels, out.reconstruction);
    l.cross_entropy = train_detail::ce_of_probs(out.probabilities, labels);
    if (!std::isfinite(l.total()))
        throw DivergenceError("joint loss is not finite");
    return l;
}

template <typename S>
JointLoss joint_loss(const DefendedModelT<S>& model, const ImageBatch& batch, double lambda) {
    return joint_loss(model, batch.pixels.template cast<S>(), batch.labels, lambda);
}

// reusable buffers for the combined pass; keep one alive across batches
template <typename S>
struct JointWorkspace {
    nn::SeqState<S> enc, head, dec;
};

// One combined forward/backward pass over a batch. Gradient stores may be
// null when only the loss value is wanted. This is the exact computation the
// training loop descends, so it is also what the finite-difference suite checks.
template <typename S>
JointLoss joint_forward_backward(const DefendedModelT<S>& model, const TensorT<S>& xb,
                                 const std::vector<int>& yb, double lambda, nn::GradStore<S>* egr,
                                 nn::GradStore<S>* hgr, nn::GradStore<S>* dgr,
                                 JointWorkspace<S>* ws = nullptr) {
    JointWorkspace<S> local;
    if (!ws) ws = &local;
    nn::PoolStack pools;
    const auto& feat = model.encoder().forward(xb, ws->enc, &pools);
    const auto& probs = model.head().forward(feat, ws->head);
    const auto& recon = model.decoder().forward(feat, ws->dec, &pools);

    JointLoss l;
    l.lambda = lambda;
    l.cross_entropy = train_detail::ce_of_probs(probs, yb);
    l.reconstruction = train_detail::recon_norm_mean(xb, recon);
    if (!std::isfinite(l.total())) throw DivergenceError("joint loss is not finite");

    if (egr || hgr || dgr) {
        auto dlogits = train_detail::ce_logit_grad(probs, yb);
        auto dfeat = model.head().backward(dlogits, ws->head, hgr, model.head().size() - 1, 0);
        auto drec = train_detail::recon_grad(xb, recon, lambda);
        const auto& dfeat_dec = model.decoder().backward(drec, ws->dec, dgr);
        for (size_t i = 0; i < dfeat.data.size(); ++i) dfeat.data[i] += dfeat_dec.data[i];
        model.encoder().backward(dfeat, ws->enc, egr);
    }
    return l;
}

template <typename S>
int64_t count_correct(const DefendedModelT<S>& model, const TensorT<S>& pixels,
                      const std::vector<int>& labels, int chunk = 512) {
    int64_t correct = 0;
    const int64_t n = pixels.batch();
    for (int64_t at = 0; at < n; at += chunk) {
        const int64_t m = std::min<int64_t>(chunk, n - at);
        TensorT<S> part(std::vector<int64_t>{m, pixels.shape[1], pixels.shape[2], pixels.shape[3]});
        std::copy(pixels.sample(at), pixels.sample(at) + m * pixels.sample_size(),
                  part.data.begin());
        auto probs = model.classify(part);
        const int64_t d = probs.shape[1];
        for (int64_t i = 0; i < m; ++i) {
            int64_t arg = 0;
            for (int64_t c = 1; c < d; ++c)
                if (probs.data[i * d + c] > probs.data[i * d + arg]) arg = c;
            correct += (arg == labels[static_cast<size_t>(at + i)]);
        }
    }
    return correct;
}

template <typename S>
double accuracy(const DefendedModelT<S>& model, const ImageBatch& batch) {
    if (batch.size() == 0) return 0.0;
    auto px = batch.pixels.template cast<S>();
    return static_cast<double>(count_correct(model, px, batch.labels)) /
           static_cast<double>(batch.size());
}

struct EpochLog {
    int epoch = 0;
    double joint_loss = 0;
    double ce_term = 0;
    double recon_term = 0;
    double clean_accuracy = 0;
};

// epoch, joint_loss, ce_term, recon_term, clean_accuracy
std::string loss_log_csv(const std::vector<EpochLog>& log);

// Trains victim and feedback decoder together on clean samples by descending
// lambda*||x - D(E(x))||_2 + CE(F(E(x)), y). Returns the per-epoch loss log.
// eval (optional) supplies the clean accuracy column; checkpoint_path
// (optional) receives an atomically written checkpoint after each epoch.
template <typename S>
std::vector<EpochLog> train_joint(DefendedModelT<S>& model, const ImageBatch& train,
                                  const TrainConfig& cfg, const ImageBatch* eval = nullptr,
                                  const std::filesystem::path& checkpoint_path = {},
                                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
    cfg.validate();
    auto params = model.encoder().param_tensors();
    {
        auto hp = model.head().param_tensors();
        auto dp = model.decoder().param_tensors();
        params.insert(params.end(), hp.begin(), hp.end());
        params.insert(params.end(), dp.begin(), dp.end());
    }
    nn::Adam<S> adam(cfg.learning_rate);

    auto egr = model.encoder().alloc_grads();
    auto hgr = model.head().alloc_grads();
    auto dgr = model.decoder().alloc_grads();

    const int64_t n = train.size();
    std::vector<EpochLog> log;
    TensorT<S> all_pixels = train.pixels.template cast<S>();
    JointWorkspace<S> ws;
    TensorT<S> xb;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng = Rng::seeded(cfg.seed, 0x5affe + static_cast<uint64_t>(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[shuffle_rng.below(static_cast<uint64_t>(i + 1))]);

        double sum_ce = 0, sum_rec = 0;
        int64_t steps = 0;
        for (int64_t at = 0; at < n; at += cfg.batch_size) {
            const int64_t m = std::min<int64_t>(cfg.batch_size, n - at);
            ensure(xb, {m, all_pixels.shape[1], all_pixels.shape[2], all_pixels.shape[3]});
            std::vector<int> yb(static_cast<size_t>(m));
            const int64_t ss = all_pixels.sample_size();
            for (int64_t i = 0; i < m; ++i) {
                const int64_t src = order[static_cast<size_t>(at + i)];
                std::copy(all_pixels.sample(src), all_pixels.sample(src) + ss, xb.sample(i));
                yb[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(src)];
            }

            nn::Sequential<S>::zero(egr);
            nn::Sequential<S>::zero(hgr);
            nn::Sequential<S>::zero(dgr);
            JointLoss l;
            try {
                l = joint_forward_backward(model, xb, yb, cfg.lambda, &egr, &hgr, &dgr, &ws);
            } catch (const DivergenceError&) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
            }
            sum_ce += l.cross_entropy * static_cast<double>(m);
            sum_rec += l.reconstruction * static_cast<double>(m);

            nn::GradStore<S> grads;
            grads.reserve(egr.size() + hgr.size() + dgr.size());
            for (auto& g : egr) grads.push_back(std::move(g));
            for (auto& g : hgr) grads.push_back(std::move(g));
            for (auto& g : dgr) grads.push_back(std::move(g));
            adam.step(params, grads);
            size_t k = 0;
            for (auto& g : egr) g = std::move(grads[k++]);
            for (auto& g : hgr) g = std::move(grads[k++]);
            for (auto& g : dgr) g = std::move(grads[k++]);
            ++steps;
        }
        if (steps == 0) continue;  // empty stream: no update, nothing to log

        EpochLog row;
        row.epoch = epoch;
        row.ce_term = sum_ce / static_cast<double>(n);
        row.recon_term = sum_rec / static_cast<double>(n);
        row.joint_loss = cfg.lambda * row.recon_term + row.ce_term;
        row.clean_accuracy = eval ? accuracy(model, *eval) : accuracy(model, train);
        log.push_back(row);
        if (on_epoch) on_epoch(row);
        if constexpr (std::is_same_v<S, float>) {
            if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path, epoch);
        }
    }
    return log;
}

// Reconstruction errors of clean samples; the detector's training material.
// Only obtainable through collect_errors, so adversarial data cannot leak in.
class ErrorDataset {
public:
    const Tensor& records() const { return records_; }
    int64_t size() const { return records_.batch(); }
    int64_t dim() const { return records_.sample_size(); }
    const std::string& provenance() const { return provenance_; }

    template <typename S>
    friend ErrorDataset collect_errors(const DefendedModelT<S>& model, const ImageBatch& clean);

private:
    ErrorDataset() = default;
    Tensor records_;
    std::string provenance_;
};

// flatten(x - D(E(x))) for every sample of a clean stream
template <typename S>
ErrorDataset collect_errors(const DefendedModelT<S>& model, const ImageBatch& clean) {
    ErrorDataset out;
    const int64_t n = clean.size();
    const int64_t dim = clean.pixels.sample_size();
    out.records_ = Tensor({n, dim});
    out.provenance_ = "clean-stream";
    const int chunk = 256;
    auto px = clean.pixels.template cast<S>();
    for (int64_t at = 0; at < n; at += chunk) {
        const int64_t m = std::min<int64_t>(chunk, n - at);
        TensorT<S> part(std::vector<int64_t>{m, px.shape[1], px.shape[2], px.shape[3]});
        std::copy(px.sample(at), px.sample(at) + m * px.sample_size(), part.data.begin());
        auto rec = model.reconstruct(part);
        for (int64_t i = 0; i < m; ++i) {
            const S* xs = part.sample(i);
            const S* rs = rec.sample(i);
            float* o = out.records_.sample(at + i);
            for (int64_t j = 0; j < dim; ++j)
                o[j] = static_cast<float>(xs[j]) - static_cast<float>(rs[j]);
        }
    }
    return out;
}

// Semi-supervised detector training: minimize mean ||delta - C(delta)||_2
// over clean reconstruction errors.
template <typename S>
std::vector<EpochLog> train_detector(nn::Sequential<S>& detector, const ErrorDataset& errors,
                                     const TrainConfig& cfg) {
    cfg.validate();
    if (errors.size() == 0) throw ConfigError("train_detector: empty error dataset");
    auto params = detector.param_tensors();
    nn::Adam<S> adam(cfg.learning_rate);
    auto grads = detector.alloc_grads();
    TensorT<S> recs = errors.records().template cast<S>();
    const int64_t n = recs.batch();
    std::vector<EpochLog> log;
    nn::SeqState<S> st;
    TensorT<S> xb;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng = Rng::seeded(cfg.seed, 0xde7ec7 + static_cast<uint64_t>(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[shuffle_rng.below(static_cast<uint64_t>(i + 1))]);

        double sum = 0;
        for (int64_t at = 0; at < n; at += cfg.batch_size) {
            const int64_t m = std::min<int64_t>(cfg.batch_size, n - at);
            ensure(xb, {m, recs.shape[1]});
            for (int64_t i = 0; i < m; ++i)
                std::copy(recs.sample(order[static_cast<size_t>(at + i)]),
                          recs.sample(order[static_cast<size_t>(at + i)]) + recs.sample_size(),
                          xb.sample(i));
            const auto& out = detector.forward(xb, st);
            const double l = train_detail::recon_norm_mean(xb, out);
            if (!std::isfinite(l))
                throw DivergenceError("detector training diverged at epoch " +
                                      std::to_string(epoch));
            sum += l * static_cast<double>(m);
            nn::Sequential<S>::zero(grads);
            auto dout = train_detail::recon_grad(xb, out, 1.0);
            detector.backward(dout, st, &grads);
            adam.step(params, grads);
        }
        EpochLog row;
        row.epoch = epoch;
        row.recon_term = sum / static_cast<double>(n);
        row.joint_loss = row.recon_term;
        log.push_back(row);
    }
    return log;
}

}  // namespace dafar
