#pragma once

#include "dafar/attacks.hpp"
#include "dafar/training.hpp"

namespace dafar {

// pixel -> +1 if above t else -1 (1-bit input transformation)
inline ImageBatch binary_filter(const ImageBatch& batch, float t = 0.0f) {
    if (t < -1.0f || t > 1.0f) throw ConfigError("binary filter threshold must be in [-1,1]");
    ImageBatch out;
    out.pixels = Tensor(batch.pixels.shape);
    out.labels = batch.labels;
    for (size_t i = 0; i < batch.pixels.data.size(); ++i)
        out.pixels.data[i] = batch.pixels.data[i] > t ? 1.0f : -1.0f;
    return out;
}

// Standalone denoising autoencoder with the same mirrored architecture as the
// feedback decoder; trained to map noise-corrupted inputs to clean targets.
template <typename S>
class DenoisingAutoencoderT {
public:
    DenoisingAutoencoderT(const NetworkSpec& spec, uint64_t seed) : spec_(spec) {
        std::vector<int64_t> shape(spec.input_shape.begin(), spec.input_shape.end());
        encoder_ = nn::build_sequential<S>(spec.encoder_layers(), shape);
        decoder_ = nn::build_sequential<S>(spec.decoder, shape);
        if (shape != std::vector<int64_t>(spec.input_shape.begin(), spec.input_shape.end()))
            throw ShapeMismatchError("denoising AE decoder does not mirror its encoder");
        encoder_.init_params(seed, 400);
        decoder_.init_params(seed, 500);
    }

    TensorT<S> reconstruct(const TensorT<S>& x) const {
        nn::PoolStack pools;
        nn::SeqState<S> es, ds;
        const auto& f = encoder_.forward(x, es, &pools);
        return decoder_.forward(f, ds, &pools);
    }

    ImageBatch purify(const ImageBatch& batch) const {
        ImageBatch out;
        out.labels = batch.labels;
        auto rec = reconstruct(batch.pixels.template cast<S>());
        out.pixels = rec.template cast<float>();
        for (auto& v : out.pixels.data) v = std::min(1.0f, std::max(-1.0f, v));
        return out;
    }

    uint64_t param_hash() const {
        uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const nn::Sequential<S>& s) {
            for (const auto* p : s.param_tensors()) {
                const auto* bytes = reinterpret_cast<const unsigned char*>(p->data());
                for (size_t i = 0; i < p->size() * sizeof(S); ++i) {
                    h ^= bytes[i];
                    h *= 1099511628211ULL;
                }
            }
        };
        mix(encoder_);
        mix(decoder_);
        return h;
    }

    // noise sigma is on the [0,1] scale, like attack intensities
    std::vector<EpochLog> train(const ImageBatch& clean, double noise_sigma,
                                const TrainConfig& cfg) {
        cfg.validate();
        auto params = encoder_.param_tensors();
        auto dp = decoder_.param_tensors();
        params.insert(params.end(), dp.begin(), dp.end());
        nn::Adam<S> adam(cfg.learning_rate);
        auto egr = encoder_.alloc_grads();
        auto dgr = decoder_.alloc_grads();

        auto clean_px = clean.pixels.template cast<S>();
        const int64_t n = clean_px.batch();
        const int64_t ss = clean_px.sample_size();
        std::vector<EpochLog> log;
        nn::SeqState<S> es, ds;
        TensorT<S> xb, tb;

        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            std::vector<int64_t> order(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            Rng shuffle_rng = Rng::seeded(cfg.seed, 0xda3 + static_cast<uint64_t>(epoch));
            for (int64_t i = n - 1; i > 0; --i)
                std::swap(order[static_cast<size_t>(i)],
                          order[shuffle_rng.below(static_cast<uint64_t>(i + 1))]);

            double sum = 0;
            int64_t steps = 0;
            for (int64_t at = 0; at < n; at += cfg.batch_size) {
                const int64_t m = std::min<int64_t>(cfg.batch_size, n - at);
                ensure(xb, {m, clean_px.shape[1], clean_px.shape[2], clean_px.shape[3]});
                ensure(tb, xb.shape);
                for (int64_t i = 0; i < m; ++i) {
                    const int64_t src = order[static_cast<size_t>(at + i)];
                    std::copy(clean_px.sample(src), clean_px.sample(src) + ss, tb.sample(i));
                    Rng noise = Rng::seeded(cfg.seed,
                                            0x4015e + static_cast<uint64_t>(epoch) * n + src);
                    S* xp = xb.sample(i);
                    const S* tp = tb.sample(i);
                    for (int64_t j = 0; j < ss; ++j) {
                        double v = static_cast<double>(tp[j]) + noise.normal(0.0, 2.0 * noise_sigma);
                        xp[j] = static_cast<S>(std::min(1.0, std::max(-1.0, v)));
                    }
                }
                nn::PoolStack pools;
                const auto& f = encoder_.forward(xb, es, &pools);
                const auto& rec = decoder_.forward(f, ds, &pools);
                const double l = train_detail::recon_norm_mean(tb, rec);
                if (!std::isfinite(l)) throw DivergenceError("denoising AE diverged");
                sum += l * static_cast<double>(m);
                ++steps;

                nn::Sequential<S>::zero(egr);
                nn::Sequential<S>::zero(dgr);
                auto drec = train_detail::recon_grad(tb, rec, 1.0);
                const auto& dfeat = decoder_.backward(drec, ds, &dgr);
                encoder_.backward(dfeat, es, &egr);
                nn::GradStore<S> grads;
                grads.reserve(egr.size() + dgr.size());
                for (auto& g : egr) grads.push_back(std::move(g));
                for (auto& g : dgr) grads.push_back(std::move(g));
                adam.step(params, grads);
                size_t k = 0;
                for (auto& g : egr) g = std::move(grads[k++]);
                for (auto& g : dgr) g = std::move(grads[k++]);
            }
            if (steps == 0) continue;
            EpochLog row;
            row.epoch = epoch;
            row.recon_term = sum / static_cast<double>(n);
            row.joint_loss = row.recon_term;
            log.push_back(row);
        }
        return log;
    }

private:
    NetworkSpec spec_;
    nn::Sequential<S> encoder_, decoder_;
};

using DenoisingAutoencoder = DenoisingAutoencoderT<float>;

// Supervised binary classifier on clean vs adversarial images: the victim's
// encoder structure with a 2-way head. Attack-dependent by construction; the
// generating AttackConfig is recorded alongside.
template <typename S>
class BinaryClassifierT {
public:
    BinaryClassifierT(const NetworkSpec& spec, uint64_t seed) {
        std::vector<int64_t> shape(spec.input_shape.begin(), spec.input_shape.end());
        net_ = nn::build_sequential<S>(binary_layers(spec), shape);
        net_.init_params(seed, 600);
    }

    static std::vector<LayerDesc> binary_layers(const NetworkSpec& spec) {
        auto layers = spec.encoder_layers();
        layers.push_back(LayerDesc::flatten());
        layers.push_back(LayerDesc::linear(64));
        layers.push_back(LayerDesc::relu());
        layers.push_back(LayerDesc::linear(2));
        layers.push_back(LayerDesc::softmax());
        return layers;
    }

    const AttackConfig& training_attack() const { return training_attack_; }

    uint64_t param_hash() const {
        uint64_t h = 1469598103934665603ULL;
        for (const auto* p : net_.param_tensors()) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(p->data());
            for (size_t i = 0; i < p->size() * sizeof(S); ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        }
        return h;
    }

    // 1 = adversarial
    std::vector<int> predict(const ImageBatch& batch) const {
        std::vector<int> out;
        out.reserve(static_cast<size_t>(batch.size()));
        const int chunk = 256;
        auto px = batch.pixels.template cast<S>();
        for (int64_t at = 0; at < px.batch(); at += chunk) {
            const int64_t m = std::min<int64_t>(chunk, px.batch() - at);
            TensorT<S> part(std::vector<int64_t>{m, px.shape[1], px.shape[2], px.shape[3]});
            std::copy(px.sample(at), px.sample(at) + m * px.sample_size(), part.data.begin());
            nn::SeqState<S> st;
            nn::PoolStack pools;
            const auto& probs = net_.forward(part, st, &pools);
            for (int64_t i = 0; i < m; ++i)
                out.push_back(probs.data[i * 2 + 1] > probs.data[i * 2] ? 1 : 0);
        }
        return out;
    }

    void train(const ImageBatch& clean, const AdversarialSet& adversarial,
               const TrainConfig& cfg) {
        cfg.validate();
        if (adversarial.size() == 0)
            throw ConfigError("binary classifier needs a non-empty adversarial stream");
        training_attack_ = adversarial.config;

        ImageBatch all = clean.concat(adversarial.adversarials);
        std::vector<int> flags(static_cast<size_t>(all.size()), 0);
        for (int64_t i = clean.size(); i < all.size(); ++i) flags[static_cast<size_t>(i)] = 1;

        auto params = net_.param_tensors();
        nn::Adam<S> adam(cfg.learning_rate);
        auto grads = net_.alloc_grads();
        auto px = all.pixels.template cast<S>();
        const int64_t n = px.batch(), ss = px.sample_size();
        nn::SeqState<S> st;
        TensorT<S> xb;

        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            std::vector<int64_t> order(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            Rng shuffle_rng = Rng::seeded(cfg.seed, 0xb1c + static_cast<uint64_t>(epoch));
            for (int64_t i = n - 1; i > 0; --i)
                std::swap(order[static_cast<size_t>(i)],
                          order[shuffle_rng.below(static_cast<uint64_t>(i + 1))]);

            for (int64_t at = 0; at < n; at += cfg.batch_size) {
                const int64_t m = std::min<int64_t>(cfg.batch_size, n - at);
                ensure(xb, {m, px.shape[1], px.shape[2], px.shape[3]});
                std::vector<int> yb(static_cast<size_t>(m));
                for (int64_t i = 0; i < m; ++i) {
                    const int64_t src = order[static_cast<size_t>(at + i)];
                    std::copy(px.sample(src), px.sample(src) + ss, xb.sample(i));
                    yb[static_cast<size_t>(i)] = flags[static_cast<size_t>(src)];
                }
                nn::PoolStack pools;
                const auto& probs = net_.forward(xb, st, &pools);
                const double ce = train_detail::ce_of_probs(probs, yb);
                if (!std::isfinite(ce)) throw DivergenceError("binary classifier diverged");
                nn::Sequential<S>::zero(grads);
                auto dlogits = train_detail::ce_logit_grad(probs, yb);
                net_.backward(dlogits, st, &grads, net_.size() - 1, 0);
                adam.step(params, grads);
            }
        }
    }

    // fraction of correct clean/adversarial calls on a held-out pair of sets
    double binary_accuracy(const ImageBatch& clean, const ImageBatch& adversarial) const {
        auto pc = predict(clean);
        auto pa = predict(adversarial);
        double ok = 0;
        for (int v : pc) ok += v == 0;
        for (int v : pa) ok += v == 1;
        return ok / static_cast<double>(pc.size() + pa.size());
    }

private:
    nn::Sequential<S> net_;
    AttackConfig training_attack_;
};

using BinaryClassifier = BinaryClassifierT<float>;

}  // namespace dafar
