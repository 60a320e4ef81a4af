#pragma once

#include <cstdint>
#include <optional>

#include "dafar/network_spec.hpp"
#include "dafar/sequential.hpp"

namespace dafar {

namespace nn {

template <typename S>
std::unique_ptr<Layer<S>> make_layer(const LayerDesc& d, std::vector<int64_t>& shape) {
    using K = LayerDesc::Kind;
    std::unique_ptr<Layer<S>> l;
    switch (d.kind) {
        case K::conv:
            if (shape.size() != 3) throw ShapeMismatchError("conv needs (c,h,w) input");
            l = std::make_unique<Conv2d<S>>(static_cast<int>(shape[0]), d.units, d.kernel, d.pad);
            break;
        case K::conv_transpose:
            if (shape.size() != 3) throw ShapeMismatchError("conv_transpose needs (c,h,w) input");
            l = std::make_unique<ConvTranspose2d<S>>(static_cast<int>(shape[0]), d.units,
                                                     d.kernel, d.pad);
            break;
        case K::max_pool: l = std::make_unique<MaxPool2d<S>>(); break;
        case K::max_unpool: l = std::make_unique<MaxUnpool2d<S>>(); break;
        case K::linear:
            if (shape.size() != 1) throw ShapeMismatchError("linear needs flattened input");
            l = std::make_unique<Linear<S>>(static_cast<int>(shape[0]), d.units);
            break;
        case K::relu: l = std::make_unique<ReLU<S>>(); break;
        case K::tanh: l = std::make_unique<Tanh<S>>(); break;
        case K::softmax: l = std::make_unique<Softmax<S>>(); break;
        case K::flatten: l = std::make_unique<Flatten<S>>(); break;
    }
    shape = l->out_shape(shape);
    return l;
}

template <typename S>
Sequential<S> build_sequential(const std::vector<LayerDesc>& descs, std::vector<int64_t>& shape) {
    Sequential<S> seq;
    for (const auto& d : descs) seq.add(make_layer<S>(d, shape));
    seq.finalize();
    return seq;
}

}  // namespace nn

// Victim classifier F(E(.)) with the plug-in feedback decoder D and optional
// anomaly detector C. The encoder doubles as the autoencoder's encoder; max-pool
// argmax positions captured during encoding drive the decoder's unpooling.
template <typename S>
class DefendedModelT {
public:
    DefendedModelT(NetworkSpec spec, bool with_detector, uint64_t seed)
        : spec_(std::move(spec)), has_detector_(with_detector) {
        std::vector<int64_t> shape(spec_.input_shape.begin(), spec_.input_shape.end());
        if (spec_.feedback_position < 0 ||
            spec_.feedback_position >= static_cast<int>(spec_.victim.size()))
            throw ConfigError("feedback_position out of range");

        encoder_ = nn::build_sequential<S>(spec_.encoder_layers(), shape);
        feature_shape_ = shape;
        head_ = nn::build_sequential<S>(spec_.head_layers(), shape);
        if (shape != std::vector<int64_t>{spec_.num_classes})
            throw ShapeMismatchError("head output is not the class-probability vector");
        if (spec_.head_layers().empty() ||
            spec_.head_layers().back().kind != LayerDesc::Kind::softmax)
            throw ConfigError("victim head must end in softmax");

        const int pools = count_kind(spec_.encoder_layers(), LayerDesc::Kind::max_pool);
        const int unpools = count_kind(spec_.decoder, LayerDesc::Kind::max_unpool);
        if (pools != unpools)
            throw ConfigError("decoder max-unpools (" + std::to_string(unpools) +
                              ") must pair 1:1 with encoder max-pools (" + std::to_string(pools) +
                              ")");

        std::vector<int64_t> dshape = feature_shape_;
        decoder_ = nn::build_sequential<S>(spec_.decoder, dshape);
        if (dshape != std::vector<int64_t>(spec_.input_shape.begin(), spec_.input_shape.end()))
            throw ShapeMismatchError("decoder output shape does not reproduce the input shape");

        if (has_detector_) {
            if (spec_.detector.empty()) throw ConfigError("with_detector set but spec has none");
            const int64_t err_dim =
                spec_.input_shape[0] * spec_.input_shape[1] * spec_.input_shape[2];
            std::vector<int64_t> tshape{err_dim};
            detector_ = nn::build_sequential<S>(spec_.detector, tshape);
            if (tshape != std::vector<int64_t>{err_dim})
                throw ShapeMismatchError("detector must map error vectors to their own shape");
        }

        encoder_.init_params(seed, 0);
        head_.init_params(seed, 100);
        decoder_.init_params(seed, 200);
        if (has_detector_) detector_.init_params(seed, 300);
    }

    const NetworkSpec& spec() const { return spec_; }
    bool has_detector() const { return has_detector_; }
    const std::vector<int64_t>& feature_shape() const { return feature_shape_; }

    struct FullOutput {
        TensorT<S> features;
        TensorT<S> logits;
        TensorT<S> probabilities;
        TensorT<S> reconstruction;
    };

    FullOutput forward_full(const TensorT<S>& x) const {
        check_input(x);
        nn::PoolStack pools;
        nn::SeqState<S> es, hs, ds;
        FullOutput out;
        out.features = encoder_.forward(x, es, &pools);
        out.probabilities = head_.forward(out.features, hs);
        out.logits = hs.acts[head_.size() - 1];
        out.reconstruction = decoder_.forward(out.features, ds, &pools);
        if (!pools.stack.empty())
            throw ShapeMismatchError("decoder consumed fewer pooling records than captured");
        return out;
    }

    // classification only; skips the feedback loop
    TensorT<S> classify(const TensorT<S>& x) const {
        check_input(x);
        nn::SeqState<S> es, hs;
        nn::PoolStack pools;
        const auto& f = encoder_.forward(x, es, &pools);
        return head_.forward(f, hs);
    }

    TensorT<S> logits_of(const TensorT<S>& x) const {
        check_input(x);
        nn::SeqState<S> es, hs;
        nn::PoolStack pools;
        const auto& f = encoder_.forward(x, es, &pools);
        head_.forward(f, hs);
        return hs.acts[head_.size() - 1];
    }

    TensorT<S> encode(const TensorT<S>& x) const {
        check_input(x);
        nn::SeqState<S> es;
        nn::PoolStack pools;
        return encoder_.forward(x, es, &pools);
    }

    TensorT<S> reconstruct(const TensorT<S>& x) const {
        check_input(x);
        nn::SeqState<S> es, ds;
        nn::PoolStack pools;
        const auto& f = encoder_.forward(x, es, &pools);
        return decoder_.forward(f, ds, &pools);
    }

    TensorT<S> detector_apply(const TensorT<S>& delta) const {
        require_detector();
        nn::SeqState<S> ts;
        return detector_.forward(delta, ts);
    }

    // d(loss)/d(input) of the victim alone, seeded with d(loss)/d(logits).
    // Pure: parameters are never touched.
    TensorT<S> victim_input_grad(const TensorT<S>& x, const TensorT<S>& dlogits) const {
        check_input(x);
        nn::PoolStack pools;
        nn::SeqState<S> es, hs;
        const auto& f = encoder_.forward(x, es, &pools);
        head_.forward(f, hs);
        // seed below the softmax: logits are the input of the last head layer
        TensorT<S> dfeat = head_.backward(dlogits, hs, nullptr, head_.size() - 1, 0);
        return encoder_.backward(dfeat, es, nullptr);
    }

    uint64_t param_hash() const {
        uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
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
        mix(head_);
        mix(decoder_);
        if (has_detector_) mix(detector_);
        return h;
    }

    int64_t param_count() const {
        return encoder_.param_count() + head_.param_count() + decoder_.param_count() +
               (has_detector_ ? detector_.param_count() : 0);
    }

    nn::Sequential<S>& encoder() { return encoder_; }
    nn::Sequential<S>& head() { return head_; }
    nn::Sequential<S>& decoder() { return decoder_; }
    nn::Sequential<S>& detector() {
        require_detector();
        return detector_;
    }
    const nn::Sequential<S>& encoder() const { return encoder_; }
    const nn::Sequential<S>& head() const { return head_; }
    const nn::Sequential<S>& decoder() const { return decoder_; }
    const nn::Sequential<S>& detector() const {
        require_detector();
        return detector_;
    }

    void check_input(const TensorT<S>& x) const {
        if (x.rank() != 4 || x.shape[1] != spec_.input_shape[0] ||
            x.shape[2] != spec_.input_shape[1] || x.shape[3] != spec_.input_shape[2])
            throw ShapeMismatchError("model expects (n," + std::to_string(spec_.input_shape[0]) +
                                     "," + std::to_string(spec_.input_shape[1]) + "," +
                                     std::to_string(spec_.input_shape[2]) + "), got " +
                                     x.shape_str());
    }

private:
    void require_detector() const {
        if (!has_detector_) throw ConfigError("model was built without a detector");
    }
    static int count_kind(const std::vector<LayerDesc>& v, LayerDesc::Kind k) {
        int n = 0;
        for (const auto& d : v) n += (d.kind == k);
        return n;
    }

    NetworkSpec spec_;
    bool has_detector_;
    std::vector<int64_t> feature_shape_;
    nn::Sequential<S> encoder_, head_, decoder_, detector_;
};

using DefendedModel = DefendedModelT<float>;

template <typename S>
DefendedModelT<S> build_model(const NetworkSpec& spec, bool with_detector, uint64_t seed) {
    return DefendedModelT<S>(spec, with_detector, seed);
}

}  // namespace dafar
