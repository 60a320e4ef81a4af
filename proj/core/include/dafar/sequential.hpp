#pragma once

#include <memory>
#include <vector>

#include "dafar/layers.hpp"

namespace dafar::nn {

// Activations, gradients and pooling indices captured by one forward/backward
// pass. Keeping the state object alive across batches reuses every buffer.
template <typename S>
struct SeqState {
    std::vector<TensorT<S>> acts;       // acts[0] = input, acts[i+1] = layer i output
    std::vector<TensorT<S>> dacts;      // backward mirror of acts
    std::vector<TensorT<int32_t>> aux;  // per-layer pool indices (empty elsewhere)
};

template <typename S>
class Sequential {
public:
    Sequential() = default;

    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    void add(std::unique_ptr<Layer<S>> layer) { layers_.push_back(std::move(layer)); }

    size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }
    Layer<S>& layer(size_t i) { return *layers_[i]; }
    const Layer<S>& layer(size_t i) const { return *layers_[i]; }

    const TensorT<S>& forward(const TensorT<S>& x, SeqState<S>& st,
                              PoolStack* pools = nullptr) const {
        st.acts.resize(layers_.size() + 1);
        if (st.aux.size() != layers_.size()) st.aux.assign(layers_.size(), TensorT<int32_t>{});
        ensure(st.acts[0], x.shape);
        std::copy(x.data.begin(), x.data.end(), st.acts[0].data.begin());
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->forward(st.acts[i], st.acts[i + 1], st.aux[i], pools);
        return st.acts.back();
    }

    // convenience forward without reusable state
    TensorT<S> apply(const TensorT<S>& x, PoolStack* pools = nullptr) const {
        SeqState<S> st;
        forward(x, st, pools);
        return std::move(st.acts.back());
    }

    // backward over layers [first, from): dy is d(loss)/d(acts[from]); the
    // result, d(loss)/d(acts[first]), lives in st.dacts[first]. grads may be
    // null for input-gradient-only passes.
    const TensorT<S>& backward(const TensorT<S>& dy, SeqState<S>& st, GradStore<S>* grads,
                               size_t from, size_t first = 0) const {
        if (grad_base_.size() != layers_.size()) finalize();
        st.dacts.resize(layers_.size() + 1);
        ensure(st.dacts[from], dy.shape);
        std::copy(dy.data.begin(), dy.data.end(), st.dacts[from].data.begin());
        for (size_t i = from; i-- > first;)
            layers_[i]->backward(st.acts[i], st.acts[i + 1], st.dacts[i + 1], st.aux[i],
                                 st.dacts[i], grads, grad_base_[i]);
        return st.dacts[first];
    }

    const TensorT<S>& backward(const TensorT<S>& dy, SeqState<S>& st,
                               GradStore<S>* grads = nullptr) const {
        return backward(dy, st, grads, layers_.size(), 0);
    }

    // parameter tensors across layers, in layer order
    std::vector<std::vector<S>*> param_tensors() {
        std::vector<std::vector<S>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<const std::vector<S>*> param_tensors() const {
        std::vector<const std::vector<S>*> out;
        for (const auto& l : layers_)
            for (const auto* p : static_cast<const Layer<S>&>(*l).params()) out.push_back(p);
        return out;
    }

    GradStore<S> alloc_grads() const {
        finalize();
        GradStore<S> g;
        for (const auto& l : layers_)
            for (const auto* p : static_cast<const Layer<S>&>(*l).params())
                g.emplace_back(p->size(), S(0));
        return g;
    }

    static void zero(GradStore<S>& g) {
        for (auto& v : g) std::fill(v.begin(), v.end(), S(0));
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& l : layers_)
            for (const auto* p : static_cast<const Layer<S>&>(*l).params())
                n += static_cast<int64_t>(p->size());
        return n;
    }

    void init_params(uint64_t seed, uint64_t salt_base) {
        for (size_t i = 0; i < layers_.size(); ++i) {
            Rng r = Rng::seeded(seed, salt_base + i);
            layers_[i]->init_params(r);
        }
    }

    // per-sample shape chaining; throws ShapeMismatchError on inconsistency
    std::vector<int64_t> infer_shape(std::vector<int64_t> in) const {
        for (const auto& l : layers_) in = l->out_shape(in);
        return in;
    }

    // must be called after the layer list is final (backward needs the offsets)
    void finalize() const {
        grad_base_.assign(layers_.size(), 0);
        size_t base = 0;
        for (size_t i = 0; i < layers_.size(); ++i) {
            grad_base_[i] = base;
            base += static_cast<const Layer<S>&>(*layers_[i]).params().size();
        }
    }

private:
    std::vector<std::unique_ptr<Layer<S>>> layers_;
    mutable std::vector<size_t> grad_base_;
};

}  // namespace dafar::nn
