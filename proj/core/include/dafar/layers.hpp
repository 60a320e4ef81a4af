#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "dafar/rng.hpp"
#include "dafar/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dafar::nn {

template <typename S>
using GradStore = std::vector<std::vector<S>>;

// pooling indices flowing from encoder max-pools to mirrored decoder max-unpools (LIFO)
struct PoolStack {
    std::vector<TensorT<int32_t>> stack;
};

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

template <typename S>
std::vector<S>& workspace(int slot) {
    thread_local std::vector<S> bufs[2];
    return bufs[slot];
}

// Stride-1 patch extraction; col is (ic*k*k) x (oh*ow), row-major. Each col
// row is a shifted copy of one image row sequence, so the inner loops are
// plain memcpy/fill runs instead of per-element gathers.
template <typename S>
void im2col(const S* x, int ic, int h, int w, int k, int pad, S* col) {
    const int oh = h + 2 * pad - k + 1;
    const int ow = w + 2 * pad - k + 1;
    size_t r = 0;
    for (int ci = 0; ci < ic; ++ci) {
        const S* xp = x + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                S* dst = col + r * static_cast<size_t>(oh) * ow;
                const int x0 = kx - pad;
                const int lo = std::max(0, -x0);
                const int hi = std::min(ow, w - x0);
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy + ky - pad;
                    S* drow = dst + static_cast<size_t>(oy) * ow;
                    if (static_cast<unsigned>(y) >= static_cast<unsigned>(h) || hi <= lo) {
                        std::fill(drow, drow + ow, S(0));
                        continue;
                    }
                    if (lo > 0) std::fill(drow, drow + lo, S(0));
                    const S* srow = xp + static_cast<size_t>(y) * w + x0;
                    for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox];
                    if (hi < ow) std::fill(drow + hi, drow + ow, S(0));
                }
            }
        }
    }
}

// scatter-add inverse of im2col; x must be zeroed (ic,h,w)
template <typename S>
void col2im(const S* col, int ic, int h, int w, int k, int pad, S* x) {
    const int oh = h + 2 * pad - k + 1;
    const int ow = w + 2 * pad - k + 1;
    size_t r = 0;
    for (int ci = 0; ci < ic; ++ci) {
        S* xp = x + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                const S* src = col + r * static_cast<size_t>(oh) * ow;
                const int x0 = kx - pad;
                const int lo = std::max(0, -x0);
                const int hi = std::min(ow, w - x0);
                if (hi <= lo) continue;
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy + ky - pad;
                    if (static_cast<unsigned>(y) >= static_cast<unsigned>(h)) continue;
                    const S* srow = src + static_cast<size_t>(oy) * ow;
                    S* xrow = xp + static_cast<size_t>(y) * w + x0;
                    for (int ox = lo; ox < hi; ++ox) xrow[ox] += srow[ox];
                }
            }
        }
    }
}

// Weight-gradient partials are accumulated per fixed-size sample group and
// reduced in group order, so results are bit-identical for any thread count.
constexpr int64_t kGradGroup = 32;

inline int64_t grad_groups(int64_t n) { return (n + kGradGroup - 1) / kGradGroup; }

template <typename S>
void reduce_groups(std::vector<std::vector<S>>& grads, size_t base,
                   const std::vector<std::vector<S>>& dw_part,
                   const std::vector<std::vector<S>>& db_part) {
    auto& dw = grads[base];
    auto& db = grads[base + 1];
    for (const auto& part : dw_part)
        for (size_t i = 0; i < dw.size(); ++i) dw[i] += part[i];
    for (const auto& part : db_part)
        for (size_t i = 0; i < db.size(); ++i) db[i] += part[i];
}

}  // namespace detail

template <typename S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual const char* kind() const = 0;

    // y is written via ensure(): buffers passed in are reused across calls
    virtual void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>& aux,
                         PoolStack* pools) const = 0;

    // accumulate parameter gradients into grads[grad_base..]; dx gets d(loss)/d(input)
    virtual void backward(const TensorT<S>& x, const TensorT<S>& y, const TensorT<S>& dy,
                          const TensorT<int32_t>& aux, TensorT<S>& dx, GradStore<S>* grads,
                          size_t grad_base) const = 0;

    virtual std::vector<std::vector<S>*> params() { return {}; }
    virtual std::vector<const std::vector<S>*> params() const { return {}; }
    virtual void init_params(Rng&) {}
    virtual std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const = 0;
};

// 2-D convolution, stride 1. pad defaults to k/2 ("same" for odd k).
template <typename S>
class Conv2d final : public Layer<S> {
public:
    Conv2d(int in_ch, int out_ch, int k, int pad = -1)
        : ic_(in_ch), oc_(out_ch), k_(k), pad_(pad < 0 ? k / 2 : pad) {
        w_.assign(static_cast<size_t>(oc_) * ic_ * k_ * k_, S(0));
        b_.assign(static_cast<size_t>(oc_), S(0));
    }

    const char* kind() const override { return "conv"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        geom g = geometry(x);
        ensure(y, {g.n, oc_, g.oh, g.ow});
        const int rows = ic_ * k_ * k_;
        const int ncols = g.oh * g.ow;
        Eigen::Map<const detail::MatRM<S>> W(w_.data(), oc_, rows);
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < g.n; ++s) {
            auto& buf = detail::workspace<S>(0);
            buf.resize(static_cast<size_t>(rows) * ncols);
            detail::im2col(x.sample(s), ic_, g.h, g.w, k_, pad_, buf.data());
            Eigen::Map<const detail::MatRM<S>> col(buf.data(), rows, ncols);
            Eigen::Map<detail::MatRM<S>> out(y.sample(s), oc_, ncols);
            out.noalias() = W * col;
            for (int o = 0; o < oc_; ++o) out.row(o).array() += b_[static_cast<size_t>(o)];
        }
    }

    void backward(const TensorT<S>& x, const TensorT<S>&, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>* grads,
                  size_t grad_base) const override {
        geom g = geometry(x);
        ensure(dx, x.shape);
        const int rows = ic_ * k_ * k_;
        const int ncols = g.oh * g.ow;
        Eigen::Map<const detail::MatRM<S>> W(w_.data(), oc_, rows);

        const int64_t ngroups = detail::grad_groups(g.n);
        std::vector<std::vector<S>> dw_part, db_part;
        if (grads) {
            dw_part.assign(static_cast<size_t>(ngroups), std::vector<S>(w_.size(), S(0)));
            db_part.assign(static_cast<size_t>(ngroups), std::vector<S>(b_.size(), S(0)));
        }
#pragma omp parallel for schedule(static)
        for (int64_t grp = 0; grp < ngroups; ++grp) {
            auto& colbuf = detail::workspace<S>(0);
            auto& dcolbuf = detail::workspace<S>(1);
            colbuf.resize(static_cast<size_t>(rows) * ncols);
            dcolbuf.resize(static_cast<size_t>(rows) * ncols);
            const int64_t lo = grp * detail::kGradGroup;
            const int64_t hi = std::min(g.n, lo + detail::kGradGroup);
            for (int64_t s = lo; s < hi; ++s) {
                Eigen::Map<const detail::MatRM<S>> dY(dy.sample(s), oc_, ncols);
                Eigen::Map<detail::MatRM<S>> dcol(dcolbuf.data(), rows, ncols);
                dcol.noalias() = W.transpose() * dY;
                S* dxs = dx.sample(s);
                std::fill(dxs, dxs + x.sample_size(), S(0));
                detail::col2im(dcolbuf.data(), ic_, g.h, g.w, k_, pad_, dxs);
                if (grads) {
                    detail::im2col(x.sample(s), ic_, g.h, g.w, k_, pad_, colbuf.data());
                    Eigen::Map<const detail::MatRM<S>> col(colbuf.data(), rows, ncols);
                    Eigen::Map<detail::MatRM<S>> dW(dw_part[static_cast<size_t>(grp)].data(), oc_,
                                                    rows);
                    dW.noalias() += dY * col.transpose();
                    for (int o = 0; o < oc_; ++o)
                        db_part[static_cast<size_t>(grp)][static_cast<size_t>(o)] +=
                            dY.row(o).sum();
                }
            }
        }
        if (grads) detail::reduce_groups(*grads, grad_base, dw_part, db_part);
    }

    std::vector<std::vector<S>*> params() override { return {&w_, &b_}; }
    std::vector<const std::vector<S>*> params() const override { return {&w_, &b_}; }

    void init_params(Rng& rng) override {
        const double limit = std::sqrt(6.0 / (ic_ * k_ * k_));
        for (auto& v : w_) v = static_cast<S>(rng.uniform(-limit, limit));
        std::fill(b_.begin(), b_.end(), S(0));
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
        if (in.size() != 3 || in[0] != ic_)
            throw ShapeMismatchError("conv expects (" + std::to_string(ic_) + ",h,w) input");
        return {oc_, in[1] + 2 * pad_ - k_ + 1, in[2] + 2 * pad_ - k_ + 1};
    }

private:
    struct geom {
        int64_t n;
        int h, w, oh, ow;
    };
    geom geometry(const TensorT<S>& x) const {
        if (x.rank() != 4 || x.shape[1] != ic_)
            throw ShapeMismatchError("conv: input " + x.shape_str() + " incompatible with in_ch=" +
                                     std::to_string(ic_));
        geom g;
        g.n = x.shape[0];
        g.h = static_cast<int>(x.shape[2]);
        g.w = static_cast<int>(x.shape[3]);
        g.oh = g.h + 2 * pad_ - k_ + 1;
        g.ow = g.w + 2 * pad_ - k_ + 1;
        if (g.oh <= 0 || g.ow <= 0) throw ShapeMismatchError("conv: kernel larger than input");
        return g;
    }

    int ic_, oc_, k_, pad_;
    std::vector<S> w_;  // (oc, ic, k, k)
    std::vector<S> b_;
};

// transposed convolution, stride 1; output spatial = in - 2*pad + k - 1
template <typename S>
class ConvTranspose2d final : public Layer<S> {
public:
    ConvTranspose2d(int in_ch, int out_ch, int k, int pad = -1)
        : ic_(in_ch), oc_(out_ch), k_(k), pad_(pad < 0 ? k / 2 : pad) {
        w_.assign(static_cast<size_t>(ic_) * oc_ * k_ * k_, S(0));
        b_.assign(static_cast<size_t>(oc_), S(0));
    }

    const char* kind() const override { return "conv_transpose"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        geom g = geometry(x);
        ensure(y, {g.n, oc_, g.oh, g.ow});
        const int rows = oc_ * k_ * k_;
        const int ncols = g.h * g.w;
        Eigen::Map<const detail::MatRM<S>> W(w_.data(), ic_, rows);
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < g.n; ++s) {
            auto& buf = detail::workspace<S>(0);
            buf.resize(static_cast<size_t>(rows) * ncols);
            Eigen::Map<const detail::MatRM<S>> X(x.sample(s), ic_, ncols);
            Eigen::Map<detail::MatRM<S>> col(buf.data(), rows, ncols);
            col.noalias() = W.transpose() * X;
            S* out = y.sample(s);
            std::fill(out, out + y.sample_size(), S(0));
            detail::col2im(buf.data(), oc_, g.oh, g.ow, k_, pad_, out);
            for (int o = 0; o < oc_; ++o) {
                S* p = out + static_cast<size_t>(o) * g.oh * g.ow;
                for (int i = 0; i < g.oh * g.ow; ++i) p[i] += b_[static_cast<size_t>(o)];
            }
        }
    }

    void backward(const TensorT<S>& x, const TensorT<S>&, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>* grads,
                  size_t grad_base) const override {
        geom g = geometry(x);
        ensure(dx, x.shape);
        const int rows = oc_ * k_ * k_;
        const int ncols = g.h * g.w;
        Eigen::Map<const detail::MatRM<S>> W(w_.data(), ic_, rows);

        const int64_t ngroups = detail::grad_groups(g.n);
        std::vector<std::vector<S>> dw_part, db_part;
        if (grads) {
            dw_part.assign(static_cast<size_t>(ngroups), std::vector<S>(w_.size(), S(0)));
            db_part.assign(static_cast<size_t>(ngroups), std::vector<S>(b_.size(), S(0)));
        }
#pragma omp parallel for schedule(static)
        for (int64_t grp = 0; grp < ngroups; ++grp) {
            auto& buf = detail::workspace<S>(0);
            buf.resize(static_cast<size_t>(rows) * ncols);
            const int64_t lo = grp * detail::kGradGroup;
            const int64_t hi = std::min(g.n, lo + detail::kGradGroup);
            for (int64_t s = lo; s < hi; ++s) {
                // patches of the upstream gradient play the role of im2col(dY)
                detail::im2col(dy.sample(s), oc_, g.oh, g.ow, k_, pad_, buf.data());
                Eigen::Map<const detail::MatRM<S>> dcol(buf.data(), rows, ncols);
                Eigen::Map<detail::MatRM<S>> dX(dx.sample(s), ic_, ncols);
                dX.noalias() = W * dcol;
                if (grads) {
                    Eigen::Map<const detail::MatRM<S>> X(x.sample(s), ic_, ncols);
                    Eigen::Map<detail::MatRM<S>> dW(dw_part[static_cast<size_t>(grp)].data(), ic_,
                                                    rows);
                    dW.noalias() += X * dcol.transpose();
                    const S* dyp = dy.sample(s);
                    for (int o = 0; o < oc_; ++o) {
                        S acc = S(0);
                        const S* p = dyp + static_cast<size_t>(o) * g.oh * g.ow;
                        for (int i = 0; i < g.oh * g.ow; ++i) acc += p[i];
                        db_part[static_cast<size_t>(grp)][static_cast<size_t>(o)] += acc;
                    }
                }
            }
        }
        if (grads) detail::reduce_groups(*grads, grad_base, dw_part, db_part);
    }

    std::vector<std::vector<S>*> params() override { return {&w_, &b_}; }
    std::vector<const std::vector<S>*> params() const override { return {&w_, &b_}; }

    void init_params(Rng& rng) override {
        const double limit = std::sqrt(6.0 / (ic_ * k_ * k_));
        for (auto& v : w_) v = static_cast<S>(rng.uniform(-limit, limit));
        std::fill(b_.begin(), b_.end(), S(0));
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
        if (in.size() != 3 || in[0] != ic_)
            throw ShapeMismatchError("conv_transpose expects (" + std::to_string(ic_) +
                                     ",h,w) input");
        return {oc_, in[1] - 2 * pad_ + k_ - 1, in[2] - 2 * pad_ + k_ - 1};
    }

private:
    struct geom {
        int64_t n;
        int h, w, oh, ow;
    };
    geom geometry(const TensorT<S>& x) const {
        if (x.rank() != 4 || x.shape[1] != ic_)
            throw ShapeMismatchError("conv_transpose: input " + x.shape_str() +
                                     " incompatible with in_ch=" + std::to_string(ic_));
        geom g;
        g.n = x.shape[0];
        g.h = static_cast<int>(x.shape[2]);
        g.w = static_cast<int>(x.shape[3]);
        g.oh = g.h - 2 * pad_ + k_ - 1;
        g.ow = g.w - 2 * pad_ + k_ - 1;
        if (g.oh <= 0 || g.ow <= 0) throw ShapeMismatchError("conv_transpose: degenerate output");
        return g;
    }

    int ic_, oc_, k_, pad_;
    std::vector<S> w_;  // (ic, oc, k, k)
    std::vector<S> b_;
};

// 2x2 max-pool, stride 2; records per-element argmax as flat offsets into the
// input sample volume and pushes them for the mirrored unpool
template <typename S>
class MaxPool2d final : public Layer<S> {
public:
    const char* kind() const override { return "max_pool"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>& aux,
                 PoolStack* pools) const override {
        if (x.rank() != 4) throw ShapeMismatchError("max_pool: rank-4 input required");
        const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        if (h % 2 || w % 2) throw ShapeMismatchError("max_pool: odd spatial size");
        const int64_t oh = h / 2, ow = w / 2;
        ensure(y, {n, c, oh, ow});
        ensure(aux, {n, c, oh, ow});
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < n; ++s) {
            const S* xs = x.sample(s);
            S* ys = y.sample(s);
            int32_t* is = aux.sample(s);
            for (int64_t ci = 0; ci < c; ++ci) {
                for (int64_t py = 0; py < oh; ++py) {
                    for (int64_t px = 0; px < ow; ++px) {
                        const int64_t base = ci * h * w + 2 * py * w + 2 * px;
                        int64_t best = base;
                        S bv = xs[base];
                        const int64_t cand[3] = {base + 1, base + w, base + w + 1};
                        for (int64_t cd : cand)
                            if (xs[cd] > bv) {
                                bv = xs[cd];
                                best = cd;
                            }
                        const int64_t o = ci * oh * ow + py * ow + px;
                        ys[o] = bv;
                        is[o] = static_cast<int32_t>(best);
                    }
                }
            }
        }
        if (pools) pools->stack.push_back(aux);
    }

    void backward(const TensorT<S>& x, const TensorT<S>&, const TensorT<S>& dy,
                  const TensorT<int32_t>& aux, TensorT<S>& dx, GradStore<S>*,
                  size_t) const override {
        ensure(dx, x.shape);
        const int64_t n = x.shape[0];
        const int64_t m = dy.sample_size();
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < n; ++s) {
            S* dxs = dx.sample(s);
            std::fill(dxs, dxs + x.sample_size(), S(0));
            const S* dys = dy.sample(s);
            const int32_t* is = aux.sample(s);
            for (int64_t i = 0; i < m; ++i) dxs[is[i]] += dys[i];
        }
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
        if (in.size() != 3 || in[1] % 2 || in[2] % 2)
            throw ShapeMismatchError("max_pool: needs (c, even, even) input");
        return {in[0], in[1] / 2, in[2] / 2};
    }
};

// 2x2 max-unpool; consumes the matching pool's indices from the stack
template <typename S>
class MaxUnpool2d final : public Layer<S> {
public:
    const char* kind() const override { return "max_unpool"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>& aux,
                 PoolStack* pools) const override {
        if (x.rank() != 4) throw ShapeMismatchError("max_unpool: rank-4 input required");
        if (!pools || pools->stack.empty())
            throw ShapeMismatchError("max_unpool: no matching max_pool indices available");
        aux = std::move(pools->stack.back());
        pools->stack.pop_back();
        if (aux.shape != x.shape)
            throw ShapeMismatchError("max_unpool: indices " + aux.shape_str() +
                                     " do not match input " + x.shape_str());
        const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        ensure(y, {n, c, 2 * h, 2 * w});
        const int64_t m = x.sample_size();
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < n; ++s) {
            const S* xs = x.sample(s);
            S* ys = y.sample(s);
            std::fill(ys, ys + y.sample_size(), S(0));
            const int32_t* is = aux.sample(s);
            for (int64_t i = 0; i < m; ++i) ys[is[i]] = xs[i];
        }
    }

    void backward(const TensorT<S>& x, const TensorT<S>&, const TensorT<S>& dy,
                  const TensorT<int32_t>& aux, TensorT<S>& dx, GradStore<S>*,
                  size_t) const override {
        ensure(dx, x.shape);
        const int64_t n = x.shape[0];
        const int64_t m = x.sample_size();
#pragma omp parallel for schedule(static)
        for (int64_t s = 0; s < n; ++s) {
            S* dxs = dx.sample(s);
            const S* dys = dy.sample(s);
            const int32_t* is = aux.sample(s);
            for (int64_t i = 0; i < m; ++i) dxs[i] = dys[is[i]];
        }
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
        if (in.size() != 3) throw ShapeMismatchError("max_unpool: needs (c,h,w) input");
        return {in[0], in[1] * 2, in[2] * 2};
    }
};

template <typename S>
class Linear final : public Layer<S> {
public:
    Linear(int in_dim, int out_dim) : in_(in_dim), out_(out_dim) {
        w_.assign(static_cast<size_t>(out_) * in_, S(0));
        b_.assign(static_cast<size_t>(out_), S(0));
    }

    const char* kind() const override { return "linear"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        if (x.rank() != 2 || x.shape[1] != in_)
            throw ShapeMismatchError("linear: input " + x.shape_str() + " incompatible with in=" +
                                     std::to_string(in_));
        const int64_t n = x.shape[0];
        ensure(y, {n, out_});
        Eigen::Map<const detail::MatRM<S>> X(x.data.data(), n, in_);
        Eigen::Map<const detail::MatRM<S>> W(w_.data(), out_, in_);
        Eigen::Map<detail::MatRM<S>> Y(y.data.data(), n, out_);
        Y.noalias() = X * W.transpose();
        for (int64_t r = 0; r < n; ++r)
            for (int o = 0; o < out_; ++o) Y(r, o) += b_[static_cast<size_t>(o)];
    }

    void backward(const TensorT<S>& x, const TensorT<S>&, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>* grads,
                  size_t grad_base) const override {
        const int64_t n = x.shape[0];
        ensure(dx, x.shape);
        Eigen::Map<const detail::MatRM<S>> X(x.data.data(), n, in_);
        Eigen::Map<const detail::MatRM<S>> W(w_.data(), out_, in_);
        Eigen::Map<const detail::MatRM<S>> dY(dy.data.data(), n, out_);
        Eigen::Map<detail::MatRM<S>> dX(dx.data.data(), n, in_);
        dX.noalias() = dY * W;
        if (grads) {
            auto& dwv = (*grads)[grad_base];
            auto& dbv = (*grads)[grad_base + 1];
            Eigen::Map<detail::MatRM<S>> dW(dwv.data(), out_, in_);
            dW.noalias() += dY.transpose() * X;
            for (int64_t r = 0; r < n; ++r)
                for (int o = 0; o < out_; ++o) dbv[static_cast<size_t>(o)] += dY(r, o);
        }
    }

    std::vector<std::vector<S>*> params() override { return {&w_, &b_}; }
    std::vector<const std::vector<S>*> params() const override { return {&w_, &b_}; }

    void init_params(Rng& rng) override {
        const double limit = std::sqrt(6.0 / in_);
        for (auto& v : w_) v = static_cast<S>(rng.uniform(-limit, limit));
        std::fill(b_.begin(), b_.end(), S(0));
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
        if (in.size() != 1 || in[0] != in_)
            throw ShapeMismatchError("linear expects flat input of " + std::to_string(in_));
        return {out_};
    }

private:
    int in_, out_;
    std::vector<S> w_;  // (out, in)
    std::vector<S> b_;
};

template <typename S>
class ReLU final : public Layer<S> {
public:
    const char* kind() const override { return "relu"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        ensure(y, x.shape);
        const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) y.data[i] = x.data[i] > S(0) ? x.data[i] : S(0);
    }

    void backward(const TensorT<S>&, const TensorT<S>& y, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>*, size_t) const override {
        ensure(dx, y.shape);
        const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) dx.data[i] = y.data[i] > S(0) ? dy.data[i] : S(0);
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override { return in; }
};

template <typename S>
class Tanh final : public Layer<S> {
public:
    const char* kind() const override { return "tanh"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        ensure(y, x.shape);
        const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) y.data[i] = std::tanh(x.data[i]);
    }

    void backward(const TensorT<S>&, const TensorT<S>& y, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>*, size_t) const override {
        ensure(dx, y.shape);
        const int64_t n = y.numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) dx.data[i] = dy.data[i] * (S(1) - y.data[i] * y.data[i]);
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override { return in; }
};

// row-wise softmax over the last axis of a (n, d) tensor
template <typename S>
class Softmax final : public Layer<S> {
public:
    const char* kind() const override { return "softmax"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        if (x.rank() != 2) throw ShapeMismatchError("softmax: rank-2 input required");
        ensure(y, x.shape);
        const int64_t n = x.shape[0], d = x.shape[1];
        for (int64_t r = 0; r < n; ++r) {
            const S* xr = x.data.data() + r * d;
            S* yr = y.data.data() + r * d;
            S mx = xr[0];
            for (int64_t i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
            S sum = S(0);
            for (int64_t i = 0; i < d; ++i) {
                yr[i] = std::exp(xr[i] - mx);
                sum += yr[i];
            }
            for (int64_t i = 0; i < d; ++i) yr[i] /= sum;
        }
    }

    void backward(const TensorT<S>&, const TensorT<S>& y, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>*, size_t) const override {
        ensure(dx, y.shape);
        const int64_t n = y.shape[0], d = y.shape[1];
        for (int64_t r = 0; r < n; ++r) {
            const S* yr = y.data.data() + r * d;
            const S* dyr = dy.data.data() + r * d;
            S* dxr = dx.data.data() + r * d;
            S dot = S(0);
            for (int64_t i = 0; i < d; ++i) dot += yr[i] * dyr[i];
            for (int64_t i = 0; i < d; ++i) dxr[i] = yr[i] * (dyr[i] - dot);
        }
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override { return in; }
};

template <typename S>
class Flatten final : public Layer<S> {
public:
    const char* kind() const override { return "flatten"; }

    void forward(const TensorT<S>& x, TensorT<S>& y, TensorT<int32_t>&,
                 PoolStack*) const override {
        ensure(y, {x.batch(), x.sample_size()});
        std::memcpy(y.data.data(), x.data.data(), sizeof(S) * x.data.size());
    }

    void backward(const TensorT<S>& x, const TensorT<S>&, const TensorT<S>& dy,
                  const TensorT<int32_t>&, TensorT<S>& dx, GradStore<S>*, size_t) const override {
        ensure(dx, x.shape);
        std::memcpy(dx.data.data(), dy.data.data(), sizeof(S) * dy.data.size());
    }

    std::vector<int64_t> out_shape(const std::vector<int64_t>& in) const override {
        int64_t p = 1;
        for (int64_t d : in) p *= d;
        return {p};
    }
};

}  // namespace dafar::nn
