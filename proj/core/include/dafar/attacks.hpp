#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "dafar/dataset.hpp"
#include "dafar/model.hpp"
#include "dafar/rng.hpp"
#include "dafar/training.hpp"

namespace dafar {

// Gray-box attacks against the undefended victim F(E(.)). Intensities are
// given on the conventional [0,1] pixel scale and doubled internally to match
// the [-1,1] data range. All attacks leave model parameters untouched and
// return the input bit-exactly when their budget is zero.
enum class AttackMethod { fgsm, pgd, jsma, cw_l2, gaussian };

const char* to_string(AttackMethod m);
AttackMethod attack_from_string(const std::string& s);

struct AttackConfig {
    AttackMethod method = AttackMethod::fgsm;
    double epsilon = 0.3;     // [0,1]-scale intensity (fgsm/pgd); sigma for gaussian
    int steps = 40;           // pgd / cw iterations
    double step_size = 0.0;   // pgd; 0 = epsilon/10
    double confidence = 0.0;  // cw kappa
    double tradeoff_c = 0.0;  // cw; 0 = log-space bisection in [1e-3, 10]
    int search_steps = 5;     // cw bisection steps
    double theta = 1.0;       // jsma per-pixel change, [0,1] scale
    double gamma = 0.14;      // jsma max fraction of pixels changed
    int target_label = -1;    // jsma/targeted cw; -1 = (true label + 1) mod 10 / untargeted
    uint64_t seed = 1;

    void validate() const {
        if (epsilon < 0) throw ConfigError("epsilon must be >= 0");
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (gamma <= 0 || gamma > 1) throw ConfigError("gamma must be in (0,1]");
    }
};

struct AdversarialSet {
    ImageBatch originals;
    ImageBatch adversarials;  // labels mirror the originals (true labels)
    AttackConfig config;
    std::vector<uint8_t> success_mask;  // victim misclassifies (or hits the target)

    int64_t size() const { return originals.size(); }
    double success_rate() const {
        if (success_mask.empty()) return 0.0;
        double s = 0;
        for (auto v : success_mask) s += v;
        return s / static_cast<double>(success_mask.size());
    }
};

// container round-trips bit-exactly; see attacks.cpp for the layout
void save_adversarial_set(const AdversarialSet& set, const std::filesystem::path& path);
AdversarialSet load_adversarial_set(const std::filesystem::path& path);

namespace attack_detail {

template <typename S>
struct VictimPass {
    nn::SeqState<S> enc, head;
};

template <typename S>
const TensorT<S>& victim_forward(const DefendedModelT<S>& model, const TensorT<S>& x,
                                 VictimPass<S>& ws) {
    nn::PoolStack pools;
    const auto& f = model.encoder().forward(x, ws.enc, &pools);
    return model.head().forward(f, ws.head);
}

template <typename S>
const TensorT<S>& logits_of(const DefendedModelT<S>& model, const VictimPass<S>& ws) {
    return ws.head.acts[model.head().size() - 1];
}

// backward from d(loss)/d(logits), reusing the forward's activations
template <typename S>
const TensorT<S>& input_grad(const DefendedModelT<S>& model, const TensorT<S>& dlogits,
                             VictimPass<S>& ws) {
    const auto& dfeat =
        model.head().backward(dlogits, ws.head, nullptr, model.head().size() - 1, 0);
    return model.encoder().backward(dfeat, ws.enc, nullptr);
}

template <typename S>
std::vector<int> argmax_rows(const TensorT<S>& probs) {
    const int64_t n = probs.shape[0], d = probs.shape[1];
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int64_t arg = 0;
        for (int64_t c = 1; c < d; ++c)
            if (probs.data[i * d + c] > probs.data[i * d + arg]) arg = c;
        out[static_cast<size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

template <typename S>
std::vector<int> predict(const DefendedModelT<S>& model, const TensorT<S>& x) {
    return argmax_rows(model.classify(x));
}

template <typename S>
std::vector<uint8_t> misclassified(const DefendedModelT<S>& model, const TensorT<S>& x,
                                   const std::vector<int>& labels) {
    auto pred = predict(model, x);
    std::vector<uint8_t> mask(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) mask[i] = pred[i] != labels[i];
    return mask;
}

inline float clip_range(float v) { return std::min(1.0f, std::max(-1.0f, v)); }

}  // namespace attack_detail

// x' = clip(x + eps * sign(grad_x CE(F(E(x)), y)))
template <typename S>
AdversarialSet fgsm(const DefendedModelT<S>& model, const ImageBatch& batch, double epsilon) {
    if (epsilon < 0) throw ConfigError("epsilon must be >= 0");
    const S eps2 = static_cast<S>(2.0 * epsilon);

    AdversarialSet set;
    set.originals = batch;
    set.config.method = AttackMethod::fgsm;
    set.config.epsilon = epsilon;

    auto x = batch.pixels.template cast<S>();
    attack_detail::VictimPass<S> ws;
    const auto& probs = attack_detail::victim_forward(model, x, ws);
    auto dlogits = train_detail::ce_logit_grad(probs, batch.labels);
    const auto& g = attack_detail::input_grad(model, dlogits, ws);

    TensorT<S> adv(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const S step = g.data[i] > S(0) ? eps2 : (g.data[i] < S(0) ? -eps2 : S(0));
        adv.data[i] =
            static_cast<S>(attack_detail::clip_range(static_cast<float>(x.data[i] + step)));
    }
    set.adversarials.pixels = adv.template cast<float>();
    set.adversarials.labels = batch.labels;
    set.success_mask = attack_detail::misclassified(model, adv, batch.labels);
    return set;
}

// iterated FGSM with projection onto the eps-L-inf ball, zero random start.
// The perturbation is tracked separately so the projection is exact.
template <typename S>
AdversarialSet pgd(const DefendedModelT<S>& model, const ImageBatch& batch, double epsilon,
                   double step_size = 0.0, int steps = 40) {
    if (epsilon < 0) throw ConfigError("epsilon must be >= 0");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (step_size <= 0) step_size = epsilon / 10.0;

    AdversarialSet set;
    set.originals = batch;
    set.config.method = AttackMethod::pgd;
    set.config.epsilon = epsilon;
    set.config.steps = steps;
    set.config.step_size = step_size;

    const S eps2 = static_cast<S>(2.0 * epsilon);
    const S step2 = static_cast<S>(2.0 * step_size);

    auto x0 = batch.pixels.template cast<S>();
    TensorT<S> delta(x0.shape);
    TensorT<S> x = x0;
    attack_detail::VictimPass<S> ws;
    for (int it = 0; it < steps; ++it) {
        const auto& probs = attack_detail::victim_forward(model, x, ws);
        auto dlogits = train_detail::ce_logit_grad(probs, batch.labels);
        const auto& g = attack_detail::input_grad(model, dlogits, ws);
        for (size_t i = 0; i < delta.data.size(); ++i) {
            const S sgn = g.data[i] > S(0) ? S(1) : (g.data[i] < S(0) ? S(-1) : S(0));
            S d = delta.data[i] + step2 * sgn;
            d = std::min(eps2, std::max(-eps2, d));
            delta.data[i] = d;
            x.data[i] =
                static_cast<S>(attack_detail::clip_range(static_cast<float>(x0.data[i] + d)));
        }
    }
    set.adversarials.pixels = x.template cast<float>();
    set.adversarials.labels = batch.labels;
    set.success_mask = attack_detail::misclassified(model, x, batch.labels);
    return set;
}

// x + N(0, sigma) elementwise, clipped; sigma on the [0,1] scale
inline ImageBatch gaussian_baseline(const ImageBatch& batch, double sigma, uint64_t seed = 1) {
    if (sigma < 0) throw ConfigError("sigma must be >= 0");
    ImageBatch out;
    out.pixels = batch.pixels;
    out.labels = batch.labels;
    if (sigma == 0) return out;
    const double s2 = 2.0 * sigma;
    const int64_t ss = out.pixels.sample_size();
    for (int64_t i = 0; i < out.pixels.batch(); ++i) {
        Rng rng = Rng::seeded(seed, static_cast<uint64_t>(i));
        float* p = out.pixels.sample(i);
        for (int64_t j = 0; j < ss; ++j)
            p[j] = attack_detail::clip_range(p[j] + static_cast<float>(rng.normal(0.0, s2)));
    }
    return out;
}

// alpha/beta of the JSMA saliency map for one sample: alpha = d z_target / dx,
// beta = sum over other classes of d z_i / dx. One forward, C backward passes.
template <typename S>
std::pair<std::vector<S>, std::vector<S>> jsma_saliency_components(const DefendedModelT<S>& model,
                                                                   const TensorT<S>& x, int target,
                                                                   int num_classes) {
    const int64_t dim = x.sample_size();
    std::vector<S> alpha(static_cast<size_t>(dim), S(0));
    std::vector<S> beta(static_cast<size_t>(dim), S(0));
    attack_detail::VictimPass<S> ws;
    attack_detail::victim_forward(model, x, ws);
    TensorT<S> seed(std::vector<int64_t>{1, num_classes});
    for (int c = 0; c < num_classes; ++c) {
        seed.fill(S(0));
        seed.data[static_cast<size_t>(c)] = S(1);
        const auto& g = attack_detail::input_grad(model, seed, ws);
        if (c == target)
            for (int64_t j = 0; j < dim; ++j)
                alpha[static_cast<size_t>(j)] = g.data[static_cast<size_t>(j)];
        else
            for (int64_t j = 0; j < dim; ++j)
                beta[static_cast<size_t>(j)] += g.data[static_cast<size_t>(j)];
    }
    return {std::move(alpha), std::move(beta)};
}

// admissible pixel pair maximizing -(alpha_p+alpha_q)*(beta_p+beta_q) with
// alpha_p+alpha_q > 0 and beta_p+beta_q < 0 (increasing-feature variant)
template <typename S>
std::pair<int64_t, int64_t> jsma_pick_pair(const std::vector<S>& alpha, const std::vector<S>& beta,
                                           const TensorT<S>& x,
                                           const std::vector<uint8_t>& modified, bool increasing) {
    const int64_t dim = static_cast<int64_t>(alpha.size());
    std::vector<int64_t> cand;
    cand.reserve(static_cast<size_t>(dim));
    for (int64_t j = 0; j < dim; ++j) {
        if (modified[static_cast<size_t>(j)]) continue;
        const S v = x.data[static_cast<size_t>(j)];
        if (increasing ? v >= S(1) : v <= S(-1)) continue;  // saturated
        cand.push_back(j);
    }
    double best = 0;
    std::pair<int64_t, int64_t> pick{-1, -1};
    for (size_t a = 0; a < cand.size(); ++a) {
        const double aa = static_cast<double>(alpha[static_cast<size_t>(cand[a])]);
        const double ba = static_cast<double>(beta[static_cast<size_t>(cand[a])]);
        for (size_t b = a + 1; b < cand.size(); ++b) {
            const double sa = aa + static_cast<double>(alpha[static_cast<size_t>(cand[b])]);
            const double sb = ba + static_cast<double>(beta[static_cast<size_t>(cand[b])]);
            if (sa <= 0 || sb >= 0) continue;
            const double score = -sa * sb;
            if (score > best) {
                best = score;
                pick = {cand[a], cand[b]};
            }
        }
    }
    return pick;
}

// Jacobian-based saliency map attack: saturate the best pixel pair per
// iteration until the target class is reached or gamma*dim pixels changed.
// Per-sample failure lands in success_mask, never in an exception.
template <typename S>
AdversarialSet jsma(const DefendedModelT<S>& model, const ImageBatch& batch, int target_label = -1,
                    double theta = 1.0, double gamma = 0.14) {
    if (gamma <= 0 || gamma > 1) throw ConfigError("gamma must be in (0,1]");

    AdversarialSet set;
    set.originals = batch;
    set.config.method = AttackMethod::jsma;
    set.config.theta = theta;
    set.config.gamma = gamma;
    set.config.target_label = target_label;
    set.adversarials = batch;
    set.success_mask.assign(static_cast<size_t>(batch.size()), 0);

    const int64_t dim = batch.pixels.sample_size();
    const int64_t budget_pixels =
        static_cast<int64_t>(std::floor(gamma * static_cast<double>(dim)));
    const int num_classes = model.spec().num_classes;
    const S theta2 = static_cast<S>(2.0 * theta);

    for (int64_t s = 0; s < batch.size(); ++s) {
        const int truth = batch.labels[static_cast<size_t>(s)];
        const int want = target_label >= 0 ? target_label : (truth + 1) % num_classes;
        if (want == truth) throw ConfigError("jsma: target equals the true label");

        TensorT<S> x(std::vector<int64_t>{1, batch.pixels.shape[1], batch.pixels.shape[2],
                                          batch.pixels.shape[3]});
        const float* src = batch.pixels.sample(s);
        for (int64_t j = 0; j < dim; ++j) x.data[static_cast<size_t>(j)] = static_cast<S>(src[j]);

        std::vector<uint8_t> modified(static_cast<size_t>(dim), 0);
        bool hit = false;
        const int64_t max_iters = budget_pixels / 2;
        for (int64_t it = 0; it < max_iters && !hit; ++it) {
            auto [alpha, beta] = jsma_saliency_components(model, x, want, num_classes);
            auto pick = jsma_pick_pair(alpha, beta, x, modified, theta2 > S(0));
            if (pick.first < 0) break;  // no admissible pair left
            for (int64_t p : {pick.first, pick.second}) {
                x.data[static_cast<size_t>(p)] = static_cast<S>(attack_detail::clip_range(
                    static_cast<float>(x.data[static_cast<size_t>(p)] + theta2)));
                modified[static_cast<size_t>(p)] = 1;
            }
            hit = attack_detail::predict(model, x)[0] == want;
        }
        set.success_mask[static_cast<size_t>(s)] = hit;
        float* dst = set.adversarials.pixels.sample(s);
        for (int64_t j = 0; j < dim; ++j)
            dst[j] = static_cast<float>(x.data[static_cast<size_t>(j)]);
    }
    return set;
}

// Carlini-Wagner L2: minimize ||x'-x||_2^2 + c * f(x') with the tanh change of
// variables keeping x' in range. Untargeted f = max(Z_true - max_other, -kappa);
// targeted (target_label >= 0) f = max(max_other - Z_target, -kappa).
// c <= 0 runs a log-space bisection over [1e-3, 10]; the smallest-distortion
// success per sample is kept across the search.
template <typename S>
AdversarialSet cw_l2(const DefendedModelT<S>& model, const ImageBatch& batch, double c = 0.0,
                     double kappa = 0.0, int steps = 200, int search_steps = 5,
                     int target_label = -1) {
    if (steps < 1) throw ConfigError("steps must be >= 1");

    AdversarialSet set;
    set.originals = batch;
    set.config.method = AttackMethod::cw_l2;
    set.config.tradeoff_c = c;
    set.config.confidence = kappa;
    set.config.steps = steps;
    set.config.search_steps = search_steps;
    set.config.target_label = target_label;
    set.adversarials = batch;

    const int64_t n = batch.size();
    const int64_t dim = batch.pixels.sample_size();
    const int num_classes = model.spec().num_classes;
    const bool targeted = target_label >= 0;

    auto x0f = batch.pixels.template cast<S>();

    TensorT<S> best = x0f;
    std::vector<uint8_t> ok(static_cast<size_t>(n), 0);
    std::vector<double> best_l2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());

    auto attempt = [&](double cval) {
        TensorT<S> w(x0f.shape);
        for (size_t i = 0; i < w.data.size(); ++i) {
            const double v =
                std::clamp(static_cast<double>(x0f.data[i]), -1.0 + 1e-6, 1.0 - 1e-6);
            w.data[i] = static_cast<S>(std::atanh(v));
        }
        std::vector<S> m(w.data.size(), S(0)), v2(w.data.size(), S(0));
        const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        TensorT<S> x(x0f.shape);
        TensorT<S> dlog(std::vector<int64_t>{n, num_classes});
        attack_detail::VictimPass<S> ws;
        for (int it = 1; it <= steps; ++it) {
            for (size_t i = 0; i < w.data.size(); ++i) x.data[i] = std::tanh(w.data[i]);
            attack_detail::victim_forward(model, x, ws);
            const auto& logits = attack_detail::logits_of(model, ws);
            dlog.fill(S(0));
            std::vector<double> fval(static_cast<size_t>(n));
            for (int64_t s = 0; s < n; ++s) {
                const int t = targeted ? target_label : batch.labels[static_cast<size_t>(s)];
                int other = t == 0 ? 1 : 0;
                for (int cc = 0; cc < num_classes; ++cc) {
                    if (cc == t) continue;
                    if (logits.data[s * num_classes + cc] > logits.data[s * num_classes + other])
                        other = cc;
                }
                const double zt = static_cast<double>(logits.data[s * num_classes + t]);
                const double zo = static_cast<double>(logits.data[s * num_classes + other]);
                const double f = targeted ? zo - zt : zt - zo;
                fval[static_cast<size_t>(s)] = f;
                if (f > -kappa) {
                    const double sign = targeted ? -1.0 : 1.0;
                    dlog.data[s * num_classes + t] = static_cast<S>(sign * cval);
                    dlog.data[s * num_classes + other] = static_cast<S>(-sign * cval);
                }
            }
            // harvest successes at the current iterate
            for (int64_t s = 0; s < n; ++s) {
                if (fval[static_cast<size_t>(s)] <= -kappa) {
                    double l2 = 0;
                    const S* xs = x.sample(s);
                    const S* x0s = x0f.sample(s);
                    for (int64_t j = 0; j < dim; ++j) {
                        const double d = static_cast<double>(xs[j]) - static_cast<double>(x0s[j]);
                        l2 += d * d;
                    }
                    if (l2 < best_l2[static_cast<size_t>(s)]) {
                        best_l2[static_cast<size_t>(s)] = l2;
                        ok[static_cast<size_t>(s)] = 1;
                        std::copy(x.sample(s), x.sample(s) + dim, best.sample(s));
                    }
                }
            }
            const auto& gx = attack_detail::input_grad(model, dlog, ws);
            for (int64_t s = 0; s < n; ++s) {
                const S* gs = gx.sample(s);
                const S* xs = x.sample(s);
                const S* x0s = x0f.sample(s);
                S* wsamp = w.sample(s);
                for (int64_t j = 0; j < dim; ++j) {
                    double g = static_cast<double>(gs[j]) +
                               2.0 * (static_cast<double>(xs[j]) - static_cast<double>(x0s[j]));
                    g *= 1.0 - static_cast<double>(xs[j]) * static_cast<double>(xs[j]);
                    const size_t idx = static_cast<size_t>(s * dim + j);
                    m[idx] = static_cast<S>(b1 * m[idx] + (1 - b1) * g);
                    v2[idx] = static_cast<S>(b2 * v2[idx] + (1 - b2) * g * g);
                    const double mh = m[idx] / (1 - std::pow(b1, it));
                    const double vh = v2[idx] / (1 - std::pow(b2, it));
                    wsamp[j] -= static_cast<S>(lr * mh / (std::sqrt(vh) + eps));
                }
            }
        }
    };

    if (c > 0) {
        attempt(c);
    } else {
        double lo = 1e-3, hi = 10.0;
        for (int it = 0; it < search_steps; ++it) {
            const double mid = std::sqrt(lo * hi);
            attempt(mid);
            size_t total = 0;
            for (auto v : ok) total += v;
            if (total == ok.size())
                hi = mid;  // everything adversarial: try for less distortion
            else
                lo = mid;
        }
    }

    for (int64_t s = 0; s < n; ++s) {
        float* dst = set.adversarials.pixels.sample(s);
        const S* src = best.sample(s);
        for (int64_t j = 0; j < dim; ++j)
            dst[j] = attack_detail::clip_range(static_cast<float>(src[j]));
    }
    if (targeted) {
        auto adv = set.adversarials.pixels.template cast<S>();
        auto pred = attack_detail::predict(model, adv);
        set.success_mask.resize(static_cast<size_t>(n));
        for (int64_t s = 0; s < n; ++s)
            set.success_mask[static_cast<size_t>(s)] = pred[static_cast<size_t>(s)] == target_label;
    } else {
        auto adv = set.adversarials.pixels.template cast<S>();
        set.success_mask = attack_detail::misclassified(model, adv, batch.labels);
    }
    return set;
}

// dispatch on config.method
template <typename S>
AdversarialSet run_attack(const DefendedModelT<S>& model, const ImageBatch& batch,
                          const AttackConfig& cfg) {
    cfg.validate();
    AdversarialSet set;
    switch (cfg.method) {
        case AttackMethod::fgsm: set = fgsm(model, batch, cfg.epsilon); break;
        case AttackMethod::pgd:
            set = pgd(model, batch, cfg.epsilon, cfg.step_size, cfg.steps);
            break;
        case AttackMethod::jsma:
            set = jsma(model, batch, cfg.target_label, cfg.theta, cfg.gamma);
            break;
        case AttackMethod::cw_l2:
            set = cw_l2(model, batch, cfg.tradeoff_c, cfg.confidence, cfg.steps, cfg.search_steps,
                        cfg.target_label);
            break;
        case AttackMethod::gaussian: {
            set.originals = batch;
            set.adversarials = gaussian_baseline(batch, cfg.epsilon, cfg.seed);
            auto adv = set.adversarials.pixels.template cast<S>();
            set.success_mask = attack_detail::misclassified(model, adv, batch.labels);
            break;
        }
    }
    set.config = cfg;
    return set;
}

}  // namespace dafar
