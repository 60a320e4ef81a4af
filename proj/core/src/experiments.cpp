#include "dafar/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dafar {

namespace {

std::vector<int> victim_predictions(const DefendedModel& model, const ImageBatch& batch) {
    auto px = batch.pixels;
    return attack_detail::predict(model, px);
}

double victim_accuracy_on(const DefendedModel& model, const ImageBatch& batch) {
    auto pred = victim_predictions(model, batch);
    double ok = 0;
    for (size_t i = 0; i < pred.size(); ++i) ok += pred[i] == batch.labels[i];
    return pred.empty() ? 0.0 : ok / static_cast<double>(pred.size());
}

AttackConfig method_defaults(AttackMethod m, double eps, uint64_t seed) {
    AttackConfig cfg;
    cfg.method = m;
    cfg.epsilon = eps;
    cfg.seed = seed;
    return cfg;
}

double detection_rate(const DefendedModel& model, const ThresholdCalibration& cal, Scorer scorer,
                      const ImageBatch& batch) {
    auto scores = defense_scores(model, batch, scorer);
    double flagged = 0;
    for (double s : scores) flagged += is_adversarial(s, cal);
    return scores.empty() ? 0.0 : flagged / static_cast<double>(scores.size());
}

}  // namespace

void CurveResult::check() const {
    for (const auto& s : series)
        if (s.size() != axis.size())
            throw ConfigError("curve '" + kind + "': series length does not match the axis");
    if (series_names.size() != series.size())
        throw ConfigError("curve '" + kind + "': series names out of sync");
    if (sample_counts.size() != axis.size())
        throw ConfigError("curve '" + kind + "': sample counts out of sync");
}

std::string curve_csv(const CurveResult& r) {
    r.check();
    std::ostringstream os;
    os.precision(9);
    os << "# dafar-csv kind=" << r.kind << " version=1 dataset=" << r.dataset;
    for (const auto& [k, v] : r.notes) os << ' ' << k << '=' << v;
    os << "\nx";
    for (const auto& n : r.series_names) os << ',' << n;
    os << ",samples\n";
    for (size_t i = 0; i < r.axis.size(); ++i) {
        os << r.axis[i];
        for (const auto& s : r.series) os << ',' << s[i];
        os << ',' << r.sample_counts[i] << '\n';
    }
    return os.str();
}

CurveResult curve_from_csv(const std::string& text) {
    CurveResult r;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("# dafar-csv", 0) != 0)
        throw ConfigError("not a dafar curve CSV");
    {
        std::istringstream hs(line.substr(11));
        std::string tok;
        while (hs >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
            if (k == "kind")
                r.kind = v;
            else if (k == "dataset")
                r.dataset = v;
            else if (k != "version")
                r.notes[k] = std::stod(v);
        }
    }
    if (!std::getline(is, line)) throw ConfigError("curve CSV missing header row");
    {
        std::istringstream hs(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(hs, col, ',')) cols.push_back(col);
        if (cols.size() < 2 || cols.front() != "x" || cols.back() != "samples")
            throw ConfigError("curve CSV header must be x,<series...>,samples");
        r.series_names.assign(cols.begin() + 1, cols.end() - 1);
        r.series.assign(r.series_names.size(), {});
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != r.series_names.size() + 2)
            throw ConfigError("curve CSV row width mismatch");
        r.axis.push_back(std::stod(cells[0]));
        for (size_t k = 0; k < r.series_names.size(); ++k)
            r.series[k].push_back(cells[k + 1].empty() ? std::nan("") : std::stod(cells[k + 1]));
        r.sample_counts.push_back(std::stoll(cells.back()));
    }
    r.check();
    return r;
}

std::vector<double> default_eps_grid() { return {0.0, 0.05, 0.1, 0.2, 0.3, 0.4}; }

ImageBatch victim_correct_subset(const DefendedModel& model, const ImageBatch& batch,
                                 int64_t max_n) {
    auto pred = victim_predictions(model, batch);
    std::vector<int64_t> keep;
    for (int64_t i = 0; i < batch.size() && static_cast<int64_t>(keep.size()) < max_n; ++i)
        if (pred[static_cast<size_t>(i)] == batch.labels[static_cast<size_t>(i)]) keep.push_back(i);
    return batch.select(keep);
}

double hybrid_accuracy(const std::vector<DefenseOutcome>& outcomes, const std::vector<int>& labels,
                       const std::vector<uint8_t>& is_adv) {
    if (outcomes.size() != labels.size() || outcomes.size() != is_adv.size())
        throw ConfigError("hybrid_accuracy: mismatched inputs");
    double ok = 0;
    for (size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        if (is_adv[i])
            ok += o.rejected || o.label == labels[i];
        else
            ok += !o.rejected && o.label == labels[i];
    }
    return outcomes.empty() ? 0.0 : ok / static_cast<double>(outcomes.size());
}

CurveResult run_detection_curve(const DefendedModel& model, const ThresholdCalibration& cal,
                                Scorer scorer, AttackMethod method,
                                const std::vector<double>& eps_grid, const ImageBatch& clean_eval,
                                int64_t max_samples, uint64_t seed) {
    cal.require_model(model.param_hash());
    ImageBatch pool = clean_eval.slice(0, std::min<int64_t>(max_samples, clean_eval.size()));
    CurveResult r;
    r.kind = "detection_vs_intensity";
    r.dataset = model.spec().name;
    r.series_names = {std::string("dafar_") + to_string(method)};
    r.series.resize(1);
    r.notes["alpha"] = cal.alpha;
    r.notes["clean_fpr"] = detection_rate(model, cal, scorer, pool);
    for (double eps : eps_grid) {
        r.axis.push_back(eps);
        r.sample_counts.push_back(pool.size());
        if (eps == 0.0) {
            // definitional edge: the eps=0 entry reports the false-positive rate
            r.series[0].push_back(r.notes["clean_fpr"]);
            continue;
        }
        auto cfg = method_defaults(method, eps, seed);
        auto set = run_attack(model, pool, cfg);
        r.series[0].push_back(detection_rate(model, cal, scorer, set.adversarials));
    }
    r.check();
    return r;
}

CurveResult run_method_comparison(const DefendedModel& model, const ThresholdCalibration& cal,
                                  Scorer scorer, const std::vector<AttackMethod>& methods,
                                  const ImageBatch& clean_eval,
                                  const BinaryClassifier* binary_baseline, int64_t max_samples,
                                  uint64_t seed) {
    cal.require_model(model.param_hash());
    ImageBatch pool = clean_eval.slice(0, std::min<int64_t>(max_samples, clean_eval.size()));
    CurveResult r;
    r.kind = "detection_vs_method";
    r.dataset = model.spec().name;
    r.series_names = {"dafar"};
    r.series.resize(1);
    if (binary_baseline) {
        r.series_names.push_back("binary_classifier");
        r.series.resize(2);
        r.notes["baseline_attack"] = static_cast<double>(binary_baseline->training_attack().method);
    }
    r.notes["alpha"] = cal.alpha;
    double idx = 0;
    for (AttackMethod m : methods) {
        auto cfg = method_defaults(m, 0.3, seed);
        auto set = run_attack(model, pool, cfg);
        r.axis.push_back(idx++);
        r.sample_counts.push_back(set.size());
        r.series[0].push_back(detection_rate(model, cal, scorer, set.adversarials));
        if (binary_baseline) {
            auto pred = binary_baseline->predict(set.adversarials);
            double flagged = 0;
            for (int v : pred) flagged += v == 1;
            r.series[1].push_back(pred.empty() ? 0.0 : flagged / static_cast<double>(pred.size()));
        }
    }
    r.check();
    return r;
}

CurveResult run_purification_curve(const DefendedModel& model, AttackMethod method,
                                   const std::vector<double>& eps_grid,
                                   const ImageBatch& clean_eval,
                                   const DenoisingAutoencoder* denoiser, bool with_binary_filter,
                                   int64_t max_samples, uint64_t seed) {
    ImageBatch pool = clean_eval.slice(0, std::min<int64_t>(max_samples, clean_eval.size()));
    CurveResult r;
    r.kind = "purification_vs_intensity";
    r.dataset = model.spec().name;
    r.series_names = {"no_defense", "dafar_purify"};
    if (denoiser) r.series_names.push_back("denoising_ae");
    if (with_binary_filter) r.series_names.push_back("binary_filter");
    r.series.resize(r.series_names.size());

    for (double eps : eps_grid) {
        ImageBatch attacked;
        if (eps == 0.0) {
            attacked = pool;
        } else {
            auto cfg = method_defaults(method, eps, seed);
            attacked = run_attack(model, pool, cfg).adversarials;
        }
        r.axis.push_back(eps);
        r.sample_counts.push_back(attacked.size());
        size_t k = 0;
        r.series[k++].push_back(victim_accuracy_on(model, attacked));
        {
            ImageBatch purified;
            purified.labels = attacked.labels;
            purified.pixels = model.reconstruct(attacked.pixels);
            r.series[k++].push_back(victim_accuracy_on(model, purified));
        }
        if (denoiser) r.series[k++].push_back(victim_accuracy_on(model, denoiser->purify(attacked)));
        if (with_binary_filter)
            r.series[k++].push_back(victim_accuracy_on(model, binary_filter(attacked)));
    }
    r.check();
    return r;
}

CurveResult run_hybrid_eval(const DefendedModel& model, const ThresholdCalibration& cal,
                            const ThresholdCalibration* cal_plain_l2, AttackMethod method,
                            const std::vector<double>& eps_grid, const ImageBatch& clean_eval,
                            int64_t max_samples, uint64_t seed) {
    cal.require_model(model.param_hash());
    // mixed sets are built from samples the victim classifies correctly
    ImageBatch pool = victim_correct_subset(model, clean_eval, max_samples);
    const int64_t half = pool.size() / 2;
    ImageBatch keep_clean = pool.slice(0, half);
    ImageBatch to_attack = pool.slice(half, half);

    CurveResult r;
    r.kind = "hybrid_vs_intensity";
    r.dataset = model.spec().name;
    r.series_names = {"dafar_hybrid"};
    r.series.resize(1);
    if (cal_plain_l2) {
        cal_plain_l2->require_model(model.param_hash());
        r.series_names.push_back("dafar_hybrid_plain_l2");
        r.series.resize(2);
    }
    r.notes["alpha"] = cal.alpha;

    PipelineConfig hybrid;
    hybrid.mode = DefenseMode::hybrid;
    hybrid.scorer = cal.scored_with;
    hybrid.calibration = cal;

    for (double eps : eps_grid) {
        ImageBatch adv;
        if (eps == 0.0) {
            adv = to_attack;
        } else {
            auto cfg = method_defaults(method, eps, seed);
            adv = run_attack(model, to_attack, cfg).adversarials;
        }
        ImageBatch mixed = keep_clean.concat(adv);
        std::vector<uint8_t> is_adv(static_cast<size_t>(mixed.size()), 0);
        for (int64_t i = keep_clean.size(); i < mixed.size(); ++i)
            is_adv[static_cast<size_t>(i)] = eps > 0.0;

        r.axis.push_back(eps);
        r.sample_counts.push_back(mixed.size());
        auto outcomes = defend_batch(model, mixed, hybrid);
        r.series[0].push_back(hybrid_accuracy(outcomes, mixed.labels, is_adv));
        if (cal_plain_l2) {
            PipelineConfig plain;
            plain.mode = DefenseMode::hybrid;
            plain.scorer = Scorer::plain_l2;
            plain.calibration = *cal_plain_l2;
            auto o2 = defend_batch(model, mixed, plain);
            r.series[1].push_back(hybrid_accuracy(o2, mixed.labels, is_adv));
        }
    }
    r.check();
    return r;
}

CurveResult run_score_distribution(const DefendedModel& model, const ThresholdCalibration& cal,
                                   Scorer scorer, AttackMethod method,
                                   const std::vector<double>& eps_grid,
                                   const ImageBatch& clean_eval, int64_t max_samples, int bins,
                                   uint64_t seed) {
    cal.require_model(model.param_hash());
    if (bins < 4) throw ConfigError("score distribution needs at least 4 bins");
    ImageBatch pool = clean_eval.slice(0, std::min<int64_t>(max_samples, clean_eval.size()));

    std::vector<std::pair<std::string, std::vector<double>>> score_sets;
    score_sets.emplace_back("clean", defense_scores(model, pool, scorer));
    for (double eps : eps_grid) {
        if (eps == 0.0) continue;
        auto cfg = method_defaults(method, eps, seed);
        auto set = run_attack(model, pool, cfg);
        std::ostringstream name;
        name << "eps_" << eps;
        score_sets.emplace_back(name.str(), defense_scores(model, set.adversarials, scorer));
    }

    double lo = cal.alpha, hi = cal.alpha;
    for (const auto& [_, v] : score_sets)
        for (double s : v) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
    if (hi <= lo) hi = lo + 1.0;
    const double width = (hi - lo) / bins;

    CurveResult r;
    r.kind = "score_distribution";
    r.dataset = model.spec().name;
    r.notes["alpha"] = cal.alpha;
    for (int b = 0; b < bins; ++b) {
        r.axis.push_back(lo + (b + 0.5) * width);
        r.sample_counts.push_back(pool.size());
    }
    for (auto& [name, scores] : score_sets) {
        std::vector<double> density(static_cast<size_t>(bins), 0.0);
        for (double s : scores) {
            int b = static_cast<int>((s - lo) / width);
            b = std::clamp(b, 0, bins - 1);
            density[static_cast<size_t>(b)] += 1.0;
        }
        // proportion density: integrates to one over the binned range
        for (auto& d : density) d /= static_cast<double>(scores.size()) * width;
        r.series_names.push_back(name);
        r.series.push_back(std::move(density));
    }
    // clean-score moments for the normality sanity check
    {
        const auto& clean = score_sets.front().second;
        const double m = mean_of(clean);
        const double sd = stddev_population(clean);
        double sk = 0, ku = 0;
        for (double s : clean) {
            const double z = (s - m) / (sd > 0 ? sd : 1.0);
            sk += z * z * z;
            ku += z * z * z * z;
        }
        r.notes["clean_mean"] = m;
        r.notes["clean_std"] = sd;
        r.notes["clean_skew"] = clean.empty() ? 0.0 : sk / static_cast<double>(clean.size());
        r.notes["clean_kurtosis_excess"] =
            clean.empty() ? 0.0 : ku / static_cast<double>(clean.size()) - 3.0;
    }
    r.check();
    return r;
}

CurveResult run_feature_interference_table(const DefendedModel& model,
                                           const ImageBatch& clean_eval, int64_t n_pairs,
                                           uint64_t seed) {
    ImageBatch pool = clean_eval.slice(0, std::min<int64_t>(n_pairs, clean_eval.size()));
    CurveResult r;
    r.kind = "feature_interference_table";
    r.dataset = model.spec().name;
    r.series_names = {"mean_feature_l2"};
    r.series.resize(1);

    const double strength = 0.3;
    struct Row {
        const char* name;
        AttackMethod method;
    };
    const Row rows[] = {{"gaussian", AttackMethod::gaussian},
                        {"fgsm", AttackMethod::fgsm},
                        {"pgd", AttackMethod::pgd}};
    double idx = 0;
    for (const auto& row : rows) {
        auto cfg = method_defaults(row.method, strength, seed);
        auto set = run_attack(model, pool, cfg);
        auto d = feature_interference<float>(model, pool, set.adversarials);
        r.axis.push_back(idx++);
        r.sample_counts.push_back(pool.size());
        r.series[0].push_back(mean_of(d));
        r.notes[row.name] = r.series[0].back();
    }
    r.notes["fgsm_gaussian_ratio"] = r.notes["fgsm"] / std::max(1e-12, r.notes["gaussian"]);
    r.check();
    return r;
}

CurveResult run_fpr_report(const DefendedModel& model, const ThresholdCalibration& cal,
                           Scorer scorer, const ImageBatch& clean_eval) {
    cal.require_model(model.param_hash());
    CurveResult r;
    r.kind = "fpr_report";
    r.dataset = model.spec().name;
    r.series_names = {"fpr"};
    r.series.resize(1);
    r.axis.push_back(0.0);
    r.sample_counts.push_back(clean_eval.size());
    r.series[0].push_back(detection_rate(model, cal, scorer, clean_eval));
    r.notes["alpha"] = cal.alpha;
    r.check();
    return r;
}

}  // namespace dafar
