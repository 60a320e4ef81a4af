#pragma once

#include <map>
#include <string>
#include <vector>

#include "dafar/attacks.hpp"
#include "dafar/baselines.hpp"
#include "dafar/pipeline.hpp"

namespace dafar {

// One figure-analogue result: an x-axis, one or more named series over it,
// and the per-point sample counts needed to judge confidence.
struct CurveResult {
    std::string kind;
    std::string dataset;
    std::vector<double> axis;
    std::vector<std::string> series_names;
    std::vector<std::vector<double>> series;
    std::vector<int64_t> sample_counts;
    std::map<std::string, double> notes;  // threshold, fpr, moments, ...

    void check() const;  // series lengths match the axis, values in range
};

// versioned CSV: "# dafar-csv kind=<kind> version=1 dataset=... k=v ..." then
// "x,<series...>,samples" rows
std::string curve_csv(const CurveResult& r);
CurveResult curve_from_csv(const std::string& text);

// detection accuracy across attack intensities (the eps=0 point reports FPR)
CurveResult run_detection_curve(const DefendedModel& model, const ThresholdCalibration& cal,
                                Scorer scorer, AttackMethod method,
                                const std::vector<double>& eps_grid, const ImageBatch& clean_eval,
                                int64_t max_samples, uint64_t seed);

// detection accuracy per attack method at default strengths, with an optional
// supervised binary-classifier baseline for the universality comparison
CurveResult run_method_comparison(const DefendedModel& model, const ThresholdCalibration& cal,
                                  Scorer scorer, const std::vector<AttackMethod>& methods,
                                  const ImageBatch& clean_eval,
                                  const BinaryClassifier* binary_baseline, int64_t max_samples,
                                  uint64_t seed);

// classification accuracy of purification and baseline defenses across intensities
CurveResult run_purification_curve(const DefendedModel& model, AttackMethod method,
                                   const std::vector<double>& eps_grid,
                                   const ImageBatch& clean_eval,
                                   const DenoisingAutoencoder* denoiser, bool with_binary_filter,
                                   int64_t max_samples, uint64_t seed);

// hybrid defense on 1:1 mixed sets built from victim-correct samples;
// rejected adversarials count as correct, rejected cleans as incorrect
CurveResult run_hybrid_eval(const DefendedModel& model, const ThresholdCalibration& cal,
                            const ThresholdCalibration* cal_plain_l2, AttackMethod method,
                            const std::vector<double>& eps_grid, const ImageBatch& clean_eval,
                            int64_t max_samples, uint64_t seed);

// anomaly-score proportion density curves per intensity, with the threshold
// and clean-score moments in the notes
CurveResult run_score_distribution(const DefendedModel& model, const ThresholdCalibration& cal,
                                   Scorer scorer, AttackMethod method,
                                   const std::vector<double>& eps_grid,
                                   const ImageBatch& clean_eval, int64_t max_samples, int bins,
                                   uint64_t seed);

// mean high-level-feature L2 distance for Gaussian / FGSM / PGD at 0.3
CurveResult run_feature_interference_table(const DefendedModel& model,
                                           const ImageBatch& clean_eval, int64_t n_pairs,
                                           uint64_t seed);

// clean false-positive rate under the calibrated threshold
CurveResult run_fpr_report(const DefendedModel& model, const ThresholdCalibration& cal,
                           Scorer scorer, const ImageBatch& clean_eval);

std::vector<double> default_eps_grid();

// keep the samples the victim classifies correctly (first max_n of them)
ImageBatch victim_correct_subset(const DefendedModel& model, const ImageBatch& batch,
                                 int64_t max_n);

double hybrid_accuracy(const std::vector<DefenseOutcome>& outcomes,
                       const std::vector<int>& labels, const std::vector<uint8_t>& is_adv);

}  // namespace dafar
