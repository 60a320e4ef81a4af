#include "dafar/detection.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "dafar/checkpoint.hpp"

namespace dafar {

const char* to_string(Scorer s) { return s == Scorer::detector ? "detector" : "plain_l2"; }
const char* to_string(ThresholdMode m) {
    return m == ThresholdMode::population ? "population" : "paper_literal";
}

Scorer scorer_from_string(const std::string& s) {
    if (s == "detector") return Scorer::detector;
    if (s == "plain_l2" || s == "plain-l2") return Scorer::plain_l2;
    throw ConfigError("unknown scorer: " + s);
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
    if (s == "population") return ThresholdMode::population;
    if (s == "paper_literal" || s == "paper-literal") return ThresholdMode::paper_literal;
    throw ConfigError("unknown threshold mode: " + s);
}

double mean_of(const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double stddev_population(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

ThresholdCalibration calibrate_threshold(const std::vector<double>& scores, double z,
                                         ThresholdMode mode) {
    if (scores.size() < 2)
        throw CalibrationError("calibration needs at least two clean scores, got " +
                               std::to_string(scores.size()));
    for (double s : scores)
        if (!(s >= 0) || !std::isfinite(s))
            throw CalibrationError("calibration scores must be finite and nonnegative");

    ThresholdCalibration cal;
    cal.mean = mean_of(scores);
    cal.stddev = stddev_population(scores);
    cal.count = static_cast<int64_t>(scores.size());
    cal.z = z;
    cal.mode = mode;
    cal.alpha = mode == ThresholdMode::population
                    ? cal.mean + z * cal.stddev
                    : cal.mean + z * cal.stddev / static_cast<double>(cal.count);
    return cal;
}

void save_calibration(const ThresholdCalibration& cal, const std::filesystem::path& path) {
    nlohmann::json j{
        {"format_version", 1},
        {"mean", cal.mean},
        {"stddev", cal.stddev},
        {"count", cal.count},
        {"z", cal.z},
        {"mode", to_string(cal.mode)},
        {"alpha", cal.alpha},
        {"scored_with", to_string(cal.scored_with)},
        {"model_hash", cal.model_hash},
    };
    atomic_write(path, j.dump(2) + "\n");
}

ThresholdCalibration load_calibration(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FileMissingError("cannot open calibration " + path.string());
    nlohmann::json j;
    f >> j;
    ThresholdCalibration cal;
    cal.mean = j.at("mean").get<double>();
    cal.stddev = j.at("stddev").get<double>();
    cal.count = j.at("count").get<int64_t>();
    cal.z = j.at("z").get<double>();
    cal.mode = threshold_mode_from_string(j.at("mode").get<std::string>());
    cal.alpha = j.at("alpha").get<double>();
    cal.scored_with = scorer_from_string(j.at("scored_with").get<std::string>());
    cal.model_hash = j.at("model_hash").get<uint64_t>();
    return cal;
}

}  // namespace dafar
