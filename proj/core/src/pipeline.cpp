#include "dafar/pipeline.hpp"

#include <sstream>

namespace dafar {

const char* to_string(DefenseMode m) {
    switch (m) {
        case DefenseMode::hybrid: return "hybrid";
        case DefenseMode::detect_only: return "detect_only";
        case DefenseMode::purify_only: return "purify_only";
    }
    return "?";
}

DefenseMode defense_mode_from_string(const std::string& s) {
    for (DefenseMode m : {DefenseMode::hybrid, DefenseMode::detect_only, DefenseMode::purify_only})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown defense mode: " + s);
}

std::string outcomes_csv(const std::vector<DefenseOutcome>& outcomes, DefenseMode mode) {
    std::ostringstream os;
    os << "sample_id,verdict,score,label,mode\n";
    os.precision(9);
    for (size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        os << i << ',' << (o.rejected ? "rejected" : "label") << ',' << o.anomaly_score << ',';
        if (o.rejected)
            os << "";
        else
            os << o.label;
        os << ',' << to_string(mode) << '\n';
    }
    return os.str();
}

}  // namespace dafar
