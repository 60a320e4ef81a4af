#pragma once

#include <string>
#include <vector>

namespace dafar {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast invariant suite over toy models: gradient vs finite differences,
// pool/unpool fidelity, attack bounds and zero-budget identities, JSMA pair
// choice vs brute force, calibration properties, container round-trips.
// Runs in well under five minutes.
std::vector<CheckResult> run_verify_suite();

// true iff every check passed
bool all_passed(const std::vector<CheckResult>& results);

}  // namespace dafar
