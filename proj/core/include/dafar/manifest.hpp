#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dafar {

// Append-only record tying one run's outputs to everything that produced
// them: config snapshot, dataset and checkpoint hashes, calibration, seed.
struct RunManifest {
    int format_version = 1;
    std::string run_id;  // content hash of (command, config, seed, inputs)
    std::string command;
    std::string created_utc;
    nlohmann::json config;
    std::string dataset;
    std::map<std::string, uint64_t> dataset_hashes;
    std::map<std::string, uint64_t> checkpoint_hashes;
    nlohmann::json calibration;  // embedded record or null
    std::vector<std::string> outputs;  // paths relative to the run directory
    double wall_seconds = 0;
    uint64_t seed = 0;

    void derive_run_id();
};

// writes <dir>/manifest.json; refuses to overwrite an existing manifest
void save_manifest(const RunManifest& m, const std::filesystem::path& dir);
RunManifest load_manifest(const std::filesystem::path& dir);

}  // namespace dafar
