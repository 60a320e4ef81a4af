#include "dafar/manifest.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dafar/checkpoint.hpp"
#include "dafar/dataset.hpp"
#include "dafar/errors.hpp"

namespace dafar {

namespace {

nlohmann::json to_json(const RunManifest& m) {
    return nlohmann::json{
        {"format_version", m.format_version},
        {"run_id", m.run_id},
        {"command", m.command},
        {"created_utc", m.created_utc},
        {"config", m.config},
        {"dataset", m.dataset},
        {"dataset_hashes", m.dataset_hashes},
        {"checkpoint_hashes", m.checkpoint_hashes},
        {"calibration", m.calibration},
        {"outputs", m.outputs},
        {"wall_seconds", m.wall_seconds},
        {"seed", m.seed},
    };
}

}  // namespace

void RunManifest::derive_run_id() {
    nlohmann::json key{
        {"command", command},
        {"config", config},
        {"dataset", dataset},
        {"dataset_hashes", dataset_hashes},
        {"checkpoint_hashes", checkpoint_hashes},
        {"seed", seed},
    };
    const std::string s = key.dump();
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(s.data(), s.size());
    run_id = os.str();
}

void save_manifest(const RunManifest& m, const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (std::filesystem::exists(path))
        throw IoError("manifest already exists (append-only): " + path.string());
    atomic_write(path, to_json(m).dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& dir) {
    const auto path = std::filesystem::is_directory(dir) ? dir / "manifest.json" : dir;
    std::ifstream f(path);
    if (!f) throw FileMissingError("cannot open manifest " + path.string());
    nlohmann::json j;
    f >> j;
    RunManifest m;
    m.format_version = j.at("format_version").get<int>();
    m.run_id = j.at("run_id").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.created_utc = j.value("created_utc", "");
    m.config = j.at("config");
    m.dataset = j.at("dataset").get<std::string>();
    m.dataset_hashes = j.at("dataset_hashes").get<std::map<std::string, uint64_t>>();
    m.checkpoint_hashes = j.at("checkpoint_hashes").get<std::map<std::string, uint64_t>>();
    m.calibration = j.at("calibration");
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
    return m;
}

}  // namespace dafar
