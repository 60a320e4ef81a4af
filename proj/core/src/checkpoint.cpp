#include "dafar/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dafar/dataset.hpp"

namespace dafar {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'F', 'A', 'R', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

std::vector<const std::vector<float>*> all_params(const DefendedModel& m) {
    std::vector<const std::vector<float>*> out;
    for (const auto* p : m.encoder().param_tensors()) out.push_back(p);
    for (const auto* p : m.head().param_tensors()) out.push_back(p);
    for (const auto* p : m.decoder().param_tensors()) out.push_back(p);
    if (m.has_detector())
        for (const auto* p : m.detector().param_tensors()) out.push_back(p);
    return out;
}

std::vector<std::vector<float>*> all_params_mut(DefendedModel& m) {
    std::vector<std::vector<float>*> out;
    for (auto* p : m.encoder().param_tensors()) out.push_back(p);
    for (auto* p : m.head().param_tensors()) out.push_back(p);
    for (auto* p : m.decoder().param_tensors()) out.push_back(p);
    if (m.has_detector())
        for (auto* p : m.detector().param_tensors()) out.push_back(p);
    return out;
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const DefendedModel& model, const std::filesystem::path& path, int epoch) {
    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["spec"] = model.spec();
    header["with_detector"] = model.has_detector();
    header["epoch"] = epoch;
    header["param_hash"] = model.param_hash();

    auto params = all_params(model);
    std::vector<uint64_t> sizes;
    for (const auto* p : params) sizes.push_back(p->size());
    header["tensor_sizes"] = sizes;

    std::string hdr = header.dump();
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    uint32_t hlen = static_cast<uint32_t>(hdr.size());
    out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out += hdr;
    for (const auto* p : params)
        out.append(reinterpret_cast<const char*>(p->data()), p->size() * sizeof(float));

    atomic_write(path, out);
}

namespace {

nlohmann::json read_header(std::ifstream& f, const std::filesystem::path& path) {
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw BadMagicError("not a checkpoint file: " + path.string());
    uint32_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hdr(hlen, '\0');
    f.read(hdr.data(), hlen);
    if (!f) throw TruncatedRecordError("checkpoint header truncated: " + path.string());
    auto j = nlohmann::json::parse(hdr);
    if (j.at("format_version").get<int>() != kFormatVersion)
        throw ConfigError("unsupported checkpoint format version");
    return j;
}

}  // namespace

DefendedModel load_checkpoint(const std::filesystem::path& path, int* epoch_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileMissingError("cannot open checkpoint " + path.string());
    auto header = read_header(f, path);

    NetworkSpec spec = header.at("spec").get<NetworkSpec>();
    DefendedModel model(spec, header.at("with_detector").get<bool>(), /*seed=*/0);

    auto params = all_params_mut(model);
    auto sizes = header.at("tensor_sizes").get<std::vector<uint64_t>>();
    if (sizes.size() != params.size())
        throw TruncatedRecordError("checkpoint tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i]->size() != sizes[i])
            throw ShapeMismatchError("checkpoint tensor size mismatch at index " +
                                     std::to_string(i));
        f.read(reinterpret_cast<char*>(params[i]->data()),
               static_cast<std::streamsize>(sizes[i] * sizeof(float)));
        if (!f) throw TruncatedRecordError("checkpoint payload truncated: " + path.string());
    }
    const uint64_t want = header.at("param_hash").get<uint64_t>();
    if (model.param_hash() != want)
        throw TruncatedRecordError("checkpoint parameter hash mismatch");
    if (epoch_out) *epoch_out = header.at("epoch").get<int>();
    return model;
}

uint64_t checkpoint_param_hash(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileMissingError("cannot open checkpoint " + path.string());
    return read_header(f, path).at("param_hash").get<uint64_t>();
}

}  // namespace dafar
