#include "dafar/attacks.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dafar/checkpoint.hpp"

namespace dafar {

const char* to_string(AttackMethod m) {
    switch (m) {
        case AttackMethod::fgsm: return "fgsm";
        case AttackMethod::pgd: return "pgd";
        case AttackMethod::jsma: return "jsma";
        case AttackMethod::cw_l2: return "cw_l2";
        case AttackMethod::gaussian: return "gaussian";
    }
    return "?";
}

AttackMethod attack_from_string(const std::string& s) {
    for (AttackMethod m : {AttackMethod::fgsm, AttackMethod::pgd, AttackMethod::jsma,
                           AttackMethod::cw_l2, AttackMethod::gaussian})
        if (s == to_string(m)) return m;
    if (s == "cw" || s == "cw2") return AttackMethod::cw_l2;
    throw ConfigError("unknown attack method: " + s);
}

namespace {

constexpr char kMagic[8] = {'D', 'A', 'F', 'A', 'R', 'A', 'S', '1'};

nlohmann::json config_json(const AttackConfig& c) {
    return nlohmann::json{
        {"method", to_string(c.method)},   {"epsilon", c.epsilon},
        {"steps", c.steps},                {"step_size", c.step_size},
        {"confidence", c.confidence},      {"tradeoff_c", c.tradeoff_c},
        {"search_steps", c.search_steps},  {"theta", c.theta},
        {"gamma", c.gamma},                {"target_label", c.target_label},
        {"seed", c.seed},
    };
}

AttackConfig config_from_json(const nlohmann::json& j) {
    AttackConfig c;
    c.method = attack_from_string(j.at("method").get<std::string>());
    c.epsilon = j.at("epsilon").get<double>();
    c.steps = j.at("steps").get<int>();
    c.step_size = j.at("step_size").get<double>();
    c.confidence = j.at("confidence").get<double>();
    c.tradeoff_c = j.at("tradeoff_c").get<double>();
    c.search_steps = j.at("search_steps").get<int>();
    c.theta = j.at("theta").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.target_label = j.at("target_label").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace

void save_adversarial_set(const AdversarialSet& set, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format_version"] = 1;
    header["config"] = config_json(set.config);
    header["count"] = set.size();
    header["shape"] = set.originals.pixels.shape;

    std::string hdr = header.dump();
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    uint32_t hlen = static_cast<uint32_t>(hdr.size());
    out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out += hdr;

    auto append_floats = [&out](const std::vector<float>& v) {
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
    };
    append_floats(set.originals.pixels.data);
    append_floats(set.adversarials.pixels.data);
    for (int l : set.originals.labels) {
        auto b = static_cast<uint8_t>(l);
        out.append(reinterpret_cast<const char*>(&b), 1);
    }
    out.append(reinterpret_cast<const char*>(set.success_mask.data()), set.success_mask.size());
    atomic_write(path, out);
}

AdversarialSet load_adversarial_set(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileMissingError("cannot open adversarial set " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw BadMagicError("not an adversarial-set file: " + path.string());
    uint32_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hdr(hlen, '\0');
    f.read(hdr.data(), hlen);
    if (!f) throw TruncatedRecordError("adversarial-set header truncated");
    auto header = nlohmann::json::parse(hdr);

    AdversarialSet set;
    set.config = config_from_json(header.at("config"));
    const auto shape = header.at("shape").get<std::vector<int64_t>>();
    const int64_t n = header.at("count").get<int64_t>();

    set.originals.pixels = Tensor(shape);
    set.adversarials.pixels = Tensor(shape);
    auto read_floats = [&](std::vector<float>& v) {
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(float)));
    };
    read_floats(set.originals.pixels.data);
    read_floats(set.adversarials.pixels.data);
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(labels.data()), n);
    set.success_mask.resize(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(set.success_mask.data()), n);
    if (!f) throw TruncatedRecordError("adversarial-set payload truncated");
    set.originals.labels.assign(labels.begin(), labels.end());
    set.adversarials.labels = set.originals.labels;
    return set;
}

}  // namespace dafar
