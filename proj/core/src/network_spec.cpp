#include "dafar/network_spec.hpp"

#include <nlohmann/json.hpp>

#include "dafar/errors.hpp"

namespace dafar {

const char* to_string(LayerDesc::Kind k) {
    switch (k) {
        case LayerDesc::Kind::conv: return "conv";
        case LayerDesc::Kind::conv_transpose: return "conv_transpose";
        case LayerDesc::Kind::max_pool: return "max_pool";
        case LayerDesc::Kind::max_unpool: return "max_unpool";
        case LayerDesc::Kind::linear: return "linear";
        case LayerDesc::Kind::relu: return "relu";
        case LayerDesc::Kind::tanh: return "tanh";
        case LayerDesc::Kind::softmax: return "softmax";
        case LayerDesc::Kind::flatten: return "flatten";
    }
    return "?";
}

LayerDesc::Kind layer_kind_from_string(const std::string& s) {
    using K = LayerDesc::Kind;
    for (K k : {K::conv, K::conv_transpose, K::max_pool, K::max_unpool, K::linear, K::relu,
                K::tanh, K::softmax, K::flatten})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown layer kind: " + s);
}

NetworkSpec mnist_spec() {
    using D = LayerDesc;
    NetworkSpec s;
    s.name = "mnist";
    s.input_shape = {1, 28, 28};
    s.victim = {
        D::conv2d(32, 3), D::relu(),
        D::conv2d(32, 3), D::relu(),
        D::pool(),
        D::conv2d(64, 3), D::relu(),
        D::conv2d(64, 3), D::relu(),
        D::pool(),
        // head
        D::flatten(),
        D::linear(200), D::relu(),
        D::linear(200), D::relu(),
        D::linear(10), D::softmax(),
    };
    s.feedback_position = 9;  // the second max-pool
    s.decoder = {
        D::unpool(),
        D::conv_t(64, 3), D::relu(),
        D::conv_t(32, 3), D::relu(),
        D::unpool(),
        D::conv_t(32, 3), D::relu(),
        D::conv_t(1, 3), D::tanh(),
    };
    s.detector = {
        D::linear(256), D::relu(),
        D::linear(32), D::relu(),
        D::linear(256), D::relu(),
        D::linear(784), D::tanh(),
    };
    return s;
}

NetworkSpec cifar10_spec() {
    using D = LayerDesc;
    NetworkSpec s;
    s.name = "cifar10";
    s.input_shape = {3, 32, 32};
    s.victim = {
        D::conv2d(96, 3), D::relu(),
        D::conv2d(96, 3), D::relu(),
        D::conv2d(96, 3), D::relu(),
        D::pool(),
        D::conv2d(192, 3), D::relu(),
        D::conv2d(192, 3), D::relu(),
        D::conv2d(192, 3), D::relu(),
        D::pool(),
        // head
        D::conv2d(192, 3), D::relu(),
        D::conv2d(192, 1), D::relu(),
        D::conv2d(10, 1), D::relu(),
        D::flatten(),
        D::linear(200), D::relu(),
        D::linear(200), D::relu(),
        D::linear(10), D::softmax(),
    };
    s.feedback_position = 13;  // the second max-pool
    s.decoder = {
        D::unpool(),
        D::conv_t(192, 3), D::relu(),
        D::conv_t(192, 3), D::relu(),
        D::conv_t(96, 3), D::relu(),
        D::unpool(),
        D::conv_t(96, 3), D::relu(),
        D::conv_t(96, 3), D::relu(),
        D::conv_t(3, 3), D::tanh(),
    };
    s.detector = {
        D::linear(512), D::relu(),
        D::linear(64), D::relu(),
        D::linear(512), D::relu(),
        D::linear(3072), D::tanh(),
    };
    return s;
}

void to_json(nlohmann::json& j, const LayerDesc& d) {
    j = nlohmann::json{{"kind", to_string(d.kind)}};
    if (d.units) j["units"] = d.units;
    if (d.kernel) j["kernel"] = d.kernel;
    if (d.pad >= 0) j["pad"] = d.pad;
}

void from_json(const nlohmann::json& j, LayerDesc& d) {
    d.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    d.units = j.value("units", 0);
    d.kernel = j.value("kernel", 0);
    d.pad = j.value("pad", -1);
}

void to_json(nlohmann::json& j, const NetworkSpec& s) {
    j = nlohmann::json{
        {"name", s.name},
        {"input_shape", s.input_shape},
        {"num_classes", s.num_classes},
        {"victim", s.victim},
        {"feedback_position", s.feedback_position},
        {"decoder", s.decoder},
        {"detector", s.detector},
    };
}

void from_json(const nlohmann::json& j, NetworkSpec& s) {
    j.at("name").get_to(s.name);
    j.at("input_shape").get_to(s.input_shape);
    j.at("num_classes").get_to(s.num_classes);
    j.at("victim").get_to(s.victim);
    j.at("feedback_position").get_to(s.feedback_position);
    j.at("decoder").get_to(s.decoder);
    j.at("detector").get_to(s.detector);
}

}  // namespace dafar
