#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dafar {

struct LayerDesc {
    enum class Kind {
        conv,
        conv_transpose,
        max_pool,
        max_unpool,
        linear,
        relu,
        tanh,
        softmax,
        flatten,
    };

    Kind kind{};
    int units = 0;   // out channels (conv/conv_transpose) or out features (linear)
    int kernel = 0;  // conv/conv_transpose only
    int pad = -1;    // -1 = kernel/2

    static LayerDesc conv2d(int ch, int k, int pad = -1) {
        return {Kind::conv, ch, k, pad};
    }
    static LayerDesc conv_t(int ch, int k, int pad = -1) {
        return {Kind::conv_transpose, ch, k, pad};
    }
    static LayerDesc pool() { return {Kind::max_pool, 0, 0, -1}; }
    static LayerDesc unpool() { return {Kind::max_unpool, 0, 0, -1}; }
    static LayerDesc linear(int n) { return {Kind::linear, n, 0, -1}; }
    static LayerDesc relu() { return {Kind::relu, 0, 0, -1}; }
    static LayerDesc tanh() { return {Kind::tanh, 0, 0, -1}; }
    static LayerDesc softmax() { return {Kind::softmax, 0, 0, -1}; }
    static LayerDesc flatten() { return {Kind::flatten, 0, 0, -1}; }

    bool operator==(const LayerDesc&) const = default;
};

const char* to_string(LayerDesc::Kind k);
LayerDesc::Kind layer_kind_from_string(const std::string& s);

// Architecture of one defended model: the victim layer list (encoder + head,
// split by feedback_position), the feedback decoder, and the optional
// anomaly-detector autoencoder.
struct NetworkSpec {
    std::string name;
    std::array<int64_t, 3> input_shape{};  // (c, h, w)
    int num_classes = 10;

    std::vector<LayerDesc> victim;
    int feedback_position = 0;  // index of the last encoder layer (inclusive)
    std::vector<LayerDesc> decoder;
    std::vector<LayerDesc> detector;

    std::vector<LayerDesc> encoder_layers() const {
        return {victim.begin(), victim.begin() + feedback_position + 1};
    }
    std::vector<LayerDesc> head_layers() const {
        return {victim.begin() + feedback_position + 1, victim.end()};
    }

    bool operator==(const NetworkSpec&) const = default;
};

// built-in presets mirroring the published MNIST / CIFAR-10 structures
NetworkSpec mnist_spec();
NetworkSpec cifar10_spec();

void to_json(nlohmann::json& j, const LayerDesc& d);
void from_json(const nlohmann::json& j, LayerDesc& d);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);

}  // namespace dafar
