#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dafar/errors.hpp"

namespace dafar {

// Dense row-major tensor. Images are NCHW, flat feature batches are (N, D).
template <typename S>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int64_t> shp) : shape(std::move(shp)) {
        data.assign(static_cast<size_t>(numel_of(shape)), S(0));
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    // leading batch dimension
    int64_t batch() const { return shape.empty() ? 0 : shape[0]; }
    // elements per sample
    int64_t sample_size() const { return batch() == 0 ? 0 : numel() / batch(); }

    S* sample(int64_t n) { return data.data() + n * sample_size(); }
    const S* sample(int64_t n) const { return data.data() + n * sample_size(); }

    S& operator[](size_t i) { return data[i]; }
    const S& operator[](size_t i) const { return data[i]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    TensorT reshaped(std::vector<int64_t> shp) const {
        if (numel_of(shp) != numel())
            throw ShapeMismatchError("reshape " + shape_str() + " -> " + shape_str(shp) +
                                     " changes element count");
        TensorT out;
        out.shape = std::move(shp);
        out.data = data;
        return out;
    }

    std::string shape_str() const { return shape_str(shape); }
    static std::string shape_str(const std::vector<int64_t>& s) {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ")";
        return os.str();
    }

    template <typename T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;

// resize only when the shape changes; contents are otherwise left as-is so
// hot loops can reuse buffers without reallocating
template <typename S>
void ensure(TensorT<S>& t, const std::vector<int64_t>& shape) {
    if (t.shape == shape && t.data.size() == static_cast<size_t>(TensorT<S>::numel_of(shape)))
        return;
    t.shape = shape;
    t.data.assign(static_cast<size_t>(TensorT<S>::numel_of(shape)), S(0));
}

template <typename S>
void require_shape(const TensorT<S>& t, const std::vector<int64_t>& want, const char* where) {
    if (t.shape != want)
        throw ShapeMismatchError(std::string(where) + ": got " + t.shape_str() + ", want " +
                                 TensorT<S>::shape_str(want));
}

}  // namespace dafar
