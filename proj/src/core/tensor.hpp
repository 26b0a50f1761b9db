#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace ropnet::core {

// Dense row-major tensor. The production pipeline instantiates S = float
// (32-bit storage contract); reductions accumulate in double regardless of S.
template <typename S>
struct Tensor {
    std::vector<long> shape;
    std::vector<S> data;

    Tensor() = default;
    Tensor(std::vector<long> shp, std::vector<S> values)
        : shape(std::move(shp)), data(std::move(values)) {
        if (static_cast<long>(data.size()) != numel())
            throw Error(Status::Usage, "tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<long> shp) {
        long n = 1;
        for (long d : shp) n *= d;
        Tensor t;
        t.shape = std::move(shp);
        t.data.assign(static_cast<size_t>(n), S(0));
        return t;
    }

    static Tensor full(std::vector<long> shp, S value) {
        Tensor t = zeros(std::move(shp));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor scalar(S value) { return Tensor({1, 1}, {value}); }

    long numel() const {
        long n = 1;
        for (long d : shape) n *= d;
        return n;
    }

    // 2-D view: all leading dims collapse into rows, last dim is cols.
    long rows() const {
        if (shape.empty()) return 0;
        long r = 1;
        for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
        return r;
    }
    long cols() const { return shape.empty() ? 0 : shape.back(); }

    S& at(long r, long c) { return data[static_cast<size_t>(r * cols() + c)]; }
    S at(long r, long c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    S scalar_value() const {
        if (numel() != 1) throw Error(Status::Usage, "tensor is not a scalar");
        return data[0];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename S>
std::string shape_string(const Tensor<S>& t) {
    std::string s = "(";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(t.shape[i]);
    }
    return s + ")";
}

}  // namespace ropnet::core
