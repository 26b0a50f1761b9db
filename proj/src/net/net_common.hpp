#pragma once

#include <string>
#include <vector>

#include "core/tape.hpp"

namespace ropnet::net {

// Registers a dense stack's parameters: weights Kaiming-uniform (fan-in),
// biases zero. Layer i maps widths[i] -> widths[i+1].
template <typename S>
void add_dense_stack(core::ParamStore<S>& store, const std::string& prefix,
                     long in_width, const std::vector<long>& widths, core::Rng& rng) {
    long in = in_width;
    for (size_t i = 0; i < widths.size(); ++i) {
        store.add(prefix + "/l" + std::to_string(i) + "/w",
                  core::kaiming_uniform<S>(in, widths[i], rng));
        store.add(prefix + "/l" + std::to_string(i) + "/b",
                  core::Tensor<S>::zeros({1, widths[i]}));
        in = widths[i];
    }
}

// Shared per-point dense stack: x W + b with ReLU between layers.
// relu_last controls the activation after the final layer.
template <typename S>
typename core::Tape<S>::Id dense_stack(core::Tape<S>& tape, const core::ParamStore<S>& store,
                                       const std::string& prefix, long num_layers,
                                       typename core::Tape<S>::Id input, bool relu_last) {
    auto x = input;
    for (long i = 0; i < num_layers; ++i) {
        auto w = tape.param(store, prefix + "/l" + std::to_string(i) + "/w");
        auto b = tape.param(store, prefix + "/l" + std::to_string(i) + "/b");
        x = tape.dense_layer(x, w, b, /*with_relu=*/i + 1 < num_layers || relu_last);
    }
    return x;
}

template <typename S>
core::Tensor<S> to_tensor(const geom::PointMatrix& m) {
    core::Tensor<S> t = core::Tensor<S>::zeros({m.rows(), 3});
    for (long i = 0; i < m.rows(); ++i)
        for (int c = 0; c < 3; ++c) t.at(i, c) = static_cast<S>(m(i, c));
    return t;
}

template <typename S>
geom::PointMatrix to_points(const core::Tensor<S>& t) {
    geom::PointMatrix m(t.rows(), 3);
    for (long i = 0; i < t.rows(); ++i)
        for (int c = 0; c < 3; ++c) m(i, c) = static_cast<double>(t.at(i, c));
    return m;
}

}  // namespace ropnet::net
