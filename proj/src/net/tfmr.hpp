#pragma once

#include <algorithm>

#include "geom/neighbors.hpp"
#include "net/net_common.hpp"

namespace ropnet::net {

// Feature-matching-removal stage: PPF-augmented point features, an
// offset-attention Transformer, overlap- and matching-based point pruning,
// soft top-k correspondences and weighted SVD refinement.

// Indices of the `count` largest scores, ties broken toward the lower index,
// returned in ascending index order.
inline std::vector<long> top_indices(const std::vector<double>& scores, long count) {
    long n = static_cast<long>(scores.size());
    if (count > n)
        throw Error(Status::Usage, "top_indices: requested more entries than available");
    std::vector<long> order(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::partial_sort(order.begin(), order.begin() + count, order.end(),
                      [&](long a, long b) {
                          double sa = scores[static_cast<size_t>(a)];
                          double sb = scores[static_cast<size_t>(b)];
                          if (sa != sb) return sa > sb;
                          return a < b;
                      });
    order.resize(static_cast<size_t>(count));
    std::sort(order.begin(), order.end());
    return order;
}

// Number of rows kept by feature-matching removal: max(3, floor(prob * n)).
inline long fmr_keep_count(double prob, long n) {
    if (!(prob > 0.0 && prob <= 1.0))
        throw Error(Status::Usage, "fmr: prob must be in (0, 1]");
    if (n < 3) throw Error(Status::Numeric, "fmr: fewer than 3 candidate rows");
    return std::max<long>(3, static_cast<long>(std::floor(prob * static_cast<double>(n))));
}

// k nearest neighbors within `radius` per point (self included at distance
// zero), padded with self-pairs up to exactly k entries per point.
inline std::vector<long> ppf_neighbor_indices(const geom::PointMatrix& points, long k,
                                              double radius) {
    long n = points.rows();
    long k_eff = std::min(k, n);
    geom::KnnResult nn = geom::knn(points, points, k_eff);
    std::vector<long> idx(static_cast<size_t>(n * k));
    for (long i = 0; i < n; ++i) {
        long out = 0;
        for (long j = 0; j < k_eff && out < k; ++j) {
            if (nn.distances[static_cast<size_t>(i * k_eff + j)] <= radius)
                idx[static_cast<size_t>(i * k + out++)] =
                    nn.indices[static_cast<size_t>(i * k_eff + j)];
        }
        for (; out < k; ++out) idx[static_cast<size_t>(i * k + out)] = i;
    }
    return idx;
}

// PPF-augmented per-point features: 10-d neighbor rows through the
// mu encoder, max-pooled over the k neighbors.
template <typename S>
typename core::Tape<S>::Id ppf_point_features(core::Tape<S>& tape,
                                              const core::ParamStore<S>& store,
                                              long mu_layers,
                                              typename core::Tape<S>::Id points,
                                              typename core::Tape<S>::Id normals, long k,
                                              double radius) {
    std::vector<long> idx = ppf_neighbor_indices(to_points(tape.val(points)), k, radius);
    auto rows = tape.ppf_augment(points, normals, idx, k);
    std::vector<typename core::Tape<S>::Id> weights, biases;
    for (long i = 0; i < mu_layers; ++i) {
        weights.push_back(tape.param(store, "tfmr/mu/l" + std::to_string(i) + "/w"));
        biases.push_back(tape.param(store, "tfmr/mu/l" + std::to_string(i) + "/b"));
    }
    return tape.dense_relu_pool(rows, weights, biases, k);
}

// Offset attention: s = column-normalized row-softmax of Q K^T, A = s V,
// output = group_norm(FFNN(F - A) + F).
template <typename S>
typename core::Tape<S>::Id attention_block(core::Tape<S>& tape,
                                           const core::ParamStore<S>& store,
                                           const std::string& prefix,
                                           typename core::Tape<S>::Id feat,
                                           long gn_groups) {
    auto q = tape.matmul(feat, tape.param(store, prefix + "/wq"));
    auto kk = tape.matmul(feat, tape.param(store, prefix + "/wk"));
    auto v = tape.matmul(feat, tape.param(store, prefix + "/wv"));
    auto s = tape.softmax_rows_colnorm(tape.matmul(q, tape.transpose(kk)));
    auto att = tape.matmul(s, v);
    auto offset = tape.sub(feat, att);
    auto h = dense_stack(tape, store, prefix + "/ffnn", 2, offset, /*relu_last=*/false);
    return tape.group_norm(tape.add(h, feat), gn_groups,
                           tape.param(store, prefix + "/gn/gamma"),
                           tape.param(store, prefix + "/gn/beta"));
}

// Four sequential attention blocks; the concatenated block outputs are the
// final features (width = blocks * C_p).
template <typename S>
typename core::Tape<S>::Id transformer(core::Tape<S>& tape, const core::ParamStore<S>& store,
                                       typename core::Tape<S>::Id feat, long blocks,
                                       long gn_groups) {
    std::vector<typename core::Tape<S>::Id> outputs;
    auto x = feat;
    for (long i = 0; i < blocks; ++i) {
        x = attention_block(tape, store, "tfmr/block" + std::to_string(i), x, gn_groups);
        outputs.push_back(x);
    }
    return tape.concat_cols(outputs);
}

}  // namespace ropnet::net
