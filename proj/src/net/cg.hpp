#pragma once

#include "net/net_common.hpp"

namespace ropnet::net {

// Context-guided stage: shared per-point encoder with global max-pool,
// a transformation decoder regressing (quaternion, translation) from the
// paired global features, and a shared overlap decoder fed by the
// information-interaction fusion.

template <typename S>
struct CgForward {
    using Id = typename core::Tape<S>::Id;
    Id feat_x, feat_y;          // per-point features (N x C)
    Id global_x, global_y;      // 1 x C
    Id init_vec;                // 1 x 7 decoder output
    Id rot0, trans0;            // 3 x 3 and 1 x 3
    Id probs_x, probs_y;        // per-point two-class probabilities (N x 2)
    Id score_x, score_y;        // overlap-class probability column (N x 1)
    bool quat_fallback = false; // decoder emitted a near-zero quaternion
};

// Per-point encoder + global max-pool. The encoder has no normalization
// layers; every dense layer is followed by ReLU.
template <typename S>
std::pair<typename core::Tape<S>::Id, typename core::Tape<S>::Id> cg_encode(
    core::Tape<S>& tape, const core::ParamStore<S>& store, long num_layers,
    typename core::Tape<S>::Id cloud_points) {
    if (tape.val(cloud_points).rows() < 1)
        throw Error(Status::Usage, "cg_encode: empty cloud");
    auto feat = dense_stack(tape, store, "cg/encoder", num_layers, cloud_points,
                            /*relu_last=*/true);
    auto global = tape.max_pool_rows(feat);
    return {feat, global};
}

// cat(F, r(g_self), r(g_other), r(g_self - g_other)) -> N x 4C.
template <typename S>
typename core::Tape<S>::Id information_interaction(core::Tape<S>& tape,
                                                   typename core::Tape<S>::Id feat,
                                                   typename core::Tape<S>::Id g_self,
                                                   typename core::Tape<S>::Id g_other) {
    long n = tape.val(feat).rows();
    return tape.concat_cols({feat, tape.repeat_row(g_self, n), tape.repeat_row(g_other, n),
                             tape.repeat_row(tape.sub(g_self, g_other), n)});
}

// The fused overlap path exploits that the repeated global-feature rows are
// rank-1: splitting the first decoder weight by input block turns
// cat(F, r(gS), r(gO), r(gS - gO)) W0 into F W_F + one broadcast row.
// Identical math, a quarter of the first-layer work.
template <typename S>
typename core::Tape<S>::Id overlap_logits_fused(core::Tape<S>& tape,
                                                const core::ParamStore<S>& store,
                                                long ov_layers,
                                                typename core::Tape<S>::Id feat,
                                                typename core::Tape<S>::Id g_self,
                                                typename core::Tape<S>::Id g_other) {
    long c = tape.val(feat).cols();
    auto w0 = tape.param(store, "cg/overlap/l0/w");
    auto b0 = tape.param(store, "cg/overlap/l0/b");
    auto w_feat = tape.slice_rows(w0, 0, c);
    auto w_self = tape.slice_rows(w0, c, 2 * c);
    auto w_other = tape.slice_rows(w0, 2 * c, 3 * c);
    auto w_diff = tape.slice_rows(w0, 3 * c, 4 * c);
    auto row = tape.add(tape.add(tape.matmul(g_self, tape.add(w_self, w_diff)),
                                 tape.matmul(g_other, tape.sub(w_other, w_diff))),
                        b0);
    auto x = tape.relu(tape.add_row_broadcast(tape.matmul(feat, w_feat), row));
    for (long i = 1; i < ov_layers; ++i) {
        auto w = tape.param(store, "cg/overlap/l" + std::to_string(i) + "/w");
        auto b = tape.param(store, "cg/overlap/l" + std::to_string(i) + "/b");
        x = tape.dense_layer(x, w, b, /*with_relu=*/i + 1 < ov_layers);
    }
    return x;
}

template <typename S>
CgForward<S> cg_forward(core::Tape<S>& tape, const core::ParamStore<S>& store,
                        long enc_layers, long init_layers, long ov_layers,
                        typename core::Tape<S>::Id x_points,
                        typename core::Tape<S>::Id y_points) {
    CgForward<S> out;
    std::tie(out.feat_x, out.global_x) = cg_encode(tape, store, enc_layers, x_points);
    std::tie(out.feat_y, out.global_y) = cg_encode(tape, store, enc_layers, y_points);

    out.init_vec = dense_stack(tape, store, "cg/init", init_layers,
                               tape.concat_cols({out.global_x, out.global_y}),
                               /*relu_last=*/false);
    auto quat_raw = tape.slice_cols(out.init_vec, 0, 4);
    double qnorm = 0.0;
    for (int i = 0; i < 4; ++i) {
        double v = tape.val(quat_raw).data[static_cast<size_t>(i)];
        qnorm += v * v;
    }
    if (std::sqrt(qnorm) <= 1e-8) {
        // Pathological decoder output: fall back to the identity rotation
        // instead of failing the step; callers count these.
        out.quat_fallback = true;
        core::Tensor<S> eye = core::Tensor<S>::zeros({3, 3});
        eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = S(1);
        out.rot0 = tape.leaf(std::move(eye));
    } else {
        out.rot0 = tape.quat_to_rotmat(tape.normalize_rows_l2(quat_raw));
    }
    out.trans0 = tape.slice_cols(out.init_vec, 4, 7);

    auto overlap_head = [&](typename core::Tape<S>::Id feat, typename core::Tape<S>::Id gs,
                            typename core::Tape<S>::Id go) {
        return tape.softmax_rows(
            overlap_logits_fused(tape, store, ov_layers, feat, gs, go));
    };
    out.probs_x = overlap_head(out.feat_x, out.global_x, out.global_y);
    out.probs_y = overlap_head(out.feat_y, out.global_y, out.global_x);
    out.score_x = tape.slice_cols(out.probs_x, 1, 2);
    out.score_y = tape.slice_cols(out.probs_y, 1, 2);
    return out;
}

}  // namespace ropnet::net
