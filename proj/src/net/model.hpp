#pragma once

#include "config.hpp"
#include "data/generator.hpp"
#include "net/cg.hpp"
#include "net/tfmr.hpp"

namespace ropnet::net {

struct ModelConfig {
    // architecture
    std::vector<long> enc_widths{64, 64, 64, 128, 512};
    std::vector<long> init_widths{512, 512, 256, 7};
    std::vector<long> ov_widths{512, 512, 256, 2};
    std::vector<long> mu_widths{64, 96, 192};
    std::vector<long> ffnn_widths{192, 192};
    long cp = 192;
    long c0 = 64;
    long blocks = 4;
    long gn_groups = 8;
    // PPF neighborhood
    long ppf_k = 64;
    double ppf_radius = 0.3;
    // selection
    long n1 = 448;
    long m1 = 0;  // 0 = keep all target points
    double prob_train = 0.6;
    double prob_test = 0.4;
    long k_train = 3;
    long k_test = 1;
    long train_iters = 1;
    long test_iters = 2;
    bool fmr_softmax = true;
    // losses
    double alpha = 1.0;
    double beta = 0.1;
    double lambda = 1.0;
    bool l1_mean = true;
    double svd_jitter = 1e-8;
    uint64_t init_seed = 0;

    void validate() const {
        if (mu_widths.empty() || mu_widths.back() != cp)
            throw Error(Status::Usage, "mu_widths must end at cp");
        if (ffnn_widths.size() != 2 || ffnn_widths.back() != cp)
            throw Error(Status::Usage, "ffnn_widths must be two layers ending at cp");
        if (cp % gn_groups != 0)
            throw Error(Status::Usage, "cp must be divisible by gn_groups");
        if (init_widths.empty() || init_widths.back() != 7)
            throw Error(Status::Usage, "init decoder must end at width 7");
        if (ov_widths.empty() || ov_widths.back() != 2)
            throw Error(Status::Usage, "overlap decoder must end at width 2");
        if (n1 < 3 || c0 < 1 || blocks < 1 || ppf_k < 1 || k_train < 1 || k_test < 1)
            throw Error(Status::Usage, "invalid architecture constants");
        if (!(prob_train > 0 && prob_train <= 1) || !(prob_test > 0 && prob_test <= 1))
            throw Error(Status::Usage, "prob must be in (0, 1]");
        if (alpha < 0 || beta < 0 || lambda < 0)
            throw Error(Status::Usage, "loss weights must be non-negative");
    }

    static ModelConfig from(const RunConfig& rc) {
        ModelConfig m;
        m.enc_widths = rc.get_longs("enc_widths");
        m.init_widths = rc.get_longs("init_widths");
        m.ov_widths = rc.get_longs("ov_widths");
        m.mu_widths = rc.get_longs("mu_widths");
        m.ffnn_widths = rc.get_longs("ffnn_widths");
        m.cp = rc.get_long("cp");
        m.c0 = rc.get_long("c0");
        m.blocks = rc.get_long("blocks");
        m.gn_groups = rc.get_long("gn_groups");
        m.ppf_k = rc.get_long("ppf_k");
        m.ppf_radius = rc.get_double("ppf_radius");
        m.n1 = rc.get_long("n1");
        m.m1 = rc.get_long("m1");
        m.prob_train = rc.get_double("prob_train");
        m.prob_test = rc.get_double("prob_test");
        m.k_train = rc.get_long("k_train");
        m.k_test = rc.get_long("k_test");
        m.train_iters = rc.get_long("train_iters");
        m.test_iters = rc.get_long("test_iters");
        m.fmr_softmax = rc.get("fmr_weighting") == "softmax";
        m.alpha = rc.get_double("alpha");
        m.beta = rc.get_double("beta");
        m.lambda = rc.get_double("lambda");
        m.l1_mean = rc.get("l1_mode") == "mean";
        m.svd_jitter = rc.get_double("svd_jitter");
        m.init_seed = static_cast<uint64_t>(std::stoull(rc.get("seed")));
        m.validate();
        return m;
    }
};

// Fresh parameter initialization: Kaiming-uniform fan-in weights, zero
// biases; the final init-decoder layer is zeroed with quaternion-w bias 1,
// so the initial transform starts at identity.
template <typename S>
void init_params(core::ParamStore<S>& store, const ModelConfig& cfg) {
    cfg.validate();
    core::Rng rng(cfg.init_seed ^ 0x524F504EULL);
    add_dense_stack(store, "cg/encoder", 3, cfg.enc_widths, rng);
    add_dense_stack(store, "cg/init", 2 * cfg.enc_widths.back(), cfg.init_widths, rng);
    add_dense_stack(store, "cg/overlap", 4 * cfg.enc_widths.back(), cfg.ov_widths, rng);
    add_dense_stack(store, "tfmr/mu", 10, cfg.mu_widths, rng);
    for (long i = 0; i < cfg.blocks; ++i) {
        std::string p = "tfmr/block" + std::to_string(i);
        store.add(p + "/wq", core::kaiming_uniform<S>(cfg.cp, cfg.c0, rng));
        store.add(p + "/wk", core::kaiming_uniform<S>(cfg.cp, cfg.c0, rng));
        store.add(p + "/wv", core::kaiming_uniform<S>(cfg.cp, cfg.cp, rng));
        add_dense_stack(store, p + "/ffnn", cfg.cp, cfg.ffnn_widths, rng);
        store.add(p + "/gn/gamma", core::Tensor<S>::full({1, cfg.cp}, S(1)));
        store.add(p + "/gn/beta", core::Tensor<S>::zeros({1, cfg.cp}));
    }
    std::string last = "cg/init/l" + std::to_string(cfg.init_widths.size() - 1);
    auto& w = store.value(last + "/w");
    std::fill(w.data.begin(), w.data.end(), S(0));
    store.value(last + "/b").data[0] = S(1);  // identity quaternion
}

// ---- weighted SVD on the tape ----------------------------------------------

template <typename S>
struct TapedTransform {
    typename core::Tape<S>::Id rotation;     // 3 x 3
    typename core::Tape<S>::Id translation;  // 1 x 3
};

// Kabsch built from taped primitives; only the rotation extraction carries
// a custom backward. `jitter` is added to the cross-covariance diagonal
// during training for stability near repeated singular values.
template <typename S>
TapedTransform<S> taped_kabsch(core::Tape<S>& tape, typename core::Tape<S>::Id src,
                               typename core::Tape<S>::Id dst,
                               typename core::Tape<S>::Id weights, double jitter) {
    long n = tape.val(src).rows();
    if (n < 3) throw Error(Status::Numeric, "taped_kabsch: need at least 3 pairs");
    double wsum_val = 0.0;
    for (S v : tape.val(weights).data) wsum_val += static_cast<double>(v);
    if (!(wsum_val > 0.0))
        throw Error(Status::Numeric, "taped_kabsch: total weight must be positive");

    auto wsum = tape.sum_all(weights);
    auto wt = tape.transpose(weights);  // 1 x n
    auto src_center = tape.div_by_scalar(tape.matmul(wt, src), wsum);
    auto dst_center = tape.div_by_scalar(tape.matmul(wt, dst), wsum);
    auto src_c = tape.sub(src, tape.repeat_row(src_center, n));
    auto dst_c = tape.sub(dst, tape.repeat_row(dst_center, n));
    auto cov = tape.matmul(tape.transpose(tape.scale_rows(src_c, weights)), dst_c);
    if (jitter > 0.0) {
        core::Tensor<S> eye = core::Tensor<S>::zeros({3, 3});
        eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = static_cast<S>(jitter);
        cov = tape.add(cov, tape.leaf(std::move(eye)));
    }
    TapedTransform<S> out;
    out.rotation = tape.procrustes_rotation(cov);
    out.translation =
        tape.sub(dst_center, tape.matmul(src_center, tape.transpose(out.rotation)));
    return out;
}

// ---- TFMR refinement --------------------------------------------------------

template <typename S>
struct RefineResult {
    TapedTransform<S> accumulated;  // composed incremental transforms
    std::vector<long> kept_o1;      // top-N1 by overlap score (last iteration)
    std::vector<long> kept_o2;      // surviving representative points (global indices)
};

template <typename S>
RefineResult<S> tfmr_refine(core::Tape<S>& tape, const core::ParamStore<S>& store,
                            const ModelConfig& cfg, typename core::Tape<S>::Id x_points,
                            typename core::Tape<S>::Id x_normals,
                            typename core::Tape<S>::Id y_points,
                            typename core::Tape<S>::Id y_normals,
                            typename core::Tape<S>::Id score_x,
                            const std::vector<double>& score_y_vals, long iters,
                            double prob, long topk, bool training) {
    using Id = typename core::Tape<S>::Id;
    RefineResult<S> out;
    core::Tensor<S> eye = core::Tensor<S>::zeros({3, 3});
    eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = S(1);
    out.accumulated.rotation = tape.leaf(std::move(eye));
    out.accumulated.translation = tape.leaf(core::Tensor<S>::zeros({1, 3}));
    if (iters < 1) return out;

    long mu_layers = static_cast<long>(cfg.mu_widths.size());

    // Target features are computed once; the target cloud is fixed across
    // refinement iterations.
    Id feat_y = ppf_point_features(tape, store, mu_layers, y_points, y_normals, cfg.ppf_k,
                                   cfg.ppf_radius);
    Id ft_y = transformer(tape, store, feat_y, cfg.blocks, cfg.gn_groups);
    core::Tensor<S> y_used = tape.val(y_points);
    if (cfg.m1 > 0 && cfg.m1 < tape.val(y_points).rows()) {
        std::vector<long> ysel = top_indices(score_y_vals, cfg.m1);
        ft_y = tape.gather_rows(ft_y, ysel);
        core::Tensor<S> sub = core::Tensor<S>::zeros({static_cast<long>(ysel.size()), 3});
        for (size_t i = 0; i < ysel.size(); ++i)
            for (int c = 0; c < 3; ++c)
                sub.at(static_cast<long>(i), c) = tape.val(y_points).at(ysel[i], c);
        y_used = std::move(sub);
    }
    if (topk > y_used.rows())
        throw Error(Status::Usage, "correspondence top-k exceeds target size");
    Id ft_y_t = tape.transpose(ft_y);

    Id xp = x_points;
    Id xnrm = x_normals;
    for (long iter = 0; iter < iters; ++iter) {
        Id feat_x = ppf_point_features(tape, store, mu_layers, xp, xnrm, cfg.ppf_k,
                                       cfg.ppf_radius);
        Id ft_x = transformer(tape, store, feat_x, cfg.blocks, cfg.gn_groups);

        long n = tape.val(xp).rows();
        long n1 = std::min(cfg.n1, n);
        std::vector<double> sx(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i)
            sx[static_cast<size_t>(i)] = tape.val(score_x).data[static_cast<size_t>(i)];
        out.kept_o1 = top_indices(sx, n1);

        Id h = tape.matmul(tape.gather_rows(ft_x, out.kept_o1), ft_y_t);
        const core::Tensor<S>& hv = tape.val(h);
        std::vector<double> row_max(static_cast<size_t>(n1));
        for (long i = 0; i < n1; ++i) {
            double best = hv.at(i, 0);
            for (long j = 1; j < hv.cols(); ++j)
                best = std::max(best, static_cast<double>(hv.at(i, j)));
            row_max[static_cast<size_t>(i)] = best;
        }
        std::vector<long> rel = top_indices(row_max, fmr_keep_count(prob, n1));
        out.kept_o2.clear();
        for (long r : rel) out.kept_o2.push_back(out.kept_o1[static_cast<size_t>(r)]);

        Id h2 = tape.gather_rows(h, rel);
        Id hw = cfg.fmr_softmax ? tape.softmax_rows(h2) : tape.relu(h2);
        Id virt = tape.topk_weighted_rows(hw, y_used, topk);
        Id w = tape.gather_rows(score_x, out.kept_o2);
        Id src = tape.gather_rows(xp, out.kept_o2);
        TapedTransform<S> inc =
            taped_kabsch(tape, src, virt, w, training ? cfg.svd_jitter : 0.0);

        out.accumulated.rotation = tape.matmul(inc.rotation, out.accumulated.rotation);
        out.accumulated.translation =
            tape.add(tape.matmul(out.accumulated.translation, tape.transpose(inc.rotation)),
                     inc.translation);
        if (iter + 1 < iters) {
            xp = tape.add_row_broadcast(tape.matmul(xp, tape.transpose(inc.rotation)),
                                        inc.translation);
            xnrm = tape.matmul(xnrm, tape.transpose(inc.rotation));
        }
    }
    return out;
}

// ---- full pipeline ----------------------------------------------------------

template <typename S>
struct PipelineForward {
    CgForward<S> cg;
    TapedTransform<S> initial;  // T0 (identity when identity_init)
    TapedTransform<S> final_;   // T = T1 o T0
    std::vector<long> kept_o1, kept_o2;
};

template <typename S>
PipelineForward<S> pipeline_forward(core::Tape<S>& tape, const core::ParamStore<S>& store,
                                    const ModelConfig& cfg, const geom::PointCloud& source,
                                    const geom::PointCloud& target, long iters, double prob,
                                    long topk, bool training, bool identity_init = false,
                                    bool skip_tfmr = false) {
    using Id = typename core::Tape<S>::Id;
    if (source.size() < 1 || target.size() < 1)
        throw Error(Status::Usage, "pipeline: empty cloud");
    if (!source.has_normals() || !target.has_normals())
        throw Error(Status::Usage, "pipeline: clouds must carry normals");

    Id x = tape.leaf(to_tensor<S>(source.points));
    Id y = tape.leaf(to_tensor<S>(target.points));
    Id xn = tape.leaf(to_tensor<S>(*source.normals));
    Id yn = tape.leaf(to_tensor<S>(*target.normals));

    PipelineForward<S> out;
    out.cg = cg_forward(tape, store, static_cast<long>(cfg.enc_widths.size()),
                        static_cast<long>(cfg.init_widths.size()),
                        static_cast<long>(cfg.ov_widths.size()), x, y);
    if (identity_init) {
        core::Tensor<S> eye = core::Tensor<S>::zeros({3, 3});
        eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = S(1);
        out.initial.rotation = tape.leaf(std::move(eye));
        out.initial.translation = tape.leaf(core::Tensor<S>::zeros({1, 3}));
    } else {
        out.initial.rotation = out.cg.rot0;
        out.initial.translation = out.cg.trans0;
    }

    Id xp = tape.add_row_broadcast(tape.matmul(x, tape.transpose(out.initial.rotation)),
                                   out.initial.translation);
    Id xpn = tape.matmul(xn, tape.transpose(out.initial.rotation));

    std::vector<double> score_y_vals;
    const core::Tensor<S>& sy = tape.val(out.cg.score_y);
    for (S v : sy.data) score_y_vals.push_back(static_cast<double>(v));

    RefineResult<S> refined;
    if (skip_tfmr || iters < 1) {
        core::Tensor<S> eye = core::Tensor<S>::zeros({3, 3});
        eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = S(1);
        refined.accumulated.rotation = tape.leaf(std::move(eye));
        refined.accumulated.translation = tape.leaf(core::Tensor<S>::zeros({1, 3}));
    } else {
        refined = tfmr_refine(tape, store, cfg, xp, xpn, y, yn, out.cg.score_x,
                              score_y_vals, iters, prob, topk, training);
    }
    out.kept_o1 = refined.kept_o1;
    out.kept_o2 = refined.kept_o2;

    // R = R1 R0, t = R1 t0 + t1
    out.final_.rotation = tape.matmul(refined.accumulated.rotation, out.initial.rotation);
    out.final_.translation = tape.add(
        tape.matmul(out.initial.translation, tape.transpose(refined.accumulated.rotation)),
        refined.accumulated.translation);
    return out;
}

// ---- losses ------------------------------------------------------------------

template <typename S>
struct LossIds {
    typename core::Tape<S>::Id total, fin, init, overlap;
};

// L_fin = |X R^T - X Rhat^T|_1 + |t - that|_1 (per-entry means by default),
// L_init analogous on (R0, t0), L_ol = mean binary cross-entropy per cloud
// averaged over the two clouds; total = alpha L_fin + beta L_ol + lambda L_init.
template <typename S>
LossIds<S> pipeline_losses(core::Tape<S>& tape, const ModelConfig& cfg,
                           const PipelineForward<S>& fwd, const data::PairSample& sample) {
    using Id = typename core::Tape<S>::Id;
    Id x = tape.leaf(to_tensor<S>(sample.source.points));
    geom::PointMatrix rotated = sample.source.points * sample.gt.rotation.transpose();
    core::Tensor<S> target_rot = to_tensor<S>(rotated);
    core::Tensor<S> target_t = core::Tensor<S>::zeros({1, 3});
    for (int c = 0; c < 3; ++c) target_t.data[static_cast<size_t>(c)] =
        static_cast<S>(sample.gt.translation(c));

    auto transform_loss = [&](const TapedTransform<S>& t) {
        Id moved = tape.matmul(x, tape.transpose(t.rotation));
        Id rot_term = tape.l1_loss(moved, target_rot, cfg.l1_mean);
        Id trans_term = tape.l1_loss(t.translation, target_t, cfg.l1_mean);
        return tape.add(rot_term, trans_term);
    };

    std::vector<double> labels_x(sample.overlap_source.begin(), sample.overlap_source.end());
    std::vector<double> labels_y(sample.overlap_target.begin(), sample.overlap_target.end());

    LossIds<S> out;
    out.fin = transform_loss(fwd.final_);
    out.init = transform_loss(fwd.initial);
    out.overlap = tape.scale(tape.add(tape.bce_mean(fwd.cg.probs_x, labels_x),
                                      tape.bce_mean(fwd.cg.probs_y, labels_y)),
                             S(0.5));
    out.total = tape.add(tape.add(tape.scale(out.fin, static_cast<S>(cfg.alpha)),
                                  tape.scale(out.overlap, static_cast<S>(cfg.beta))),
                         tape.scale(out.init, static_cast<S>(cfg.lambda)));
    return out;
}

// ---- inference ---------------------------------------------------------------

struct RegistrationResult {
    geom::RigidTransform transform;       // final estimate
    geom::RigidTransform init_transform;  // CG initialization
    std::vector<double> score_x, score_y;
    std::vector<long> kept_o2;  // representative source points (global indices)
    bool quat_fallback = false;
};

template <typename S>
RegistrationResult register_pair(const core::ParamStore<S>& store, const ModelConfig& cfg,
                                 const geom::PointCloud& source,
                                 const geom::PointCloud& target, long iters, double prob,
                                 long topk, bool identity_init = false,
                                 bool skip_tfmr = false) {
    core::Tape<S> tape;
    tape.set_grad_enabled(false);
    PipelineForward<S> fwd = pipeline_forward(tape, store, cfg, source, target, iters, prob,
                                              topk, /*training=*/false, identity_init,
                                              skip_tfmr);
    RegistrationResult out;
    auto to_transform = [&](const TapedTransform<S>& t) {
        geom::RigidTransform rt;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                rt.rotation(i, j) = static_cast<double>(tape.val(t.rotation).at(i, j));
            rt.translation(i) =
                static_cast<double>(tape.val(t.translation).data[static_cast<size_t>(i)]);
        }
        return rt;
    };
    out.transform = to_transform(fwd.final_);
    out.init_transform = to_transform(fwd.initial);
    for (S v : tape.val(fwd.cg.score_x).data) out.score_x.push_back(static_cast<double>(v));
    for (S v : tape.val(fwd.cg.score_y).data) out.score_y.push_back(static_cast<double>(v));
    out.kept_o2 = fwd.kept_o2;
    out.quat_fallback = fwd.cg.quat_fallback;
    return out;
}

}  // namespace ropnet::net
