#pragma once

#include <string>
#include <vector>

#include "data/generator.hpp"
#include "net/model.hpp"

namespace ropnet::train {

struct TrainOptions {
    long batch = 8;
    long epochs = 50;
    long steps = 0;  // when > 0, run exactly this many optimizer steps instead
    long workers = 1;
    long ckpt_every = 0;  // epochs between checkpoints; 0 = final only
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long sched_t0 = 40, sched_factor = 2;
    bool sched_per_epoch = true;
    uint64_t seed = 0;

    static TrainOptions from(const RunConfig& rc);
};

struct StepRecord {
    long step;
    double lr, loss_fin, loss_ol, loss_init, loss_total;
};

struct TrainResult {
    std::vector<StepRecord> history;
};

// Mini-batch loop: per-sample forward (CG + train_iters TFMR passes) and
// backward on independent tapes, per-sample gradients reduced as the mean in
// fixed sample order, Adam step, cosine-warm-restart schedule. Deterministic
// under a fixed seed; single-worker mode is the bitwise-reproducibility mode.
// When run_dir is non-empty, appends the loss log (CSV: step, lr, L_fin,
// L_ol, L_init, total) and writes periodic + final checkpoints there.
// Aborts with a diagnostic naming the offending sample on non-finite loss.
TrainResult train(const std::vector<data::PairSample>& dataset,
                  core::ParamStore<float>& store, const net::ModelConfig& model_cfg,
                  const TrainOptions& opt, const std::string& run_dir = "");

}  // namespace ropnet::train
