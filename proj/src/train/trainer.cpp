#include "train/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <thread>

#include "core/alloc.hpp"
#include "core/checkpoint.hpp"
#include "core/schedule.hpp"

namespace fs = std::filesystem;

namespace ropnet::train {

TrainOptions TrainOptions::from(const RunConfig& rc) {
    TrainOptions o;
    o.batch = rc.get_long("batch");
    o.epochs = rc.get_long("epochs");
    o.steps = rc.get_long("steps");
    o.workers = rc.get_long("workers");
    o.ckpt_every = rc.get_long("ckpt_every");
    o.lr = rc.get_double("lr");
    o.beta1 = rc.get_double("adam_beta1");
    o.beta2 = rc.get_double("adam_beta2");
    o.adam_eps = rc.get_double("adam_eps");
    o.sched_t0 = rc.get_long("sched_t0");
    o.sched_factor = rc.get_long("sched_factor");
    o.sched_per_epoch = rc.get("sched_unit") == "epoch";
    o.seed = static_cast<uint64_t>(std::stoull(rc.get("seed")));
    if (o.batch < 1 || o.workers < 1)
        throw Error(Status::Usage, "batch and workers must be positive");
    return o;
}

namespace {

struct SampleGrads {
    std::map<std::string, core::Tensor<float>> grads;
    double fin = 0, ol = 0, init = 0, total = 0;
    bool finite = true;
};

SampleGrads run_sample(const data::PairSample& sample, const core::ParamStore<float>& store,
                       const net::ModelConfig& cfg) {
    core::Tape<float> tape;
    net::PipelineForward<float> fwd =
        net::pipeline_forward(tape, store, cfg, sample.source, sample.target,
                              cfg.train_iters, cfg.prob_train, cfg.k_train,
                              /*training=*/true);
    net::LossIds<float> losses = net::pipeline_losses(tape, cfg, fwd, sample);
    SampleGrads out;
    out.fin = tape.val(losses.fin).scalar_value();
    out.ol = tape.val(losses.overlap).scalar_value();
    out.init = tape.val(losses.init).scalar_value();
    out.total = tape.val(losses.total).scalar_value();
    if (!std::isfinite(out.total)) {
        out.finite = false;
        return out;
    }
    tape.backward(losses.total);
    for (const auto& [name, id] : tape.param_ids()) {
        if (!tape.has_grad(id)) continue;
        auto it = out.grads.find(name);
        if (it == out.grads.end()) {
            out.grads.emplace(name, tape.grad(id));
        } else {
            const auto& g = tape.grad(id);
            for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
        }
    }
    return out;
}

}  // namespace

TrainResult train(const std::vector<data::PairSample>& dataset,
                  core::ParamStore<float>& store, const net::ModelConfig& model_cfg,
                  const TrainOptions& opt, const std::string& run_dir) {
    if (dataset.empty()) throw Error(Status::Data, "train: empty dataset");
    model_cfg.validate();
    core::tune_allocator_for_tensors();

    long n = static_cast<long>(dataset.size());
    long steps_per_epoch = (n + opt.batch - 1) / opt.batch;
    long start_step = store.step();
    long end_step = opt.steps > 0 ? start_step + opt.steps : opt.epochs * steps_per_epoch;

    std::FILE* log = nullptr;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        std::string log_path = (fs::path(run_dir) / "loss_log.csv").string();
        bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
        log = std::fopen(log_path.c_str(), "a");
        if (!log) throw Error(Status::Data, "cannot open loss log in " + run_dir);
        if (fresh) std::fprintf(log, "step,lr,loss_fin,loss_ol,loss_init,loss_total\n");
    }

    TrainResult result;
    std::vector<long> order(static_cast<size_t>(n));
    long cached_epoch = -1;

    for (long step = start_step; step < end_step; ++step) {
        long epoch = step / steps_per_epoch;
        long pos = (step % steps_per_epoch) * opt.batch;
        if (epoch != cached_epoch) {
            // Batch composition is a pure function of (seed, epoch), so
            // resuming from a checkpoint replays the identical stream.
            for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            core::Rng perm(core::derive_seed(opt.seed ^ 0x5348554646ULL,
                                             static_cast<uint64_t>(epoch)));
            for (long i = n - 1; i > 0; --i)
                std::swap(order[static_cast<size_t>(i)],
                          order[static_cast<size_t>(perm.uniform_index(i + 1))]);
            cached_epoch = epoch;
        }
        long batch_count = std::min(opt.batch, n - pos);
        std::vector<SampleGrads> results(static_cast<size_t>(batch_count));

        long workers = std::min(opt.workers, batch_count);
        if (workers <= 1) {
            for (long b = 0; b < batch_count; ++b)
                results[static_cast<size_t>(b)] =
                    run_sample(dataset[static_cast<size_t>(order[static_cast<size_t>(pos + b)])],
                               store, model_cfg);
        } else {
            std::vector<std::thread> pool;
            for (long w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (long b = w; b < batch_count; b += workers)
                        results[static_cast<size_t>(b)] = run_sample(
                            dataset[static_cast<size_t>(order[static_cast<size_t>(pos + b)])],
                            store, model_cfg);
                });
            }
            for (auto& t : pool) t.join();
        }

        StepRecord rec{step, 0, 0, 0, 0, 0};
        for (long b = 0; b < batch_count; ++b) {
            const SampleGrads& r = results[static_cast<size_t>(b)];
            if (!r.finite) {
                if (log) std::fclose(log);
                throw Error(Status::Numeric,
                            "non-finite loss at step " + std::to_string(step) +
                                ", sample id " +
                                std::to_string(
                                    dataset[static_cast<size_t>(
                                                order[static_cast<size_t>(pos + b)])]
                                        .id));
            }
            rec.loss_fin += r.fin;
            rec.loss_ol += r.ol;
            rec.loss_init += r.init;
            rec.loss_total += r.total;
        }
        rec.loss_fin /= batch_count;
        rec.loss_ol /= batch_count;
        rec.loss_init /= batch_count;
        rec.loss_total /= batch_count;

        // Fixed-order mean reduction keeps multi-worker runs deterministic.
        store.zero_grads();
        float inv = 1.0f / static_cast<float>(batch_count);
        for (auto& [name, entry] : store.entries()) {
            for (long b = 0; b < batch_count; ++b) {
                auto it = results[static_cast<size_t>(b)].grads.find(name);
                if (it == results[static_cast<size_t>(b)].grads.end()) continue;
                for (size_t i = 0; i < entry.grad.data.size(); ++i)
                    entry.grad.data[i] += it->second.data[i] * inv;
            }
        }

        rec.lr = core::cosine_warm_restart_lr(opt.sched_per_epoch ? epoch : step, opt.lr,
                                              opt.sched_t0, opt.sched_factor);
        store.adam_step(rec.lr, opt.beta1, opt.beta2, opt.adam_eps);

        if (log)
            std::fprintf(log, "%ld,%.10g,%.10g,%.10g,%.10g,%.10g\n", rec.step, rec.lr,
                         rec.loss_fin, rec.loss_ol, rec.loss_init, rec.loss_total);
        result.history.push_back(rec);

        bool epoch_end = (step + 1) % steps_per_epoch == 0;
        if (!run_dir.empty() && opt.ckpt_every > 0 && epoch_end &&
            ((epoch + 1) % opt.ckpt_every == 0)) {
            core::save_checkpoint(store,
                                  (fs::path(run_dir) / ("checkpoint_epoch" +
                                                        std::to_string(epoch + 1) +
                                                        ".ropnet"))
                                      .string());
        }
    }
    if (log) std::fclose(log);
    if (!run_dir.empty())
        core::save_checkpoint(store, (fs::path(run_dir) / "checkpoint.ropnet").string());
    return result;
}

}  // namespace ropnet::train
