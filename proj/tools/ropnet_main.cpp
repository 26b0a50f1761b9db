// ropnet command-line interface. Talks to the library exclusively through
// the public C API. Exit codes: 0 success, 1 usage, 2 data, 3 numeric.

#include <cstdio>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ropnet/ropnet.h"

namespace {

struct ConfigDeleter {
    void operator()(ropnet_config* c) const { ropnet_config_free(c); }
};
struct CloudDeleter {
    void operator()(ropnet_cloud* c) const { ropnet_cloud_free(c); }
};
struct ModelDeleter {
    void operator()(ropnet_model* m) const { ropnet_model_free(m); }
};
using ConfigPtr = std::unique_ptr<ropnet_config, ConfigDeleter>;
using CloudPtr = std::unique_ptr<ropnet_cloud, CloudDeleter>;
using ModelPtr = std::unique_ptr<ropnet_model, ModelDeleter>;

[[noreturn]] void fail(ropnet_status status) {
    std::fprintf(stderr, "error: %s\n", ropnet_last_error());
    std::exit(static_cast<int>(status));
}

void check(ropnet_status status) {
    if (status != ROPNET_OK) fail(status);
}

// Common config plumbing: --config file, repeatable --opt key=value, then
// per-command flags applied on top, then environment overrides.
struct ConfigArgs {
    std::string config_file;
    std::vector<std::string> opts;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "config file (key=value lines)");
        cmd->add_option("--opt", opts, "config override key=value (repeatable)");
    }

    ConfigPtr resolve() const {
        ConfigPtr cfg(ropnet_config_new());
        if (!config_file.empty()) check(ropnet_config_load(cfg.get(), config_file.c_str()));
        for (const std::string& kv : opts) {
            size_t eq = kv.find('=');
            if (eq == std::string::npos) {
                std::fprintf(stderr, "error: --opt expects key=value, got '%s'\n",
                             kv.c_str());
                std::exit(1);
            }
            check(ropnet_config_set(cfg.get(), kv.substr(0, eq).c_str(),
                                    kv.substr(eq + 1).c_str()));
        }
        return cfg;
    }
};

void set_long(ropnet_config* cfg, const char* key, long v) {
    check(ropnet_config_set(cfg, key, std::to_string(v).c_str()));
}

void set_double(ropnet_config* cfg, const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    check(ropnet_config_set(cfg, key, buf));
}

CloudPtr load_cloud_with_normals(const std::string& path, ropnet_config* cfg) {
    ropnet_cloud* raw = nullptr;
    check(ropnet_cloud_load(path.c_str(), &raw));
    CloudPtr cloud(raw);
    if (!ropnet_cloud_normals(cloud.get())) {
        long k = std::stol(ropnet_config_get(cfg, "normals_k"));
        check(ropnet_cloud_estimate_normals(cloud.get(), static_cast<int>(k)));
    }
    return cloud;
}

ModelPtr make_model(const std::string& checkpoint, ropnet_config* cfg) {
    ropnet_model* raw = nullptr;
    if (checkpoint.empty())
        check(ropnet_model_new(cfg, &raw));
    else
        check(ropnet_model_load(checkpoint.c_str(), cfg, &raw));
    return ModelPtr(raw);
}

bool parse_rt(const std::string& text, double rt[12]) {
    std::string normalized = text;
    for (char& c : normalized)
        if (c == ',') c = ' ';
    std::istringstream ss(normalized);
    for (int i = 0; i < 12; ++i)
        if (!(ss >> rt[i])) return false;
    return true;
}

void print_transform(const double rt[12]) {
    for (int i = 0; i < 3; ++i)
        std::printf("% .9f % .9f % .9f % .9f\n", rt[3 * i], rt[3 * i + 1], rt[3 * i + 2],
                    rt[9 + i]);
}

void print_errors_against(const double rt[12], const std::string& gt_text) {
    double gt[12];
    if (!parse_rt(gt_text, gt)) {
        std::fprintf(stderr, "error: --gt expects 12 numbers (row-major R then t)\n");
        std::exit(1);
    }
    double er, et, maer, maet;
    int gimbal;
    check(ropnet_transform_errors(rt, gt, &er, &et, &maer, &maet, &gimbal));
    std::printf("error_r_deg %.6f\nerror_t %.6f\n", er, et);
    if (gimbal)
        std::printf("mae_r_deg n/a (gimbal)\n");
    else
        std::printf("mae_r_deg %.6f\n", maer);
    std::printf("mae_t %.6f\n", maet);
}

void print_summary(const char* tag, const ropnet_eval_summary& s) {
    std::printf("%s: n=%ld error_r=%.4f error_t=%.4f mae_r=%.4f mae_t=%.4f", tag, s.count,
                s.error_r_deg, s.error_t, s.mae_r_deg, s.mae_t);
    if (s.gimbal_excluded) std::printf(" (gimbal_excluded=%ld)", s.gimbal_excluded);
    std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ropnet: partial-to-partial point cloud registration"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "generate a synthetic pair dataset");
    ConfigArgs gen_cfg;
    gen_cfg.attach(gen);
    std::string gen_out;
    long gen_num = 100;
    long gen_seed = -1;
    std::string gen_noise;
    bool gen_no_noise = false, gen_single = false;
    double gen_keep = -1.0;
    std::string gen_categories;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--num", gen_num, "number of sample pairs");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--noise", gen_noise, "on|off")->check(CLI::IsMember({"on", "off"}));
    gen->add_flag("--no-noise", gen_no_noise, "disable coordinate noise");
    gen->add_option("--keep-ratio", gen_keep, "crop keep ratio in (0,1]");
    gen->add_option("--categories", gen_categories, "comma-separated shape categories");
    gen->add_flag("--single-sample", gen_single,
                  "reuse the source draw for the target (complete overlap)");

    // train
    auto* train = app.add_subcommand("train", "train on a generated dataset");
    ConfigArgs train_cfg;
    train_cfg.attach(train);
    std::string train_data, train_out, train_resume;
    long train_epochs = -1, train_steps = -1, train_batch = -1, train_workers = -1;
    long train_seed = -1;
    double train_lr = -1.0;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "run directory")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--steps", train_steps, "exact optimizer steps (overrides epochs)");
    train->add_option("--batch", train_batch, "mini-batch size");
    train->add_option("--workers", train_workers, "parallel per-sample workers");
    train->add_option("--lr", train_lr, "base learning rate");
    train->add_option("--seed", train_seed, "seed (model init and batch order)");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ConfigArgs eval_cfg;
    eval_cfg.attach(eval);
    std::string eval_data, eval_ckpt, eval_out;
    bool eval_icp = false, eval_oracle = false;
    long eval_workers = -1, eval_iters = -1;
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
    eval->add_option("--out", eval_out, "report directory");
    eval->add_flag("--icp", eval_icp, "also run the ICP baseline");
    eval->add_flag("--oracle-gt", eval_oracle,
                   "evaluate ground-truth transforms as predictions");
    eval->add_option("--workers", eval_workers, "parallel workers");
    eval->add_option("--iters", eval_iters, "TFMR iterations");

    // register
    auto* reg = app.add_subcommand("register", "register one source/target pair");
    ConfigArgs reg_cfg;
    reg_cfg.attach(reg);
    std::string reg_src, reg_dst, reg_ckpt, reg_out, reg_gt;
    long reg_iters = -1;
    bool reg_identity = false, reg_skip = false;
    reg->add_option("--source", reg_src, "source cloud file")->required();
    reg->add_option("--target", reg_dst, "target cloud file")->required();
    reg->add_option("--checkpoint", reg_ckpt, "model checkpoint");
    reg->add_option("--out", reg_out, "write the aligned source cloud here");
    reg->add_option("--gt", reg_gt, "ground truth (12 numbers) for error reporting");
    reg->add_option("--iters", reg_iters, "TFMR iterations");
    reg->add_flag("--identity-init", reg_identity, "skip the CG initialization");
    reg->add_flag("--skip-tfmr", reg_skip, "skip TFMR refinement");

    // icp
    auto* icp = app.add_subcommand("icp", "point-to-point ICP baseline");
    ConfigArgs icp_cfg;
    icp_cfg.attach(icp);
    std::string icp_src, icp_dst, icp_out, icp_gt;
    long icp_max_iter = 50;
    double icp_tol = 1e-6;
    icp->add_option("--source", icp_src, "source cloud file")->required();
    icp->add_option("--target", icp_dst, "target cloud file")->required();
    icp->add_option("--out", icp_out, "write the aligned source cloud here");
    icp->add_option("--gt", icp_gt, "ground truth (12 numbers) for error reporting");
    icp->add_option("--max-iter", icp_max_iter, "iteration cap");
    icp->add_option("--tol", icp_tol, "convergence tolerance");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "evaluate a knob over a value list");
    ConfigArgs sweep_cfg;
    sweep_cfg.attach(sweep);
    std::string sweep_data, sweep_ckpt, sweep_knob, sweep_values, sweep_out;
    sweep->add_option("--data", sweep_data, "dataset directory")->required();
    sweep->add_option("--checkpoint", sweep_ckpt, "model checkpoint")->required();
    sweep->add_option("--knob", sweep_knob, "iters|n1|prob|topk|m1")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--out", sweep_out, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        ConfigPtr cfg = gen_cfg.resolve();
        if (gen_seed >= 0) set_long(cfg.get(), "seed", gen_seed);
        if (!gen_noise.empty()) check(ropnet_config_set(cfg.get(), "noise", gen_noise.c_str()));
        if (gen_no_noise) check(ropnet_config_set(cfg.get(), "noise", "off"));
        if (gen_keep > 0) set_double(cfg.get(), "keep_ratio", gen_keep);
        if (!gen_categories.empty())
            check(ropnet_config_set(cfg.get(), "categories", gen_categories.c_str()));
        if (gen_single) check(ropnet_config_set(cfg.get(), "single_sample", "on"));
        check(ropnet_config_apply_env(cfg.get()));
        check(ropnet_generate_dataset(cfg.get(), gen_out.c_str(), gen_num));
        std::printf("wrote %ld pairs to %s\n", gen_num, gen_out.c_str());
        return 0;
    }

    if (train->parsed()) {
        ConfigPtr cfg = train_cfg.resolve();
        if (train_epochs >= 0) set_long(cfg.get(), "epochs", train_epochs);
        if (train_steps >= 0) set_long(cfg.get(), "steps", train_steps);
        if (train_batch >= 0) set_long(cfg.get(), "batch", train_batch);
        if (train_workers >= 0) set_long(cfg.get(), "workers", train_workers);
        if (train_lr > 0) set_double(cfg.get(), "lr", train_lr);
        if (train_seed >= 0) set_long(cfg.get(), "seed", train_seed);
        check(ropnet_config_apply_env(cfg.get()));
        ModelPtr model = make_model(train_resume, cfg.get());
        check(ropnet_train(model.get(), cfg.get(), train_data.c_str(), train_out.c_str()));
        std::printf("checkpoint written to %s/checkpoint.ropnet\n", train_out.c_str());
        return 0;
    }

    if (eval->parsed()) {
        ConfigPtr cfg = eval_cfg.resolve();
        if (eval_workers >= 0) set_long(cfg.get(), "workers", eval_workers);
        if (eval_iters >= 0) set_long(cfg.get(), "test_iters", eval_iters);
        check(ropnet_config_apply_env(cfg.get()));
        if (eval_ckpt.empty() && !eval_oracle) {
            std::fprintf(stderr, "error: eval needs --checkpoint (or --oracle-gt)\n");
            return 1;
        }
        ModelPtr model = make_model(eval_ckpt, cfg.get());
        ropnet_eval_summary summary{}, icp_summary{};
        check(ropnet_evaluate(model.get(), cfg.get(), eval_data.c_str(),
                              eval_out.empty() ? nullptr : eval_out.c_str(),
                              eval_icp ? 1 : 0, eval_oracle ? 1 : 0, &summary,
                              &icp_summary));
        print_summary("ropnet", summary);
        std::printf("  overlap@0.05 cg_p=%.3f cg_r=%.3f post_p=%.3f post_r=%.3f\n",
                    summary.cg_precision_05, summary.cg_recall_05,
                    summary.post_precision_05, summary.post_recall_05);
        if (eval_icp) print_summary("icp", icp_summary);
        return 0;
    }

    if (reg->parsed()) {
        ConfigPtr cfg = reg_cfg.resolve();
        check(ropnet_config_apply_env(cfg.get()));
        CloudPtr src = load_cloud_with_normals(reg_src, cfg.get());
        CloudPtr dst = load_cloud_with_normals(reg_dst, cfg.get());
        ModelPtr model = make_model(reg_ckpt, cfg.get());
        double rt[12];
        check(ropnet_register_pair(model.get(), cfg.get(), src.get(), dst.get(),
                                   static_cast<int>(reg_iters), reg_identity ? 1 : 0,
                                   reg_skip ? 1 : 0, rt));
        print_transform(rt);
        if (!reg_gt.empty()) print_errors_against(rt, reg_gt);
        if (!reg_out.empty()) {
            check(ropnet_cloud_transform(src.get(), rt));
            check(ropnet_cloud_save(src.get(), reg_out.c_str(), 0));
        }
        return 0;
    }

    if (icp->parsed()) {
        ConfigPtr cfg = icp_cfg.resolve();
        CloudPtr src = load_cloud_with_normals(icp_src, cfg.get());
        CloudPtr dst = load_cloud_with_normals(icp_dst, cfg.get());
        double rt[12];
        check(ropnet_icp(src.get(), dst.get(), static_cast<int>(icp_max_iter), icp_tol, rt));
        print_transform(rt);
        if (!icp_gt.empty()) print_errors_against(rt, icp_gt);
        if (!icp_out.empty()) {
            check(ropnet_cloud_transform(src.get(), rt));
            check(ropnet_cloud_save(src.get(), icp_out.c_str(), 0));
        }
        return 0;
    }

    if (sweep->parsed()) {
        ConfigPtr cfg = sweep_cfg.resolve();
        check(ropnet_config_apply_env(cfg.get()));
        ModelPtr model = make_model(sweep_ckpt, cfg.get());
        check(ropnet_sweep(model.get(), cfg.get(), sweep_data.c_str(), sweep_knob.c_str(),
                           sweep_values.c_str(), sweep_out.c_str()));
        std::printf("sweep written to %s\n", sweep_out.c_str());
        return 0;
    }

    return 1;
}
