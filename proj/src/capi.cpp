#include "ropnet/ropnet.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "config.hpp"
#include "core/alloc.hpp"
#include "core/checkpoint.hpp"
#include "data/dataset.hpp"
#include "geom/alignment.hpp"
#include "geom/neighbors.hpp"
#include "train/evaluator.hpp"
#include "train/trainer.hpp"

namespace fs = std::filesystem;

using ropnet::Error;
using ropnet::RunConfig;
using ropnet::Status;

struct ropnet_config {
    RunConfig rc;
    mutable std::string get_buffer;
};

struct ropnet_cloud {
    ropnet::geom::PointCloud cloud;
};

struct ropnet_model {
    ropnet::core::ParamStore<float> store;
    ropnet::net::ModelConfig cfg;
};

namespace {

thread_local std::string g_last_error;

ropnet_status set_error(Status status, const std::string& message) {
    g_last_error = message;
    return static_cast<ropnet_status>(static_cast<int>(status));
}

template <typename Fn>
ropnet_status guarded(Fn&& fn) {
    try {
        fn();
        return ROPNET_OK;
    } catch (const Error& e) {
        return set_error(e.status(), e.what());
    } catch (const std::exception& e) {
        return set_error(Status::Numeric, e.what());
    }
}

ropnet_status require(bool cond, const char* message) {
    if (cond) return ROPNET_OK;
    return set_error(Status::Usage, message);
}

ropnet::geom::RigidTransform from_rt(const double rt[12]) {
    ropnet::geom::RigidTransform t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t.rotation(i, j) = rt[3 * i + j];
    for (int i = 0; i < 3; ++i) t.translation(i) = rt[9 + i];
    return t;
}

void to_rt(const ropnet::geom::RigidTransform& t, double rt[12]) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rt[3 * i + j] = t.rotation(i, j);
    for (int i = 0; i < 3; ++i) rt[9 + i] = t.translation(i);
}

void fill_summary(const ropnet::train::EvalReport& report, ropnet_eval_summary* out) {
    if (!out) return;
    const ropnet::train::EvalSummary& s = report.summary;
    out->count = s.count;
    out->gimbal_excluded = s.gimbal_excluded;
    out->error_r_deg = s.error_r;
    out->error_t = s.error_t;
    out->mae_r_deg = s.mae_r;
    out->mae_t = s.mae_t;
    out->mean_millis = s.mean_millis;
    auto at = [](const std::vector<double>& v, size_t i) {
        return i < v.size() ? v[i] : 0.0;
    };
    out->cg_precision_05 = at(s.cg_precision, 0);
    out->cg_recall_05 = at(s.cg_recall, 0);
    out->cg_precision_07 = at(s.cg_precision, 1);
    out->cg_recall_07 = at(s.cg_recall, 1);
    out->post_precision_05 = at(s.post_precision, 0);
    out->post_recall_05 = at(s.post_recall, 0);
    out->post_precision_07 = at(s.post_precision, 1);
    out->post_recall_07 = at(s.post_recall, 1);
}

void check_model_matches(const ropnet::core::ParamStore<float>& loaded,
                         const ropnet::net::ModelConfig& cfg) {
    ropnet::core::ParamStore<float> expected;
    ropnet::net::init_params(expected, cfg);
    if (loaded.entries().size() != expected.entries().size())
        throw Error(Status::Data, "checkpoint does not match the configured architecture");
    for (const auto& [name, e] : expected.entries()) {
        auto it = loaded.entries().find(name);
        if (it == loaded.entries().end() || it->second.value.shape != e.value.shape)
            throw Error(Status::Data,
                        "checkpoint does not match the configured architecture (" + name +
                            ")");
    }
}

}  // namespace

extern "C" {

const char* ropnet_version(void) { return "1.0.0"; }

const char* ropnet_last_error(void) { return g_last_error.c_str(); }

/* ---- config ---- */

ropnet_config* ropnet_config_new(void) { return new ropnet_config(); }

void ropnet_config_free(ropnet_config* cfg) { delete cfg; }

ropnet_status ropnet_config_set(ropnet_config* cfg, const char* key, const char* value) {
    if (ropnet_status s = require(cfg && key && value, "null argument")) return s;
    return guarded([&] { cfg->rc.set(key, value); });
}

const char* ropnet_config_get(const ropnet_config* cfg, const char* key) {
    if (!cfg || !key || !cfg->rc.has(key)) return nullptr;
    cfg->get_buffer = cfg->rc.get(key);
    return cfg->get_buffer.c_str();
}

ropnet_status ropnet_config_load(ropnet_config* cfg, const char* path) {
    if (ropnet_status s = require(cfg && path, "null argument")) return s;
    return guarded([&] { cfg->rc.load_file(path); });
}

ropnet_status ropnet_config_save(const ropnet_config* cfg, const char* path) {
    if (ropnet_status s = require(cfg && path, "null argument")) return s;
    return guarded([&] { cfg->rc.save_file(path); });
}

ropnet_status ropnet_config_apply_env(ropnet_config* cfg) {
    if (ropnet_status s = require(cfg != nullptr, "null argument")) return s;
    return guarded([&] { cfg->rc.apply_env_overrides(); });
}

/* ---- clouds ---- */

ropnet_cloud* ropnet_cloud_new(const double* xyz, size_t count, const double* normals) {
    if (!xyz || count == 0) return nullptr;
    auto* c = new ropnet_cloud();
    c->cloud.points.resize(static_cast<long>(count), 3);
    std::memcpy(c->cloud.points.data(), xyz, count * 3 * sizeof(double));
    if (normals) {
        ropnet::geom::PointMatrix n(static_cast<long>(count), 3);
        std::memcpy(n.data(), normals, count * 3 * sizeof(double));
        c->cloud.normals = std::move(n);
    }
    return c;
}

void ropnet_cloud_free(ropnet_cloud* cloud) { delete cloud; }

size_t ropnet_cloud_size(const ropnet_cloud* cloud) {
    return cloud ? static_cast<size_t>(cloud->cloud.size()) : 0;
}

const double* ropnet_cloud_points(const ropnet_cloud* cloud) {
    return cloud ? cloud->cloud.points.data() : nullptr;
}

const double* ropnet_cloud_normals(const ropnet_cloud* cloud) {
    return cloud && cloud->cloud.normals ? cloud->cloud.normals->data() : nullptr;
}

ropnet_status ropnet_cloud_load(const char* path, ropnet_cloud** out) {
    if (ropnet_status s = require(path && out, "null argument")) return s;
    return guarded([&] {
        auto* c = new ropnet_cloud();
        try {
            c->cloud = ropnet::geom::load_cloud(path);
        } catch (...) {
            delete c;
            throw;
        }
        *out = c;
    });
}

ropnet_status ropnet_cloud_save(const ropnet_cloud* cloud, const char* path, int binary) {
    if (ropnet_status s = require(cloud && path, "null argument")) return s;
    return guarded([&] {
        if (binary)
            ropnet::geom::save_cloud_binary(cloud->cloud, path);
        else
            ropnet::geom::save_cloud_ascii(cloud->cloud, path);
    });
}

ropnet_status ropnet_cloud_estimate_normals(ropnet_cloud* cloud, int k) {
    if (ropnet_status s = require(cloud != nullptr, "null argument")) return s;
    return guarded(
        [&] { cloud->cloud.normals = ropnet::geom::estimate_normals(cloud->cloud.points, k); });
}

ropnet_status ropnet_cloud_transform(ropnet_cloud* cloud, const double rt[12]) {
    if (ropnet_status s = require(cloud && rt, "null argument")) return s;
    return guarded([&] { cloud->cloud = ropnet::geom::apply_transform(from_rt(rt), cloud->cloud); });
}

/* ---- dataset ---- */

ropnet_status ropnet_generate_dataset(const ropnet_config* cfg, const char* out_dir,
                                      long num_samples) {
    if (ropnet_status s = require(cfg && out_dir, "null argument")) return s;
    return guarded([&] {
        ropnet::data::write_dataset(out_dir, ropnet::data::make_gen_config(cfg->rc),
                                    num_samples);
        // the dataset records the fully-resolved configuration
        cfg->rc.save_file((fs::path(out_dir) / "config.txt").string());
    });
}

/* ---- model ---- */

ropnet_status ropnet_model_new(const ropnet_config* cfg, ropnet_model** out) {
    if (ropnet_status s = require(cfg && out, "null argument")) return s;
    return guarded([&] {
        auto* m = new ropnet_model();
        try {
            m->cfg = ropnet::net::ModelConfig::from(cfg->rc);
            ropnet::net::init_params(m->store, m->cfg);
        } catch (...) {
            delete m;
            throw;
        }
        *out = m;
    });
}

void ropnet_model_free(ropnet_model* model) { delete model; }

ropnet_status ropnet_model_load(const char* checkpoint_path, const ropnet_config* cfg,
                                ropnet_model** out) {
    if (ropnet_status s = require(checkpoint_path && cfg && out, "null argument")) return s;
    return guarded([&] {
        auto* m = new ropnet_model();
        try {
            m->cfg = ropnet::net::ModelConfig::from(cfg->rc);
            ropnet::core::load_checkpoint(m->store, checkpoint_path);
            check_model_matches(m->store, m->cfg);
        } catch (...) {
            delete m;
            throw;
        }
        *out = m;
    });
}

ropnet_status ropnet_model_save(const ropnet_model* model, const char* checkpoint_path) {
    if (ropnet_status s = require(model && checkpoint_path, "null argument")) return s;
    return guarded([&] { ropnet::core::save_checkpoint(model->store, checkpoint_path); });
}

/* ---- training and evaluation ---- */

ropnet_status ropnet_train(ropnet_model* model, const ropnet_config* cfg,
                           const char* data_dir, const char* run_dir) {
    if (ropnet_status s = require(model && cfg && data_dir && run_dir, "null argument"))
        return s;
    return guarded([&] {
        auto dataset = ropnet::data::load_dataset(data_dir);
        auto opt = ropnet::train::TrainOptions::from(cfg->rc);
        fs::create_directories(run_dir);
        cfg->rc.save_file((fs::path(run_dir) / "config.txt").string());
        ropnet::train::train(dataset, model->store, model->cfg, opt, run_dir);
    });
}

ropnet_status ropnet_evaluate(ropnet_model* model, const ropnet_config* cfg,
                              const char* data_dir, const char* out_dir, int with_icp,
                              int oracle_gt, ropnet_eval_summary* out_summary,
                              ropnet_eval_summary* out_icp_summary) {
    if (ropnet_status s = require(model && cfg && data_dir, "null argument")) return s;
    return guarded([&] {
        auto dataset = ropnet::data::load_dataset(data_dir);
        auto opt = ropnet::train::EvalOptions::from(cfg->rc);
        opt.oracle_gt = oracle_gt != 0;
        ropnet::train::EvalReport report =
            ropnet::train::evaluate(dataset, model->store, model->cfg, opt);
        ropnet::train::EvalReport icp_report;
        if (with_icp) icp_report = ropnet::train::evaluate_icp(dataset);
        if (out_dir && out_dir[0]) {
            fs::create_directories(out_dir);
            cfg->rc.save_file((fs::path(out_dir) / "config.txt").string());
            ropnet::train::write_eval_csv(report,
                                          (fs::path(out_dir) / "eval_samples.csv").string());
            if (with_icp)
                ropnet::train::write_eval_csv(
                    icp_report, (fs::path(out_dir) / "icp_samples.csv").string(),
                    /*with_overlap=*/false);
            ropnet::train::write_eval_json(report,
                                           (fs::path(out_dir) / "eval_summary.json").string(),
                                           with_icp ? &icp_report : nullptr);
        }
        fill_summary(report, out_summary);
        if (with_icp) fill_summary(icp_report, out_icp_summary);
    });
}

/* ---- single-pair registration ---- */

ropnet_status ropnet_register_pair(ropnet_model* model, const ropnet_config* cfg,
                                   const ropnet_cloud* source, const ropnet_cloud* target,
                                   int iters, int identity_init, int skip_tfmr,
                                   double rt_out[12]) {
    if (ropnet_status s = require(model && cfg && source && target && rt_out, "null argument"))
        return s;
    return guarded([&] {
        ropnet::core::tune_allocator_for_tensors();
        long use_iters = iters >= 0 ? iters : cfg->rc.get_long("test_iters");
        ropnet::net::RegistrationResult reg = ropnet::net::register_pair(
            model->store, model->cfg, source->cloud, target->cloud, use_iters,
            cfg->rc.get_double("prob_test"), cfg->rc.get_long("k_test"),
            identity_init != 0, skip_tfmr != 0);
        to_rt(reg.transform, rt_out);
    });
}

ropnet_status ropnet_icp(const ropnet_cloud* source, const ropnet_cloud* target,
                         int max_iter, double tol, double rt_out[12]) {
    if (ropnet_status s = require(source && target && rt_out, "null argument")) return s;
    return guarded([&] {
        ropnet::geom::IcpResult r =
            ropnet::geom::icp(source->cloud.points, target->cloud.points, max_iter, tol);
        to_rt(r.transform, rt_out);
    });
}

ropnet_status ropnet_transform_errors(const double rt_pred[12], const double rt_gt[12],
                                      double* error_r_deg, double* error_t,
                                      double* mae_r_deg, double* mae_t, int* gimbal) {
    if (ropnet_status s = require(rt_pred && rt_gt, "null argument")) return s;
    return guarded([&] {
        ropnet::geom::RigidTransform pred = from_rt(rt_pred);
        ropnet::geom::RigidTransform gt = from_rt(rt_gt);
        if (error_r_deg)
            *error_r_deg = ropnet::train::error_rotation_deg(pred.rotation, gt.rotation);
        if (error_t)
            *error_t = ropnet::train::error_translation(gt.rotation, pred.translation,
                                                        gt.translation);
        auto mae = ropnet::train::mae_rotation_deg(pred.rotation, gt.rotation);
        if (mae_r_deg) *mae_r_deg = mae.value_or(0.0);
        if (gimbal) *gimbal = mae ? 0 : 1;
        if (mae_t)
            *mae_t = ropnet::train::mae_translation(pred.translation, gt.translation);
    });
}

/* ---- sweep ---- */

ropnet_status ropnet_sweep(ropnet_model* model, const ropnet_config* cfg,
                           const char* data_dir, const char* knob, const char* values_csv,
                           const char* out_csv) {
    if (ropnet_status s =
            require(model && cfg && data_dir && knob && values_csv && out_csv,
                    "null argument"))
        return s;
    return guarded([&] {
        std::string k(knob);
        if (k != "iters" && k != "n1" && k != "prob" && k != "topk" && k != "m1")
            throw Error(Status::Usage, "unknown sweep knob: " + k);
        auto dataset = ropnet::data::load_dataset(data_dir);
        std::FILE* f = std::fopen(out_csv, "w");
        if (!f) throw Error(Status::Data, std::string("cannot write sweep csv: ") + out_csv);
        std::fprintf(f, "knob,value,error_r,error_t\n");
        std::stringstream ss(values_csv);
        std::string tok;
        try {
            while (std::getline(ss, tok, ',')) {
                if (tok.empty()) continue;
                ropnet::train::EvalOptions opt = ropnet::train::EvalOptions::from(cfg->rc);
                ropnet::net::ModelConfig mcfg = model->cfg;
                if (k == "iters") opt.iters = std::stol(tok);
                else if (k == "prob") opt.prob = std::stod(tok);
                else if (k == "topk") opt.topk = std::stol(tok);
                else if (k == "n1") mcfg.n1 = std::stol(tok);
                else mcfg.m1 = std::stol(tok);
                ropnet::train::EvalReport report =
                    ropnet::train::evaluate(dataset, model->store, mcfg, opt);
                std::fprintf(f, "%s,%s,%.10g,%.10g\n", k.c_str(), tok.c_str(),
                             report.summary.error_r, report.summary.error_t);
            }
        } catch (const std::logic_error&) {
            std::fclose(f);
            throw Error(Status::Usage, "sweep values must be numeric");
        } catch (...) {
            std::fclose(f);
            throw;
        }
        std::fclose(f);
    });
}

}  // extern "C"
