#include "train/evaluator.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "core/alloc.hpp"
#include "geom/alignment.hpp"

namespace ropnet::train {

EvalOptions EvalOptions::from(const RunConfig& rc) {
    EvalOptions o;
    o.iters = rc.get_long("test_iters");
    o.prob = rc.get_double("prob_test");
    o.topk = rc.get_long("k_test");
    o.workers = rc.get_long("workers");
    o.score_cut = rc.get_double("score_cut");
    return o;
}

namespace {

SampleEval eval_one(const data::PairSample& sample, const core::ParamStore<float>& store,
                    const net::ModelConfig& cfg, const EvalOptions& opt) {
    SampleEval row;
    row.id = sample.id;
    row.category = sample.category;

    geom::RigidTransform pred;
    std::vector<int> cg_predicted(static_cast<size_t>(sample.source.size()), 0);
    std::vector<long> kept;
    if (opt.oracle_gt) {
        pred = sample.gt;
        for (size_t i = 0; i < sample.overlap_source.size(); ++i)
            if (sample.overlap_source[i]) {
                cg_predicted[i] = 1;
                kept.push_back(static_cast<long>(i));
            }
    } else {
        auto t0 = std::chrono::steady_clock::now();
        net::RegistrationResult reg = net::register_pair(
            store, cfg, sample.source, sample.target, opt.iters, opt.prob, opt.topk);
        auto t1 = std::chrono::steady_clock::now();
        row.millis = std::chrono::duration<double, std::milli>(t1 - t0).count();
        pred = reg.transform;
        for (size_t i = 0; i < reg.score_x.size(); ++i)
            cg_predicted[i] = reg.score_x[i] >= opt.score_cut ? 1 : 0;
        kept = reg.kept_o2;
        if (opt.iters < 1) kept.clear();
    }

    row.error_r = error_rotation_deg(pred.rotation, sample.gt.rotation);
    row.error_t = error_translation(sample.gt.rotation, pred.translation,
                                    sample.gt.translation);
    row.mae_r = mae_rotation_deg(pred.rotation, sample.gt.rotation);
    row.mae_t = mae_translation(pred.translation, sample.gt.translation);

    for (double d : opt.pr_thresholds) {
        std::vector<int> labels =
            data::overlap_labels(sample.source.points, sample.target.points, sample.gt, d);
        row.cg_pr.push_back(overlap_pr(cg_predicted, labels));
        row.post_pr.push_back(kept.empty()
                                  ? PrecisionRecall{0.0, 0.0, true}
                                  : overlap_pr_from_indices(kept, sample.source.size(),
                                                            labels));
    }
    return row;
}

EvalSummary summarize(const std::vector<SampleEval>& rows, size_t n_thresholds) {
    EvalSummary s;
    s.count = static_cast<long>(rows.size());
    s.cg_precision.assign(n_thresholds, 0.0);
    s.cg_recall.assign(n_thresholds, 0.0);
    s.post_precision.assign(n_thresholds, 0.0);
    s.post_recall.assign(n_thresholds, 0.0);
    long mae_count = 0;
    for (const SampleEval& r : rows) {
        s.error_r += r.error_r;
        s.error_t += r.error_t;
        s.mae_t += r.mae_t;
        s.mean_millis += r.millis;
        if (r.mae_r) {
            s.mae_r += *r.mae_r;
            ++mae_count;
        } else {
            ++s.gimbal_excluded;
        }
        for (size_t t = 0; t < n_thresholds && t < r.cg_pr.size(); ++t) {
            s.cg_precision[t] += r.cg_pr[t].precision;
            s.cg_recall[t] += r.cg_pr[t].recall;
            s.post_precision[t] += r.post_pr[t].precision;
            s.post_recall[t] += r.post_pr[t].recall;
        }
    }
    if (s.count > 0) {
        s.error_r /= s.count;
        s.error_t /= s.count;
        s.mae_t /= s.count;
        s.mean_millis /= s.count;
        for (size_t t = 0; t < n_thresholds; ++t) {
            s.cg_precision[t] /= s.count;
            s.cg_recall[t] /= s.count;
            s.post_precision[t] /= s.count;
            s.post_recall[t] /= s.count;
        }
    }
    if (mae_count > 0) s.mae_r /= mae_count;
    return s;
}

}  // namespace

EvalReport evaluate(const std::vector<data::PairSample>& dataset,
                    const core::ParamStore<float>& store, const net::ModelConfig& model_cfg,
                    const EvalOptions& opt) {
    if (dataset.empty()) throw Error(Status::Data, "evaluate: empty dataset");
    core::tune_allocator_for_tensors();
    EvalReport report;
    report.pr_thresholds = opt.pr_thresholds;
    report.rows.resize(dataset.size());
    long workers = std::min<long>(opt.workers, static_cast<long>(dataset.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < dataset.size(); ++i)
            report.rows[i] = eval_one(dataset[i], store, model_cfg, opt);
    } else {
        std::vector<std::thread> pool;
        for (long w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (size_t i = static_cast<size_t>(w); i < dataset.size();
                     i += static_cast<size_t>(workers))
                    report.rows[i] = eval_one(dataset[i], store, model_cfg, opt);
            });
        }
        for (auto& t : pool) t.join();
    }
    report.summary = summarize(report.rows, opt.pr_thresholds.size());
    return report;
}

EvalReport evaluate_icp(const std::vector<data::PairSample>& dataset, long max_iter,
                        double tol) {
    if (dataset.empty()) throw Error(Status::Data, "evaluate_icp: empty dataset");
    EvalReport report;
    for (const data::PairSample& sample : dataset) {
        SampleEval row;
        row.id = sample.id;
        row.category = sample.category;
        auto t0 = std::chrono::steady_clock::now();
        geom::IcpResult icp_result =
            geom::icp(sample.source.points, sample.target.points, max_iter, tol);
        auto t1 = std::chrono::steady_clock::now();
        row.millis = std::chrono::duration<double, std::milli>(t1 - t0).count();
        row.error_r =
            error_rotation_deg(icp_result.transform.rotation, sample.gt.rotation);
        row.error_t = error_translation(sample.gt.rotation,
                                        icp_result.transform.translation,
                                        sample.gt.translation);
        row.mae_r = mae_rotation_deg(icp_result.transform.rotation, sample.gt.rotation);
        row.mae_t = mae_translation(icp_result.transform.translation,
                                    sample.gt.translation);
        report.rows.push_back(std::move(row));
    }
    report.summary = summarize(report.rows, 0);
    return report;
}

void write_eval_csv(const EvalReport& report, const std::string& path, bool with_overlap) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error(Status::Data, "cannot write eval csv: " + path);
    std::fprintf(f, "id,category,error_r,error_t,mae_r,mae_t,gimbal");
    if (with_overlap) {
        for (double d : report.pr_thresholds)
            std::fprintf(f, ",cg_op_%.2f,cg_or_%.2f,post_op_%.2f,post_or_%.2f", d, d, d, d);
    }
    std::fprintf(f, ",millis\n");
    for (const SampleEval& r : report.rows) {
        std::fprintf(f, "%ld,%s,%.10g,%.10g,%.10g,%.10g,%d", r.id, r.category.c_str(),
                     r.error_r, r.error_t, r.mae_r.value_or(0.0), r.mae_t,
                     r.mae_r ? 0 : 1);
        if (with_overlap) {
            for (size_t t = 0; t < report.pr_thresholds.size(); ++t)
                std::fprintf(f, ",%.10g,%.10g,%.10g,%.10g", r.cg_pr[t].precision,
                             r.cg_pr[t].recall, r.post_pr[t].precision,
                             r.post_pr[t].recall);
        }
        std::fprintf(f, ",%.10g\n", r.millis);
    }
    std::fclose(f);
}

namespace {

nlohmann::json summary_json(const EvalReport& report) {
    const EvalSummary& s = report.summary;
    nlohmann::json j{{"count", s.count},
                     {"gimbal_excluded", s.gimbal_excluded},
                     {"error_r_deg", s.error_r},
                     {"error_t", s.error_t},
                     {"mae_r_deg", s.mae_r},
                     {"mae_t", s.mae_t},
                     {"mean_millis", s.mean_millis}};
    for (size_t t = 0; t < report.pr_thresholds.size(); ++t) {
        char key[64];
        std::snprintf(key, sizeof(key), "overlap_at_%.2f", report.pr_thresholds[t]);
        j[key] = {{"cg_precision", s.cg_precision[t]},
                  {"cg_recall", s.cg_recall[t]},
                  {"post_precision", s.post_precision[t]},
                  {"post_recall", s.post_recall[t]}};
    }
    return j;
}

}  // namespace

void write_eval_json(const EvalReport& report, const std::string& path,
                     const EvalReport* icp) {
    nlohmann::json j;
    j["ropnet"] = summary_json(report);
    if (icp) {
        j["icp"] = {{"count", icp->summary.count},
                    {"error_r_deg", icp->summary.error_r},
                    {"error_t", icp->summary.error_t},
                    {"mae_r_deg", icp->summary.mae_r},
                    {"mae_t", icp->summary.mae_t},
                    {"mean_millis", icp->summary.mean_millis},
                    {"gimbal_excluded", icp->summary.gimbal_excluded}};
    }
    std::ofstream os(path);
    if (!os) throw Error(Status::Data, "cannot write eval json: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace ropnet::train
