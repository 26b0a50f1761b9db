#pragma once

#include <optional>
#include <string>
#include <vector>

#include "data/generator.hpp"
#include "net/model.hpp"
#include "train/metrics.hpp"

namespace ropnet::train {

struct EvalOptions {
    long iters = 2;
    double prob = 0.4;
    long topk = 1;
    long workers = 1;
    double score_cut = 0.5;
    bool oracle_gt = false;  // evaluate ground-truth transforms as predictions
    std::vector<double> pr_thresholds{0.05, 0.07};

    static EvalOptions from(const RunConfig& rc);
};

struct SampleEval {
    long id = 0;
    std::string category;
    double error_r = 0, error_t = 0;
    std::optional<double> mae_r;
    double mae_t = 0;
    // overlap precision/recall of the CG prediction and of the surviving
    // post-TFMR set, at each threshold in pr_thresholds
    std::vector<PrecisionRecall> cg_pr, post_pr;
    double millis = 0;
};

struct EvalSummary {
    long count = 0;
    long gimbal_excluded = 0;
    double error_r = 0, error_t = 0, mae_r = 0, mae_t = 0;
    std::vector<double> cg_precision, cg_recall, post_precision, post_recall;
    double mean_millis = 0;
};

struct EvalReport {
    std::vector<SampleEval> rows;
    EvalSummary summary;
    std::vector<double> pr_thresholds;
};

// Full pipeline per sample (CG + `iters` TFMR refinements at test settings),
// metrics computed against the dataset ground truth; wall clock recorded.
EvalReport evaluate(const std::vector<data::PairSample>& dataset,
                    const core::ParamStore<float>& store, const net::ModelConfig& model_cfg,
                    const EvalOptions& opt);

// ICP baseline on the same pairs (errors and timing only).
EvalReport evaluate_icp(const std::vector<data::PairSample>& dataset, long max_iter = 50,
                        double tol = 1e-6);

void write_eval_csv(const EvalReport& report, const std::string& path,
                    bool with_overlap = true);
void write_eval_json(const EvalReport& report, const std::string& path,
                     const EvalReport* icp = nullptr);

}  // namespace ropnet::train
