#include "train/metrics.hpp"

#include <cmath>

namespace ropnet::train {

double error_rotation_deg(const geom::Mat3& r, const geom::Mat3& r_hat) {
    double arg = ((r_hat.transpose() * r).trace() - 1.0) * 0.5;
    return std::acos(std::clamp(arg, -1.0, 1.0)) * 180.0 / M_PI;
}

double error_translation(const geom::Mat3& r_hat, const geom::Vec3& t,
                         const geom::Vec3& t_hat) {
    return (r_hat.transpose() * (t - t_hat)).template lpNorm<1>();
}

std::optional<double> mae_rotation_deg(const geom::Mat3& r, const geom::Mat3& r_hat) {
    geom::EulerZyx a = geom::rotation_to_euler_zyx(r);
    geom::EulerZyx b = geom::rotation_to_euler_zyx(r_hat);
    if (a.gimbal || b.gimbal) return std::nullopt;
    double rad2deg = 180.0 / M_PI;
    return (std::abs(a.yaw - b.yaw) + std::abs(a.pitch - b.pitch) +
            std::abs(a.roll - b.roll)) /
           3.0 * rad2deg;
}

double mae_translation(const geom::Vec3& t, const geom::Vec3& t_hat) {
    return (t - t_hat).template lpNorm<1>() / 3.0;
}

PrecisionRecall overlap_pr(const std::vector<int>& predicted,
                           const std::vector<int>& labels) {
    if (predicted.size() != labels.size())
        throw Error(Status::Usage, "overlap_pr: size mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (predicted[i] && labels[i]) ++tp;
        else if (predicted[i] && !labels[i]) ++fp;
        else if (!predicted[i] && labels[i]) ++fn;
    }
    PrecisionRecall out;
    if (tp + fp == 0) {
        out.no_predictions = true;
        out.precision = 0.0;
    } else {
        out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    out.recall = (tp + fn == 0) ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    return out;
}

PrecisionRecall overlap_pr_from_indices(const std::vector<long>& kept, long n,
                                        const std::vector<int>& labels) {
    std::vector<int> predicted(static_cast<size_t>(n), 0);
    for (long i : kept) {
        if (i < 0 || i >= n) throw Error(Status::Usage, "overlap_pr: index out of range");
        predicted[static_cast<size_t>(i)] = 1;
    }
    return overlap_pr(predicted, labels);
}

}  // namespace ropnet::train
