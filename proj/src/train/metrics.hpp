#pragma once

#include <optional>
#include <vector>

#include "geom/cloud.hpp"

namespace ropnet::train {

// Isotropic rotation error in degrees: arccos((tr(Rhat^-1 R) - 1) / 2),
// argument clamped to [-1, 1].
double error_rotation_deg(const geom::Mat3& r, const geom::Mat3& r_hat);

// Translation error in the ground-truth frame: |Rhat^-1 (t - that)|_1.
double error_translation(const geom::Mat3& r_hat, const geom::Vec3& t,
                         const geom::Vec3& t_hat);

// Anisotropic errors: mean |delta| over the intrinsic Z-Y-X Euler angles
// (degrees) and over translation components. mae_rotation is empty for
// gimbal-locked samples (|pitch| within 1e-6 of 90 degrees), which are
// excluded from aggregates with their count reported.
std::optional<double> mae_rotation_deg(const geom::Mat3& r, const geom::Mat3& r_hat);
double mae_translation(const geom::Vec3& t, const geom::Vec3& t_hat);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    bool no_predictions = false;  // precision reported as 0 with this flag
};

PrecisionRecall overlap_pr(const std::vector<int>& predicted,
                           const std::vector<int>& labels);

// Prediction set given as surviving indices into [0, n).
PrecisionRecall overlap_pr_from_indices(const std::vector<long>& kept, long n,
                                        const std::vector<int>& labels);

}  // namespace ropnet::train
