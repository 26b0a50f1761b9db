#pragma once

#include <vector>

#include "geom/cloud.hpp"

namespace ropnet::geom {

// Point Pair Feature of (x, n_x) against (m, n_m):
// (angle(n_x, d), angle(n_m, d), angle(n_x, n_m), |d|), d = m - x,
// angles in [0, pi]. Angles against a zero vector are 0.
Vec4 point_pair_feature(const Vec3& x, const Vec3& n_x, const Vec3& m, const Vec3& n_m);

// Weighted orthogonal Procrustes / Kabsch: argmin over SE(3) of
// sum_i w_i |R src_i + t - dst_i|^2. Needs K >= 3, positive total weight,
// and a cross-covariance of rank >= 2 (collinear points are rejected).
RigidTransform weighted_kabsch(const PointMatrix& src, const PointMatrix& dst,
                               const std::vector<double>& weights);

struct IcpResult {
    RigidTransform transform;
    long iterations = 0;
    std::vector<double> rmse_history;  // correspondence RMSE after each iteration
};

// Classical point-to-point ICP from the identity initialization.
IcpResult icp(const PointMatrix& source, const PointMatrix& target, long max_iter = 50,
              double tol = 1e-6);

}  // namespace ropnet::geom
