#include "geom/alignment.hpp"

#include <cmath>

#include "geom/neighbors.hpp"

namespace ropnet::geom {

namespace {

double angle_between(const Vec3& u, const Vec3& v) {
    double nu = u.norm(), nv = v.norm();
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    return std::acos(c);
}

}  // namespace

Vec4 point_pair_feature(const Vec3& x, const Vec3& n_x, const Vec3& m, const Vec3& n_m) {
    Vec3 d = m - x;
    return {angle_between(n_x, d), angle_between(n_m, d), angle_between(n_x, n_m),
            d.norm()};
}

RigidTransform weighted_kabsch(const PointMatrix& src, const PointMatrix& dst,
                               const std::vector<double>& weights) {
    long n = src.rows();
    if (n < 3 || dst.rows() != n || static_cast<long>(weights.size()) != n)
        throw Error(Status::Usage, "weighted_kabsch: need K >= 3 matched rows");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw Error(Status::Usage, "weighted_kabsch: weights must be finite and >= 0");
        wsum += w;
    }
    if (!(wsum > 0.0))
        throw Error(Status::Usage, "weighted_kabsch: total weight must be positive");

    Vec3 src_center = Vec3::Zero(), dst_center = Vec3::Zero();
    for (long i = 0; i < n; ++i) {
        src_center += weights[static_cast<size_t>(i)] * src.row(i).transpose();
        dst_center += weights[static_cast<size_t>(i)] * dst.row(i).transpose();
    }
    src_center /= wsum;
    dst_center /= wsum;

    Mat3 cov = Mat3::Zero();
    for (long i = 0; i < n; ++i) {
        Vec3 a = src.row(i).transpose() - src_center;
        Vec3 b = dst.row(i).transpose() - dst_center;
        cov += weights[static_cast<size_t>(i)] * a * b.transpose();
    }

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 sig = svd.singularValues();
    if (sig(0) <= 0.0 || sig(1) <= 1e-12 * sig(0))
        throw Error(Status::Numeric,
                    "weighted_kabsch: degenerate geometry (rank-deficient cross-covariance)");
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = ((v * u.transpose()).determinant() < 0.0) ? -1.0 : 1.0;

    RigidTransform out;
    out.rotation = v * d * u.transpose();
    out.translation = dst_center - out.rotation * src_center;
    return out;
}

IcpResult icp(const PointMatrix& source, const PointMatrix& target, long max_iter,
              double tol) {
    if (source.rows() == 0 || target.rows() == 0)
        throw Error(Status::Usage, "icp: empty cloud");
    IcpResult result;
    PointMatrix current = source;
    std::vector<double> uniform(static_cast<size_t>(source.rows()), 1.0);
    for (long it = 0; it < max_iter; ++it) {
        KnnResult nn = knn(current, target, 1);
        PointMatrix matched(source.rows(), 3);
        for (long i = 0; i < source.rows(); ++i)
            matched.row(i) = target.row(nn.indices[static_cast<size_t>(i)]);
        RigidTransform inc = weighted_kabsch(current, matched, uniform);
        current = apply_transform(inc, current);
        result.transform = compose(inc, result.transform);
        result.iterations = it + 1;

        double sq = 0.0;
        KnnResult post = knn(current, target, 1);
        for (long i = 0; i < source.rows(); ++i) {
            double d = post.distances[static_cast<size_t>(i)];
            sq += d * d;
        }
        result.rmse_history.push_back(std::sqrt(sq / static_cast<double>(source.rows())));

        double change = (inc.rotation - Mat3::Identity()).norm() + inc.translation.norm();
        if (change < tol) break;
    }
    return result;
}

}  // namespace ropnet::geom
