#include "geom/neighbors.hpp"

#include <algorithm>
#include <cmath>

namespace ropnet::geom {

KnnResult knn(const PointMatrix& query, const PointMatrix& reference, long k) {
    long q = query.rows(), m = reference.rows();
    if (k < 1 || k > m)
        throw Error(Status::Usage, "knn: k must be in [1, reference size]");
    KnnResult out;
    out.indices.resize(static_cast<size_t>(q * k));
    out.distances.resize(static_cast<size_t>(q * k));
    std::vector<std::pair<double, long>> cand(static_cast<size_t>(m));
    for (long i = 0; i < q; ++i) {
        for (long j = 0; j < m; ++j) {
            double d2 = (reference.row(j) - query.row(i)).squaredNorm();
            cand[static_cast<size_t>(j)] = {d2, j};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (long j = 0; j < k; ++j) {
            out.indices[static_cast<size_t>(i * k + j)] = cand[static_cast<size_t>(j)].second;
            out.distances[static_cast<size_t>(i * k + j)] =
                std::sqrt(cand[static_cast<size_t>(j)].first);
        }
    }
    return out;
}

PointMatrix estimate_normals(const PointMatrix& points, long k) {
    long n = points.rows();
    if (k < 3 || n < k)
        throw Error(Status::Usage, "estimate_normals: need N >= k >= 3");
    KnnResult nn = knn(points, points, k);
    Vec3 centroid = points.colwise().mean();
    PointMatrix normals(n, 3);
    for (long i = 0; i < n; ++i) {
        Vec3 mean = Vec3::Zero();
        for (long j = 0; j < k; ++j)
            mean += points.row(nn.indices[static_cast<size_t>(i * k + j)]).transpose();
        mean /= static_cast<double>(k);
        Mat3 cov = Mat3::Zero();
        for (long j = 0; j < k; ++j) {
            Vec3 d =
                points.row(nn.indices[static_cast<size_t>(i * k + j)]).transpose() - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3& evals = eig.eigenvalues();  // ascending
        if (evals(1) <= std::max(1e-18, 1e-10 * evals(2)))
            throw Error(Status::Numeric,
                        "estimate_normals: zero-variance neighborhood at point " +
                            std::to_string(i));
        Vec3 normal = eig.eigenvectors().col(0);
        if (normal.dot(points.row(i).transpose() - centroid) < 0.0) normal = -normal;
        normals.row(i) = normal.normalized().transpose();
    }
    return normals;
}

}  // namespace ropnet::geom
