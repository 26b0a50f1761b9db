#pragma once

#include <vector>

#include "geom/cloud.hpp"

namespace ropnet::geom {

// Exact k-nearest neighbors by brute force (N <= ~1k makes this fast and
// trivially testable). Distances ascending, ties broken by lower index.
struct KnnResult {
    std::vector<long> indices;      // query-major, k per query
    std::vector<double> distances;  // Euclidean
};

KnnResult knn(const PointMatrix& query, const PointMatrix& reference, long k);

// Plane-fit normals from the k-NN covariance (smallest eigenvector), unit
// length, oriented away from the cloud centroid. Degenerate neighborhoods
// (rank < 2) are rejected.
PointMatrix estimate_normals(const PointMatrix& points, long k = 16);

}  // namespace ropnet::geom
