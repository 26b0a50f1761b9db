#include "data/generator.hpp"

#include <algorithm>
#include <cmath>

#include "data/shapes.hpp"
#include "geom/neighbors.hpp"

namespace ropnet::data {

using core::Rng;
using geom::PointMatrix;
using geom::RigidTransform;
using geom::Vec3;

void GenConfig::validate() const {
    if (!(keep_ratio > 0.0 && keep_ratio <= 1.0))
        throw Error(Status::Usage, "keep_ratio must be in (0, 1]");
    if (n_points < 1 || angle_max_deg < 0 || trans_max < 0 || noise_sigma < 0 ||
        noise_clip <= 0 || overlap_d <= 0)
        throw Error(Status::Usage, "generation magnitudes must be positive");
    for (const auto& c : categories)
        if (!is_shape_category(c))
            throw Error(Status::Usage, "unknown shape category: " + c);
}

RigidTransform random_transform(Rng& rng, const GenConfig& cfg) {
    double deg2rad = M_PI / 180.0;
    double yaw = rng.uniform(0.0, cfg.angle_max_deg) * deg2rad;
    double pitch = rng.uniform(0.0, cfg.angle_max_deg) * deg2rad;
    double roll = rng.uniform(0.0, cfg.angle_max_deg) * deg2rad;
    RigidTransform t;
    t.rotation = geom::euler_zyx_to_rotation(yaw, pitch, roll);
    for (int c = 0; c < 3; ++c)
        t.translation(c) = rng.uniform(-cfg.trans_max, cfg.trans_max);
    return t;
}

std::vector<long> partial_crop_indices(const PointMatrix& points, const Vec3& direction,
                                       double keep_ratio) {
    long n = points.rows();
    long keep = static_cast<long>(std::ceil(keep_ratio * static_cast<double>(n)));
    keep = std::clamp(keep, 1L, n);
    std::vector<std::pair<double, long>> proj(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) proj[static_cast<size_t>(i)] = {points.row(i).dot(direction), i};
    std::partial_sort(proj.begin(), proj.begin() + keep, proj.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<long> idx(static_cast<size_t>(keep));
    for (long i = 0; i < keep; ++i) idx[static_cast<size_t>(i)] = proj[static_cast<size_t>(i)].second;
    std::sort(idx.begin(), idx.end());  // preserve original order
    return idx;
}

PointMatrix partial_crop(const PointMatrix& points, const Vec3& direction,
                         double keep_ratio) {
    std::vector<long> idx = partial_crop_indices(points, direction, keep_ratio);
    PointMatrix out(static_cast<long>(idx.size()), 3);
    for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<long>(i)) = points.row(idx[i]);
    return out;
}

PointMatrix add_noise(const PointMatrix& points, double sigma, double clip, Rng& rng) {
    PointMatrix out = points;
    if (sigma <= 0.0) return out;
    for (long i = 0; i < out.rows(); ++i)
        for (int c = 0; c < 3; ++c)
            out(i, c) += std::clamp(rng.normal(sigma), -clip, clip);
    return out;
}

std::vector<int> overlap_labels(const PointMatrix& x, const PointMatrix& y,
                                const RigidTransform& gt, double d) {
    PointMatrix moved = geom::apply_transform(gt, x);
    geom::KnnResult nn = geom::knn(moved, y, 1);
    std::vector<int> labels(static_cast<size_t>(x.rows()));
    for (long i = 0; i < x.rows(); ++i)
        labels[static_cast<size_t>(i)] = nn.distances[static_cast<size_t>(i)] < d ? 1 : 0;
    return labels;
}

namespace {

Vec3 random_unit(Rng& rng) {
    while (true) {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        double n = v.norm();
        if (n > 1e-9) return v / n;
    }
}

PointMatrix take_rows(const PointMatrix& m, const std::vector<long>& idx) {
    PointMatrix out(static_cast<long>(idx.size()), 3);
    for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<long>(i)) = m.row(idx[i]);
    return out;
}

}  // namespace

PairSample sample_pair(const PointMatrix& shape_points, const GenConfig& cfg, Rng& rng) {
    cfg.validate();
    if (shape_points.rows() < cfg.n_points)
        throw Error(Status::Data, "shape has fewer candidate points than n_points");

    PairSample s;
    // Fixed draw order: gt, source subsample, target subsample, crop
    // directions, noise. Regeneration from the recorded seed is bitwise
    // identical.
    s.gt = random_transform(rng, cfg);
    std::vector<long> src_idx =
        rng.sample_without_replacement(shape_points.rows(), cfg.n_points);
    std::vector<long> tgt_idx =
        cfg.single_sample ? src_idx
                          : rng.sample_without_replacement(shape_points.rows(), cfg.n_points);

    PointMatrix x = take_rows(shape_points, src_idx);
    PointMatrix y = geom::apply_transform(s.gt, take_rows(shape_points, tgt_idx));

    Vec3 dir_x = random_unit(rng);
    Vec3 dir_y = random_unit(rng);
    x = partial_crop(x, dir_x, cfg.keep_ratio);
    y = partial_crop(y, dir_y, cfg.keep_ratio);

    if (cfg.noise && cfg.noise_sigma > 0.0) {
        x = add_noise(x, cfg.noise_sigma, cfg.noise_clip, rng);
        y = add_noise(y, cfg.noise_sigma, cfg.noise_clip, rng);
    }
    if (cfg.flip_augment) {
        x.col(0) *= -1.0;
        y.col(0) *= -1.0;
        // mirroring both frames about x conjugates the ground truth
        geom::Mat3 f = geom::Mat3::Identity();
        f(0, 0) = -1.0;
        s.gt.rotation = f * s.gt.rotation * f;
        s.gt.translation = f * s.gt.translation;
    }

    s.source.points = x;
    s.source.normals = geom::estimate_normals(x, cfg.normals_k);
    s.target.points = y;
    s.target.normals = geom::estimate_normals(y, cfg.normals_k);
    s.overlap_source = overlap_labels(x, y, s.gt, cfg.overlap_d);
    s.overlap_target = overlap_labels(y, x, s.gt.inverse(), cfg.overlap_d);
    return s;
}

PairSample generate_sample(const GenConfig& cfg, long index) {
    uint64_t sample_seed = core::derive_seed(cfg.seed, static_cast<uint64_t>(index));
    const std::vector<std::string>& cats =
        cfg.categories.empty() ? kShapeCategories : cfg.categories;
    PairSample s = regenerate_sample(cfg, sample_seed,
                                     cats[static_cast<size_t>(index) % cats.size()]);
    s.id = index;
    return s;
}

PairSample regenerate_sample(const GenConfig& cfg, uint64_t sample_seed,
                             const std::string& category) {
    Rng rng(sample_seed);
    PointMatrix shape = make_shape(category, rng, cfg.shape_candidates);
    PairSample s = sample_pair(shape, cfg, rng);
    s.seed = sample_seed;
    s.category = category;
    return s;
}

}  // namespace ropnet::data
