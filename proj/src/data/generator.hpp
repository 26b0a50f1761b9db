#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "geom/cloud.hpp"

namespace ropnet::data {

struct GenConfig {
    long n_points = 1024;
    double keep_ratio = 0.7;
    double angle_max_deg = 45.0;
    double trans_max = 0.5;
    double noise_sigma = 0.01;
    double noise_clip = 0.5;
    double overlap_d = 0.05;
    bool noise = true;
    bool single_sample = false;  // reuse the source draw for the target
    bool flip_augment = false;   // mirror both clouds about x (off by default)
    long normals_k = 16;
    long shape_candidates = 4096;
    uint64_t seed = 0;
    std::vector<std::string> categories;  // empty = all bundled categories

    void validate() const;
};

// One training/eval instance: source X, target Y = crop/noise of the
// gt-transformed second draw, plus ground-truth overlap labels.
struct PairSample {
    long id = 0;
    uint64_t seed = 0;
    std::string category;
    geom::PointCloud source;
    geom::PointCloud target;
    geom::RigidTransform gt;
    std::vector<int> overlap_source;  // 1 iff NN distance of (gt o x) in Y < d
    std::vector<int> overlap_target;  // symmetric, via gt^-1
};

// Euler angles (intrinsic Z-Y-X) each uniform in [0, angle_max_deg],
// translation components uniform in [-trans_max, trans_max].
geom::RigidTransform random_transform(core::Rng& rng, const GenConfig& cfg);

// Keeps the ceil(keep_ratio * N) points with the largest projection onto
// `direction`, original order preserved.
std::vector<long> partial_crop_indices(const geom::PointMatrix& points,
                                       const geom::Vec3& direction, double keep_ratio);
geom::PointMatrix partial_crop(const geom::PointMatrix& points,
                               const geom::Vec3& direction, double keep_ratio);

// i.i.d. Gaussian per coordinate, each draw clamped to [-clip, clip].
geom::PointMatrix add_noise(const geom::PointMatrix& points, double sigma, double clip,
                            core::Rng& rng);

// label_i = 1 iff the nearest-neighbor distance of (gt o x_i) in Y is < d.
std::vector<int> overlap_labels(const geom::PointMatrix& x, const geom::PointMatrix& y,
                                const geom::RigidTransform& gt, double d);

// Full protocol for one pair drawn from `shape_points` candidates.
PairSample sample_pair(const geom::PointMatrix& shape_points, const GenConfig& cfg,
                       core::Rng& rng);

// Shape + pair generation for sample `index` under a master seed; the
// per-sample stream is derived by seed splitting, so generation is
// order-independent.
PairSample generate_sample(const GenConfig& cfg, long index);

// Rebuilds a sample from its recorded per-sample seed and category.
PairSample regenerate_sample(const GenConfig& cfg, uint64_t sample_seed,
                             const std::string& category);

}  // namespace ropnet::data
