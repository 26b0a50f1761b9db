#pragma once

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "geom/cloud.hpp"

namespace ropnet::data {

// Bundled procedural categories. `composite` draws a per-instance random
// layout of primitives, so every composite instance is a distinct
// asymmetric shape; the canonical primitives are fixed geometry.
extern const std::vector<std::string> kShapeCategories;

bool is_shape_category(const std::string& name);

// Surface-samples `count` candidate points of the category, centered at the
// centroid and scaled to the unit sphere (max norm 1).
geom::PointMatrix make_shape(const std::string& category, core::Rng& rng, long count);

}  // namespace ropnet::data
