#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "data/generator.hpp"

namespace ropnet::data {

// On-disk layout:
//   DIR/manifest.csv   id,seed,category,r00..r22,t0,t1,t2
//   DIR/config.txt     resolved generation config (flat key=value)
//   DIR/pairs/NNNNNN.pair  source and target sections, ASCII cloud rows
// Overlap labels are recomputed at load from the manifest transform.

void write_dataset(const std::string& dir, const GenConfig& cfg, long num_samples);

std::vector<PairSample> load_dataset(const std::string& dir,
                                     const std::string& category_filter = "",
                                     double overlap_d_override = 0.0);

void write_pair_file(const PairSample& sample, const std::string& path);

// Reads the two cloud sections; gt/labels come from the manifest.
void read_pair_file(const std::string& path, geom::PointCloud& source,
                    geom::PointCloud& target);

GenConfig load_dataset_config(const std::string& dir);

GenConfig make_gen_config(const RunConfig& rc);

}  // namespace ropnet::data
