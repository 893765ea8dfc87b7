#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "iwl/dataset.hpp"
#include "iwl/math.hpp"

namespace testutil {

/// Relative error with an absolute floor, the scale used by every gradient
/// check in this suite: |a - n| / max(1, |a|, |n|).
inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

/// Fresh unique directory under the system temp root.
inline std::filesystem::path fresh_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() /
      ("iwl-" + tag + "-" + std::to_string(std::random_device{}()) + "-" +
       std::to_string(++counter));
  std::filesystem::create_directories(dir);
  return dir;
}

/// Random dataset: normal features, uniform labels, votes that agree with
/// the label 60% of the time, abstain 20%, and are uniform otherwise.
inline iwl::WeakDataset random_dataset(int num_classes, int num_sources, int feature_dim, int n,
                                       std::uint64_t seed, bool with_labels = true,
                                       iwl::Split split = iwl::Split::train) {
  iwl::WeakDataset ds;
  ds.num_classes = num_classes;
  ds.num_sources = num_sources;
  ds.feature_dim = feature_dim;
  ds.split = split;
  iwl::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    iwl::DataPoint p;
    p.id = iwl::to_string(split) + "-" + std::to_string(i);
    for (int d = 0; d < feature_dim; ++d) p.features.push_back(rng.normal());
    const int y = 1 + static_cast<int>(rng.uniform_int(num_classes));
    if (with_labels) p.strong_label = y;
    for (int k = 0; k < num_sources; ++k) {
      const double u = rng.uniform();
      int vote = 0;
      if (u < 0.6) {
        vote = y;
      } else if (u >= 0.8) {
        vote = 1 + static_cast<int>(rng.uniform_int(num_classes));
      }
      p.weak_labels.push_back(vote);
    }
    ds.points.push_back(std::move(p));
  }
  return ds;
}

}  // namespace testutil
