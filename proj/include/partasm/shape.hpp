#pragma once

// Part-decomposed shape records shared by the dataset, metrics and training code.

#include "partasm/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace partasm {

struct PartRecord {
  std::string label;
  int group_id = 0;
  geo::PointCloud points;  // canonical frame
  geo::Pose gt_pose;       // canonical -> assembled
  std::size_t order_index = 0;
};

struct ShapeRecord {
  std::string id;
  std::string category;
  std::vector<PartRecord> parts;  // sorted by order_index
  std::vector<geo::ContactPair> contacts;
  std::size_t point_budget = 1000;

  std::vector<geo::PointCloud> clouds() const;
  std::vector<geo::Pose> gt_poses() const;
  std::vector<int> groups() const;
  std::vector<std::string> labels() const;
  std::size_t point_count() const;
};

// Splits one base seed into independent per-item seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace partasm
