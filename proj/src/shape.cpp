#include "partasm/shape.hpp"

namespace partasm {

std::vector<geo::PointCloud> ShapeRecord::clouds() const {
  std::vector<geo::PointCloud> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(p.points);
  return out;
}

std::vector<geo::Pose> ShapeRecord::gt_poses() const {
  std::vector<geo::Pose> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(p.gt_pose);
  return out;
}

std::vector<int> ShapeRecord::groups() const {
  std::vector<int> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(p.group_id);
  return out;
}

std::vector<std::string> ShapeRecord::labels() const {
  std::vector<std::string> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(p.label);
  return out;
}

std::size_t ShapeRecord::point_count() const {
  std::size_t n = 0;
  for (const auto& p : parts) n += static_cast<std::size_t>(p.points.rows());
  return n;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace partasm
