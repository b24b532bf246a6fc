#pragma once

// Non-differentiable point-cloud geometry: rigid transforms, PCA frames,
// sampling, chamfer distance, contacts and part-equivalence grouping.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace partasm::geo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// n x 3, one point per row.
using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Rigid transform x -> R(q) x + t. Quaternions are (w, x, y, z), Hamilton
// convention; q and -q denote the same rotation.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_array(std::span<const double, 7> wxyz_txyz);
  std::array<double, 7> to_array() const;

  Vec3 apply(const Vec3& p) const;
  Pose inverse() const;
  // (*this) after `inner`: x -> this(inner(x)).
  Pose compose(const Pose& inner) const;
  bool is_unit(double tol = 1e-9) const;
};

// Same expression as the tape's quaternion_to_matrix so both agree bit for bit.
Mat3 rotation_matrix(const Eigen::Quaterniond& q);

PointCloud quaternion_rotate(const Eigen::Quaterniond& q, const PointCloud& cloud);
PointCloud apply_pose(const Pose& pose, const PointCloud& cloud);

struct Canonicalization {
  PointCloud canonical;
  Pose frame;  // maps canonical coordinates back to the input frame
};

// Centroid to origin, axes along principal directions by descending variance.
// Each axis is signed so the point with the largest |coordinate| along it is
// positive (first index on ties); the last axis is flipped if needed to keep
// the frame right-handed. Throws DegenerateGeometryError for rank < 2.
Canonicalization pca_canonicalize(const PointCloud& cloud);

// Greedy max-min selection starting from `start_index`.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k, std::size_t start_index);
// Variant with several pre-selected seeds, kept in order at the front.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::span<const std::size_t> seeds);

double aabb_volume(const PointCloud& cloud);

enum class ChamferReduction { mean, sum };

// Bidirectional nearest-neighbour squared distance; mean per direction by default.
double chamfer_distance(const PointCloud& x, const PointCloud& y, ChamferReduction reduction = ChamferReduction::mean);

struct ContactPair {
  std::size_t i = 0;
  std::size_t j = 0;
  Vec3 c_ij = Vec3::Zero();  // in part i's canonical frame
  Vec3 c_ji = Vec3::Zero();  // in part j's canonical frame
};

// `world_parts` are the assembled parts and `poses` map canonical -> world.
std::vector<ContactPair> contact_points(std::span<const PointCloud> world_parts, std::span<const Pose> poses,
                                        std::span<const std::pair<std::size_t, std::size_t>> pairs);

// Dense group ids for the transitive closure of chamfer(a, b) < eps.
std::vector<int> equivalence_classes(std::span<const PointCloud> parts, double eps);

PointCloud concat_clouds(std::span<const PointCloud> clouds);

}  // namespace partasm::geo
