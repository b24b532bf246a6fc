#include "partasm/geometry.hpp"

#include "partasm/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace partasm::geo {

Pose Pose::from_array(std::span<const double, 7> v) {
  Pose p;
  p.rotation = Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
  p.translation = Vec3(v[4], v[5], v[6]);
  return p;
}

std::array<double, 7> Pose::to_array() const {
  return {rotation.w(), rotation.x(), rotation.y(), rotation.z(), translation.x(), translation.y(), translation.z()};
}

Vec3 Pose::apply(const Vec3& p) const { return rotation_matrix(rotation) * p + translation; }

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.conjugate();
  inv.translation = -(rotation_matrix(inv.rotation) * translation);
  return inv;
}

Pose Pose::compose(const Pose& inner) const {
  Pose out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation_matrix(rotation) * inner.translation + translation;
  return out;
}

bool Pose::is_unit(double tol) const { return std::abs(rotation.norm() - 1.0) <= tol; }

Mat3 rotation_matrix(const Eigen::Quaterniond& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

PointCloud quaternion_rotate(const Eigen::Quaterniond& q, const PointCloud& cloud) {
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw InvalidArgument("quaternion_rotate: quaternion norm " + std::to_string(q.norm()) + " is not 1");
  }
  return cloud * rotation_matrix(q).transpose();
}

PointCloud apply_pose(const Pose& pose, const PointCloud& cloud) {
  PointCloud out = quaternion_rotate(pose.rotation, cloud);
  out.rowwise() += pose.translation.transpose();
  return out;
}

Canonicalization pca_canonicalize(const PointCloud& cloud) {
  if (cloud.rows() == 0) throw DegenerateGeometryError("pca_canonicalize: empty cloud", 0);
  const Vec3 centroid = cloud.colwise().mean().transpose();
  const PointCloud centered = cloud.rowwise() - centroid.transpose();
  const Mat3 cov = (centered.transpose() * centered) / static_cast<double>(cloud.rows());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  // Ascending order from Eigen; reverse to descending variance.
  const Vec3 eigenvalues = solver.eigenvalues().reverse();
  Mat3 axes = solver.eigenvectors().rowwise().reverse();

  const double largest = eigenvalues(0);
  int rank = 0;
  if (largest > 1e-18) {
    for (int k = 0; k < 3; ++k) rank += eigenvalues(k) > 1e-10 * largest ? 1 : 0;
  }
  if (rank < 2) {
    throw DegenerateGeometryError("pca_canonicalize: covariance has rank " + std::to_string(rank), rank);
  }

  const int signed_axes = rank == 3 ? 3 : 2;
  for (int k = 0; k < signed_axes; ++k) {
    const Eigen::VectorXd proj = centered * axes.col(k);
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < proj.size(); ++i) {
      if (std::abs(proj(i)) > best_abs) {
        best_abs = std::abs(proj(i));
        best = i;
      }
    }
    if (proj(best) < 0) axes.col(k) = -axes.col(k);
  }
  if (rank == 2) {
    axes.col(2) = axes.col(0).cross(axes.col(1));
  } else if (axes.determinant() < 0) {
    axes.col(2) = -axes.col(2);
  }

  Canonicalization out;
  out.canonical = centered * axes;
  Eigen::Quaterniond q(axes);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  out.frame.rotation = q;
  out.frame.translation = centroid;
  return out;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k, std::size_t start_index) {
  const std::size_t seeds[1] = {start_index};
  return farthest_point_sample(cloud, k, seeds);
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::span<const std::size_t> seeds) {
  const auto n = static_cast<std::size_t>(cloud.rows());
  if (k == 0 || k > n) {
    throw InvalidArgument("farthest_point_sample: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  if (seeds.empty()) throw InvalidArgument("farthest_point_sample: no start index");
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> picked;
  picked.reserve(k);
  auto take = [&](std::size_t idx) {
    picked.push_back(idx);
    taken[idx] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], (cloud.row(static_cast<Eigen::Index>(i)) -
                                           cloud.row(static_cast<Eigen::Index>(idx)))
                                              .squaredNorm());
    }
  };
  for (std::size_t s : seeds) {
    if (s >= n) throw InvalidArgument("farthest_point_sample: start index " + std::to_string(s) + " out of range");
    if (taken[s]) throw InvalidArgument("farthest_point_sample: repeated seed index");
    if (picked.size() == k) break;
    take(s);
  }
  while (picked.size() < k) {
    std::size_t best = n;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    take(best);
  }
  return picked;
}

double aabb_volume(const PointCloud& cloud) {
  if (cloud.rows() == 0) return 0.0;
  const Vec3 extent = (cloud.colwise().maxCoeff() - cloud.colwise().minCoeff()).transpose();
  return extent.prod();
}

namespace {

double directed(const PointCloud& x, const PointCloud& y, ChamferReduction reduction) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < y.rows(); ++j) best = std::min(best, (x.row(i) - y.row(j)).squaredNorm());
    total += best;
  }
  return reduction == ChamferReduction::mean ? total / static_cast<double>(x.rows()) : total;
}

// Index of the point in `from` nearest to any point of `to`; first index on ties.
Eigen::Index closest_point(const PointCloud& from, const PointCloud& to) {
  Eigen::Index best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      const double d = (from.row(i) - to.row(j)).squaredNorm();
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
  }
  return best;
}

}  // namespace

double chamfer_distance(const PointCloud& x, const PointCloud& y, ChamferReduction reduction) {
  if (x.rows() == 0 || y.rows() == 0) throw DegenerateInputError("chamfer_distance: empty point set");
  return directed(x, y, reduction) + directed(y, x, reduction);
}

std::vector<ContactPair> contact_points(std::span<const PointCloud> world_parts, std::span<const Pose> poses,
                                        std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (poses.size() != world_parts.size()) {
    throw InvalidArgument("contact_points: " + std::to_string(poses.size()) + " poses for " +
                          std::to_string(world_parts.size()) + " parts");
  }
  std::vector<ContactPair> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    if (i >= world_parts.size() || j >= world_parts.size() || i == j) {
      throw InvalidArgument("contact_points: invalid pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    const PointCloud& pi = world_parts[i];
    const PointCloud& pj = world_parts[j];
    if (pi.rows() == 0 || pj.rows() == 0) throw DegenerateInputError("contact_points: empty part");
    const Vec3 world_ij = pi.row(closest_point(pi, pj)).transpose();
    const Vec3 world_ji = pj.row(closest_point(pj, pi)).transpose();
    ContactPair c;
    c.i = i;
    c.j = j;
    c.c_ij = poses[i].inverse().apply(world_ij);
    c.c_ji = poses[j].inverse().apply(world_ji);
    out.push_back(c);
  }
  return out;
}

std::vector<int> equivalence_classes(std::span<const PointCloud> parts, double eps) {
  const std::size_t n = parts.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (find(a) == find(b)) continue;
      if (chamfer_distance(parts[a], parts[b]) < eps) parent[find(b)] = find(a);
    }
  }
  std::vector<int> ids(n, -1);
  std::vector<int> root_id(n, -1);
  int next = 0;
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t r = find(a);
    if (root_id[r] < 0) root_id[r] = next++;
    ids[a] = root_id[r];
  }
  return ids;
}

PointCloud concat_clouds(std::span<const PointCloud> clouds) {
  Eigen::Index rows = 0;
  for (const auto& c : clouds) rows += c.rows();
  PointCloud out(rows, 3);
  Eigen::Index at = 0;
  for (const auto& c : clouds) {
    out.middleRows(at, c.rows()) = c;
    at += c.rows();
  }
  return out;
}

}  // namespace partasm::geo
