#include "doctest.h"
#include "partasm/dataset.hpp"
#include "partasm/error.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

using namespace partasm;
using namespace partasm::data;

namespace {

double brute_chamfer(const geo::PointCloud& x, const geo::PointCloud& y) {
  auto one_way = [](const geo::PointCloud& a, const geo::PointCloud& b) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double best = 1e300;
      for (Eigen::Index j = 0; j < b.rows(); ++j) best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
      total += best;
    }
    return total / static_cast<double>(a.rows());
  };
  return one_way(x, y) + one_way(y, x);
}

bool is_permutation_of_n(const std::vector<std::size_t>& perm, std::size_t n) {
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k] != k) return false;
  }
  return sorted.size() == n;
}

std::vector<std::string> labels_in(const ShapeRecord& s, const std::vector<std::size_t>& perm) {
  std::vector<std::string> out;
  for (std::size_t i : perm) out.push_back(s.parts[i].label);
  return out;
}

geo::PointCloud cuboid_corners(double sx, double sy, double sz) {
  geo::PointCloud c(8, 3);
  for (int i = 0; i < 8; ++i) {
    c.row(i) = Eigen::RowVector3d((i & 1 ? 0.5 : -0.5) * sx, (i & 2 ? 0.5 : -0.5) * sy, (i & 4 ? 0.5 : -0.5) * sz);
  }
  return c;
}

// Parts with the given AABB volumes (unit cross-section) and y positions.
ShapeRecord synthetic(const std::vector<double>& volumes, const std::vector<double>& heights,
                      const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  ShapeRecord s;
  for (std::size_t k = 0; k < volumes.size(); ++k) {
    PartRecord p;
    p.label = "p" + std::to_string(k);
    p.group_id = static_cast<int>(k);
    p.points = cuboid_corners(volumes[k], 1.0, 1.0);
    p.gt_pose.translation = geo::Vec3(0, heights.empty() ? 0.0 : heights[k], 0);
    p.order_index = k;
    s.parts.push_back(p);
  }
  for (const auto& [i, j] : edges) {
    geo::ContactPair c;
    c.i = i;
    c.j = j;
    s.contacts.push_back(c);
  }
  return s;
}

// Every part after the first touches an earlier one unless the graph is disconnected.
bool grows_connected(const ShapeRecord& s, const std::vector<std::size_t>& perm) {
  std::set<std::size_t> placed{perm[0]};
  for (std::size_t k = 1; k < perm.size(); ++k) {
    bool touches = false;
    for (const auto& c : s.contacts) {
      if ((c.i == perm[k] && placed.contains(c.j)) || (c.j == perm[k] && placed.contains(c.i))) touches = true;
    }
    if (!touches) return false;
    placed.insert(perm[k]);
  }
  return true;
}

// Each newly started group touches a part placed before it.
bool groups_grow_connected(const ShapeRecord& s, const std::vector<std::size_t>& perm) {
  std::set<std::size_t> placed;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const int g = s.parts[perm[k]].group_id;
    if (k > 0 && g != s.parts[perm[k - 1]].group_id) {
      bool touches = false;
      for (const auto& c : s.contacts) {
        const bool i_in = s.parts[c.i].group_id == g, j_in = s.parts[c.j].group_id == g;
        if ((i_in && placed.contains(c.j)) || (j_in && placed.contains(c.i))) touches = true;
      }
      if (!touches) return false;
    }
    placed.insert(perm[k]);
  }
  return true;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("generated shapes satisfy the record invariants") {
  for (Category cat : {Category::chair, Category::table, Category::lamp}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      CAPTURE(to_string(cat));
      CAPTURE(seed);
      const Generated g = generate_construction(cat, seed);
      const ShapeRecord& s = g.shape;
      CHECK(s.point_count() == 1000);
      REQUIRE(g.world_parts.size() == s.parts.size());

      geo::Vec3 lo = geo::Vec3::Constant(1e300), hi = geo::Vec3::Constant(-1e300);
      for (std::size_t k = 0; k < s.parts.size(); ++k) {
        const PartRecord& p = s.parts[k];
        CHECK(p.order_index == k);
        CHECK(p.points.rows() >= 20);
        CHECK(std::abs(p.gt_pose.rotation.norm() - 1.0) <= 1e-12);
        const geo::PointCloud again = geo::pca_canonicalize(p.points).canonical;
        CHECK((again - p.points).cwiseAbs().maxCoeff() <= 1e-9);
        const geo::PointCloud posed = geo::apply_pose(p.gt_pose, p.points);
        CHECK((posed - g.world_parts[k]).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(brute_chamfer(posed, g.world_parts[k]) <= 1e-9);
        lo = lo.cwiseMin(g.world_parts[k].colwise().minCoeff().transpose());
        hi = hi.cwiseMax(g.world_parts[k].colwise().maxCoeff().transpose());
      }
      // Samples sit on the cuboid surfaces, so their box is inside the unit-diagonal box.
      CHECK((hi - lo).norm() <= 1.0 + 1e-12);
      CHECK((hi - lo).norm() >= 0.9);
      CHECK(((hi + lo) * 0.5).cwiseAbs().maxCoeff() <= 0.05);

      CHECK_FALSE(s.contacts.empty());
      for (const auto& c : s.contacts) {
        REQUIRE(c.i < s.parts.size());
        REQUIRE(c.j < s.parts.size());
        const geo::Vec3 a = s.parts[c.i].gt_pose.apply(c.c_ij), b = s.parts[c.j].gt_pose.apply(c.c_ji);
        CHECK((a - b).norm() <= 1e-6);
      }
    }
  }
}

TEST_CASE("generation is deterministic") {
  for (Category cat : {Category::chair, Category::table, Category::lamp}) {
    CHECK(shape_to_text(generate_shape(cat, 42)) == shape_to_text(generate_shape(cat, 42)));
    CHECK(shape_to_text(generate_shape(cat, 42)) != shape_to_text(generate_shape(cat, 43)));
  }
}

TEST_CASE("templates and groups") {
  GenParams four;
  four.table_legs = 4;
  four.table_stretchers = 0;
  const ShapeRecord t = generate_shape(Category::table, 3, four);
  REQUIRE(t.parts.size() == 5);
  CHECK(t.parts[0].label == "top");
  for (std::size_t k = 1; k < 5; ++k) {
    CHECK(t.parts[k].label == "leg");
    CHECK(t.parts[k].group_id == t.parts[1].group_id);
    CHECK(brute_chamfer(t.parts[k].points, t.parts[1].points) < 1e-3);
  }
  CHECK(t.parts[0].group_id != t.parts[1].group_id);
  CHECK(brute_chamfer(t.parts[0].points, t.parts[1].points) >= 1e-3);

  for (int legs = 3; legs <= 6; ++legs) {
    GenParams p;
    p.table_legs = legs;
    p.table_stretchers = 1;
    const ShapeRecord s = generate_shape(Category::table, 9, p);
    const auto labels = s.labels();
    CHECK(std::count(labels.begin(), labels.end(), "leg") == legs);
    CHECK(std::count(labels.begin(), labels.end(), "stretcher") == (legs >= 4 ? 2 : 0));
  }

  GenParams arms;
  arms.chair_arms = 1;
  const ShapeRecord c = generate_shape(Category::chair, 5, arms);
  REQUIRE(c.parts.size() == 8);
  std::map<std::string, std::set<int>> groups;
  for (const auto& p : c.parts) groups[p.label].insert(p.group_id);
  CHECK(groups["leg"].size() == 1);
  CHECK(groups["arm"].size() == 1);
  CHECK(*groups["leg"].begin() != *groups["arm"].begin());

  const ShapeRecord l = generate_shape(Category::lamp, 1);
  CHECK(l.labels() == std::vector<std::string>{"base", "pole", "shade"});
  CHECK(l.contacts.size() == 2);
}

TEST_CASE("infeasible generation parameters") {
  GenParams p;
  p.chair_arms = 1;
  p.point_budget = 150;  // 8 parts x 20 points
  CHECK_THROWS_AS(generate_shape(Category::chair, 0, p), InvalidArgument);
  GenParams bad;
  bad.table_legs = 9;
  CHECK_THROWS_AS(generate_shape(Category::table, 0, bad), InvalidArgument);
  CHECK_THROWS_AS(parse_category("sofa"), InvalidArgument);
}

TEST_CASE("order_parts") {
  SUBCASE("chair top-down: back, seat, arms, legs") {
    GenParams p;
    p.chair_arms = 1;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const ShapeRecord c = generate_shape(Category::chair, seed, p);
      const auto order = order_parts(c, {OrderKind::top_down, 0});
      CHECK(labels_in(c, order.perm) ==
            std::vector<std::string>{"back", "seat", "arm", "arm", "leg", "leg", "leg", "leg"});
    }
  }
  SUBCASE("top-down ties go to larger volume, then lower index") {
    const ShapeRecord s = synthetic({1, 2, 3, 2}, {0.0, 5.0, 0.0, 5.0}, {});
    CHECK(order_parts(s, {OrderKind::top_down, 0}).perm == std::vector<std::size_t>{1, 3, 2, 0});
  }
  SUBCASE("volume order") {
    const ShapeRecord s = synthetic({2, 1, 3}, {}, {});
    CHECK(order_parts(s, {OrderKind::volume, 0}).perm == std::vector<std::size_t>{1, 0, 2});
  }
  SUBCASE("central strategy starts at the hub") {
    const ShapeRecord star = synthetic({1, 1, 1, 1, 1}, {}, {{3, 0}, {3, 1}, {3, 2}, {3, 4}});
    const auto order = order_parts(star, {OrderKind::central_part_connectivity, 0});
    CHECK(order.perm == std::vector<std::size_t>{3, 0, 1, 2, 4});
    CHECK_FALSE(order.disconnected);
  }
  SUBCASE("connectivity orders grow through contacts") {
    const ShapeRecord chain = synthetic({1, 1, 1, 1, 1, 1}, {}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
    std::set<std::size_t> starts;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto order = order_parts(chain, {OrderKind::part_connectivity, seed});
      CHECK(is_permutation_of_n(order.perm, 6));
      CHECK(grows_connected(chain, order.perm));
      starts.insert(order.perm[0]);
    }
    CHECK(starts.size() > 1);
  }
  SUBCASE("group connectivity keeps groups together in index order") {
    GenParams p;
    p.chair_arms = 1;
    const ShapeRecord c = generate_shape(Category::chair, 2, p);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto perm = order_parts(c, {OrderKind::group_connectivity, seed}).perm;
      REQUIRE(is_permutation_of_n(perm, c.parts.size()));
      std::vector<int> seen;
      for (std::size_t k = 0; k < perm.size(); ++k) {
        const int g = c.parts[perm[k]].group_id;
        if (k > 0 && g == c.parts[perm[k - 1]].group_id) {
          CHECK(perm[k] > perm[k - 1]);
        } else {
          CHECK(std::find(seen.begin(), seen.end(), g) == seen.end());
          seen.push_back(g);
        }
      }
      CHECK(groups_grow_connected(c, perm));
    }
  }
  SUBCASE("disconnected graphs append the rest in index order") {
    const ShapeRecord split = synthetic({1, 1, 1, 1, 1}, {}, {{0, 1}, {3, 4}, {3, 2}});
    const auto order = order_parts(split, {OrderKind::central_part_connectivity, 0});
    CHECK(order.perm == std::vector<std::size_t>{3, 2, 4, 0, 1});
    CHECK(order.disconnected);
  }
  SUBCASE("random order is a seeded shuffle") {
    const ShapeRecord s = synthetic(std::vector<double>(8, 1.0), {}, {});
    const auto a = order_parts(s, {OrderKind::random, 4}).perm;
    CHECK(is_permutation_of_n(a, 8));
    CHECK(a == order_parts(s, {OrderKind::random, 4}).perm);
    bool differs = false;
    for (std::uint64_t seed = 5; seed < 10; ++seed) differs |= order_parts(s, {OrderKind::random, seed}).perm != a;
    CHECK(differs);
  }
  SUBCASE("every strategy yields a bijection on generated shapes") {
    for (Category cat : {Category::chair, Category::table, Category::lamp}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ShapeRecord s = generate_shape(cat, seed);
        for (OrderKind k : {OrderKind::top_down, OrderKind::volume, OrderKind::group_connectivity,
                            OrderKind::part_connectivity, OrderKind::central_part_connectivity, OrderKind::random}) {
          const auto order = order_parts(s, {k, seed});
          CHECK(is_permutation_of_n(order.perm, s.parts.size()));
          CHECK_FALSE(order.disconnected);
        }
      }
    }
  }
  CHECK(parse_order("central_part_connectivity") == OrderKind::central_part_connectivity);
  CHECK_THROWS_AS(parse_order("sideways"), InvalidArgument);
}

TEST_CASE("apply_order remaps parts and contacts") {
  const ShapeRecord s = generate_shape(Category::lamp, 7);
  const std::vector<std::size_t> perm{2, 0, 1};
  const ShapeRecord r = apply_order(s, perm);
  CHECK(r.labels() == std::vector<std::string>{"shade", "base", "pole"});
  for (std::size_t k = 0; k < 3; ++k) CHECK(r.parts[k].order_index == k);
  for (std::size_t c = 0; c < s.contacts.size(); ++c) {
    CHECK(r.parts[r.contacts[c].i].label == s.parts[s.contacts[c].i].label);
    CHECK(r.parts[r.contacts[c].j].label == s.parts[s.contacts[c].j].label);
    const geo::Vec3 a = r.parts[r.contacts[c].i].gt_pose.apply(r.contacts[c].c_ij);
    const geo::Vec3 b = r.parts[r.contacts[c].j].gt_pose.apply(r.contacts[c].c_ji);
    CHECK((a - b).norm() <= 1e-6);
  }
  const std::vector<std::size_t> bad{0, 0, 1};
  CHECK_THROWS_AS(apply_order(s, bad), InvalidArgument);
}

TEST_CASE("splits") {
  auto check = [](std::size_t n, std::size_t tr, std::size_t va, std::size_t te) {
    const SplitCounts c = split_counts(n);
    CHECK(c.train == tr);
    CHECK(c.val == va);
    CHECK(c.test == te);
  };
  check(10, 7, 1, 2);
  check(100, 70, 10, 20);
  check(80, 56, 8, 16);
  check(13, 9, 1, 3);
  CHECK_THROWS_AS(split_counts(5), InvalidArgument);
  CHECK_THROWS_AS(split_counts(9), InvalidArgument);

  const std::vector<Category> mix{Category::chair, Category::table};
  const Dataset a = build_dataset(20, mix, 11);
  const Dataset b = build_dataset(20, mix, 11);
  CHECK(a.split.train == b.split.train);
  CHECK(a.split.val == b.split.val);
  CHECK(a.split.test == b.split.test);
  std::vector<std::string> all;
  for (const auto* part : {&a.split.train, &a.split.val, &a.split.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all.size() == 20);
  CHECK(a.split.train.size() == 14);
  CHECK(a.shapes[0].category == "chair");
  CHECK(a.shapes[1].category == "table");
  CHECK(a.find(a.shapes[3].id).id == a.shapes[3].id);
  CHECK_THROWS_AS(a.find("nope"), InvalidArgument);
  const Dataset c = build_dataset(20, mix, 12);
  CHECK(c.split.test != a.split.test);
}

TEST_CASE("shape files") {
  const ShapeRecord s = [] {
    ShapeRecord r = generate_shape(Category::chair, 8);
    r.id = "chair_0008";
    return r;
  }();
  SUBCASE("round trip is exact") {
    const ShapeRecord r = shape_from_text(shape_to_text(s));
    CHECK(r.id == s.id);
    CHECK(r.category == s.category);
    CHECK(r.point_budget == s.point_budget);
    REQUIRE(r.parts.size() == s.parts.size());
    for (std::size_t k = 0; k < s.parts.size(); ++k) {
      CHECK(r.parts[k].label == s.parts[k].label);
      CHECK(r.parts[k].group_id == s.parts[k].group_id);
      CHECK(r.parts[k].order_index == s.parts[k].order_index);
      CHECK(r.parts[k].points == s.parts[k].points);
      CHECK(r.parts[k].gt_pose.rotation.coeffs() == s.parts[k].gt_pose.rotation.coeffs());
      CHECK(r.parts[k].gt_pose.translation == s.parts[k].gt_pose.translation);
    }
    REQUIRE(r.contacts.size() == s.contacts.size());
    for (std::size_t k = 0; k < s.contacts.size(); ++k) {
      CHECK(r.contacts[k].i == s.contacts[k].i);
      CHECK(r.contacts[k].j == s.contacts[k].j);
      CHECK(r.contacts[k].c_ij == s.contacts[k].c_ij);
      CHECK(r.contacts[k].c_ji == s.contacts[k].c_ji);
    }
    CHECK(shape_to_text(r) == shape_to_text(s));
  }
  SUBCASE("truncation is a parse error with an offset") {
    const std::string text = shape_to_text(s);
    try {
      shape_from_text(std::string_view(text).substr(0, text.size() / 2));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() > 0);
      CHECK(e.byte_offset() <= text.size() / 2 + 1);
    }
  }
  SUBCASE("unknown version names both versions") {
    std::string text = shape_to_text(s);
    const auto at = text.find("\"format_version\":1");
    REQUIRE(at != std::string::npos);
    text.replace(at, 18, "\"format_version\":7");
    try {
      shape_from_text(text);
      FAIL("expected a version error");
    } catch (const VersionError& e) {
      CHECK(e.expected() == 1);
      CHECK(e.found() == 7);
      const std::string msg = e.what();
      CHECK(msg.find('1') != std::string::npos);
      CHECK(msg.find('7') != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_shape("/nonexistent/shape.json"), IoError); }
}

TEST_CASE("dataset directories round trip byte for byte") {
  TempDir a("partasm_test_ds_a"), b("partasm_test_ds_b");
  const std::vector<Category> mix{Category::table};
  const Dataset d = build_dataset(10, mix, 3);
  write_dataset(d, a.path);
  const Dataset loaded = load_dataset(a.path);
  CHECK(loaded.split.train == d.split.train);
  CHECK(loaded.split.test == d.split.test);
  CHECK(loaded.params == d.params);
  REQUIRE(loaded.shapes.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) CHECK(shape_to_text(loaded.shapes[k]) == shape_to_text(d.shapes[k]));
  write_dataset(build_dataset(10, mix, 3), b.path);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path);
    CHECK(read_text_file(entry.path()) == read_text_file(b.path / rel));
  }
  CHECK_THROWS_AS(load_dataset(a.path / "missing"), IoError);
}
