#include "partasm/dataset.hpp"

#include "partasm/error.hpp"
#include "partasm/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

namespace partasm::data {

using geo::PointCloud;
using geo::Vec3;
using nlohmann::json;

std::string to_string(Category c) {
  switch (c) {
    case Category::chair: return "chair";
    case Category::table: return "table";
    case Category::lamp: return "lamp";
  }
  return "unknown";
}

Category parse_category(std::string_view name) {
  if (name == "chair") return Category::chair;
  if (name == "table") return Category::table;
  if (name == "lamp") return Category::lamp;
  throw InvalidArgument("unknown category '" + std::string(name) + "' (expected chair, table or lamp)");
}

void GenParams::validate() const {
  if (point_budget == 0) throw InvalidArgument("point_budget must be positive");
  if (min_points < 1) throw InvalidArgument("min_points must be >= 1");
  if (oversample < 1) throw InvalidArgument("oversample must be >= 1");
  if (table_legs != 0 && (table_legs < 3 || table_legs > 6)) {
    throw InvalidArgument("table_legs must be 0 (random) or within [3, 6], got " + std::to_string(table_legs));
  }
  if (chair_arms < -1 || chair_arms > 1) throw InvalidArgument("chair_arms must be -1, 0 or 1");
  if (table_stretchers < -1 || table_stretchers > 1) throw InvalidArgument("table_stretchers must be -1, 0 or 1");
  if (!(equivalence_eps > 0)) throw InvalidArgument("equivalence_eps must be positive");
}

namespace {

struct Cuboid {
  Vec3 lo;
  Vec3 hi;
  std::string label;
  int template_id = 0;  // instances of one template share dimensions and samples

  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 size() const { return hi - lo; }
  double area() const {
    const Vec3 s = size();
    return 2.0 * (s.x() * s.y() + s.y() * s.z() + s.z() * s.x());
  }
};

struct Construction {
  std::vector<Cuboid> boxes;
  std::vector<std::pair<std::size_t, std::size_t>> contacts;
};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }
  bool coin() { return integer(0, 1) == 1; }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

Cuboid box(Vec3 lo, Vec3 hi, std::string label, int template_id) {
  return {lo, hi, std::move(label), template_id};
}

bool choose(int setting, Draw& draw) { return setting < 0 ? draw.coin() : setting == 1; }

Construction chair(Draw& d, const GenParams& p) {
  const double w = d.uniform(0.42, 0.6), depth = d.uniform(0.4, 0.55), ts = d.uniform(0.04, 0.07);
  const double h = d.uniform(0.38, 0.48), lx = d.uniform(0.03, 0.05), lz = d.uniform(0.035, 0.06);
  const double hb = d.uniform(0.35, 0.6), tb = d.uniform(0.03, 0.06);
  const bool arms = choose(p.chair_arms, d);
  const double aw = d.uniform(0.03, 0.05), ad = d.uniform(0.4, 0.6) * depth, ha = d.uniform(0.12, 0.2);

  Construction c;
  c.boxes.push_back(box({-w / 2, h + ts, -depth / 2}, {w / 2, h + ts + hb, -depth / 2 + tb}, "back", 0));
  c.boxes.push_back(box({-w / 2, h, -depth / 2}, {w / 2, h + ts, depth / 2}, "seat", 1));
  c.contacts.push_back({0, 1});
  for (int sx : {-1, 1}) {
    for (int sz : {-1, 1}) {
      const double x0 = sx < 0 ? -w / 2 : w / 2 - lx;
      const double z0 = sz < 0 ? -depth / 2 : depth / 2 - lz;
      c.boxes.push_back(box({x0, 0, z0}, {x0 + lx, h, z0 + lz}, "leg", 2));
      c.contacts.push_back({1, c.boxes.size() - 1});
    }
  }
  if (arms) {
    // Side rails on the seat's outer faces, hanging below the seat top.
    for (int sx : {-1, 1}) {
      const double x0 = sx < 0 ? -w / 2 - aw : w / 2;
      c.boxes.push_back(box({x0, h + ts - ha, -ad / 2}, {x0 + aw, h + ts, ad / 2}, "arm", 3));
      c.contacts.push_back({1, c.boxes.size() - 1});
    }
  }
  return c;
}

Construction table(Draw& d, const GenParams& p) {
  const double w = d.uniform(0.7, 1.2), depth = d.uniform(0.45, 0.8), tt = d.uniform(0.03, 0.06);
  const double h = d.uniform(0.45, 0.7), lx = d.uniform(0.035, 0.06), lz = d.uniform(0.04, 0.07);
  const int legs = p.table_legs == 0 ? d.integer(3, 6) : p.table_legs;
  const bool stretchers = choose(p.table_stretchers, d) && legs >= 4;
  const double sy = d.uniform(0.15, 0.35) * h, st = d.uniform(0.02, 0.04), sw = d.uniform(0.5, 0.9) * lx;

  Construction c;
  c.boxes.push_back(box({-w / 2, h, -depth / 2}, {w / 2, h + tt, depth / 2}, "top", 0));
  const double xi = w / 2 - lx / 2, zi = depth / 2 - lz / 2;
  std::vector<std::pair<double, double>> centers;
  if (legs == 3) {
    centers = {{-xi, zi}, {xi, zi}, {0.0, -zi}};
  } else {
    centers = {{-xi, -zi}, {-xi, zi}, {xi, -zi}, {xi, zi}};
    if (legs == 5) centers.push_back({0.0, 0.0});
    if (legs == 6) {
      centers.push_back({0.0, -zi});
      centers.push_back({0.0, zi});
    }
  }
  for (const auto& [x, z] : centers) {
    c.boxes.push_back(box({x - lx / 2, 0, z - lz / 2}, {x + lx / 2, h, z + lz / 2}, "leg", 1));
    c.contacts.push_back({0, c.boxes.size() - 1});
  }
  if (stretchers) {
    // Boxes 1..4 are the corner legs: (-x,-z), (-x,+z), (+x,-z), (+x,+z).
    for (std::size_t side = 0; side < 2; ++side) {
      const double x = side == 0 ? -xi : xi;
      c.boxes.push_back(
          box({x - sw / 2, sy - st / 2, -zi + lz / 2}, {x + sw / 2, sy + st / 2, zi - lz / 2}, "stretcher", 2));
      const std::size_t s = c.boxes.size() - 1;
      c.contacts.push_back({1 + 2 * side, s});
      c.contacts.push_back({2 + 2 * side, s});
    }
  }
  return c;
}

Construction lamp(Draw& d, const GenParams&) {
  const double bw = d.uniform(0.25, 0.4), bd = d.uniform(0.2, 0.35), bt = d.uniform(0.03, 0.06);
  const double px = d.uniform(0.025, 0.04), pz = d.uniform(0.03, 0.05), ph = d.uniform(0.5, 0.8);
  const double sw = d.uniform(0.22, 0.4), sd = d.uniform(0.18, 0.35), sh = d.uniform(0.15, 0.3);
  Construction c;
  c.boxes.push_back(box({-bw / 2, 0, -bd / 2}, {bw / 2, bt, bd / 2}, "base", 0));
  c.boxes.push_back(box({-px / 2, bt, -pz / 2}, {px / 2, bt + ph, pz / 2}, "pole", 1));
  c.boxes.push_back(box({-sw / 2, bt + ph, -sd / 2}, {sw / 2, bt + ph + sh, sd / 2}, "shade", 2));
  c.contacts = {{0, 1}, {1, 2}};
  return c;
}

void normalize(Construction& c) {
  Vec3 lo = c.boxes[0].lo, hi = c.boxes[0].hi;
  for (const auto& b : c.boxes) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  const double s = 1.0 / (hi - lo).norm();
  for (auto& b : c.boxes) {
    b.lo = (b.lo - mid) * s;
    b.hi = (b.hi - mid) * s;
  }
}

// Centre of the shared face of two touching boxes.
Vec3 touch_point(const Cuboid& a, const Cuboid& b) {
  const Vec3 lo = a.lo.cwiseMax(b.lo), hi = a.hi.cwiseMin(b.hi);
  const Vec3 extent = hi - lo;
  if (extent.minCoeff() < -1e-12 || (extent.array() <= 1e-12).count() != 1) {
    throw InvalidArgument("generator produced parts '" + a.label + "' and '" + b.label + "' that do not share a face");
  }
  return 0.5 * (lo + hi);
}

Vec3 surface_sample(const Vec3& size, Draw& d) {
  const double axy = size.x() * size.y(), ayz = size.y() * size.z(), azx = size.z() * size.x();
  const double pick = d.uniform(0.0, axy + ayz + azx);
  Vec3 p(d.uniform(-0.5, 0.5) * size.x(), d.uniform(-0.5, 0.5) * size.y(), d.uniform(-0.5, 0.5) * size.z());
  const double side = d.coin() ? 0.5 : -0.5;
  if (pick < axy) p.z() = side * size.z();
  else if (pick < axy + ayz) p.x() = side * size.x();
  else p.y() = side * size.y();
  return p;
}

// Per-instance point counts by template: proportional to surface area with a
// floor, the largest single-instance template absorbing the rounding.
std::map<int, std::size_t> allocate_points(const Construction& c, const GenParams& p) {
  if (c.boxes.size() * p.min_points > p.point_budget) {
    throw InvalidArgument("infeasible point budget: " + std::to_string(c.boxes.size()) + " parts need at least " +
                          std::to_string(c.boxes.size() * p.min_points) + " points, budget is " +
                          std::to_string(p.point_budget));
  }
  std::map<int, std::size_t> instances;
  std::map<int, double> area;
  double total = 0.0;
  for (const auto& b : c.boxes) {
    ++instances[b.template_id];
    area[b.template_id] = b.area();
    total += b.area();
  }
  int absorber = -1;
  for (const auto& [t, m] : instances) {
    if (m == 1 && (absorber < 0 || area[t] > area[absorber])) absorber = t;
  }
  if (absorber < 0) throw InvalidArgument("infeasible point budget: no single-instance part to absorb rounding");
  std::map<int, std::size_t> counts;
  std::size_t used = 0;
  for (const auto& [t, m] : instances) {
    if (t == absorber) continue;
    const auto ideal = static_cast<std::size_t>(std::llround(static_cast<double>(p.point_budget) * area[t] / total));
    counts[t] = std::max(p.min_points, ideal);
    used += counts[t] * m;
  }
  if (used + p.min_points > p.point_budget) {
    throw InvalidArgument("infeasible point budget: floors leave fewer than " + std::to_string(p.min_points) +
                          " points for the largest part");
  }
  counts[absorber] = p.point_budget - used;
  return counts;
}

}  // namespace

Generated generate_construction(Category category, std::uint64_t seed, const GenParams& params) {
  params.validate();
  Draw draw(seed);
  Construction c;
  switch (category) {
    case Category::chair: c = chair(draw, params); break;
    case Category::table: c = table(draw, params); break;
    case Category::lamp: c = lamp(draw, params); break;
  }
  normalize(c);
  const auto counts = allocate_points(c, params);

  // Contact anchors in each template's local (box-centred) frame, pooled over instances.
  std::map<int, std::vector<Vec3>> anchors;
  auto add_anchor = [&](const Cuboid& b, const Vec3& world) {
    const Vec3 local = world - b.center();
    auto& list = anchors[b.template_id];
    for (const Vec3& a : list) {
      if ((a - local).squaredNorm() <= 1e-24) return;
    }
    list.push_back(local);
  };
  for (const auto& [i, j] : c.contacts) {
    const Vec3 w = touch_point(c.boxes[i], c.boxes[j]);
    add_anchor(c.boxes[i], w);
    add_anchor(c.boxes[j], w);
  }

  std::map<int, PointCloud> sampled;
  std::map<int, geo::Canonicalization> canon;
  for (const auto& b : c.boxes) {
    if (canon.contains(b.template_id)) continue;
    const std::size_t n = counts.at(b.template_id);
    const auto& seeds_local = anchors[b.template_id];
    if (seeds_local.size() > n) throw InvalidArgument("infeasible point budget: more contacts than points on a part");
    PointCloud candidates(static_cast<Eigen::Index>(seeds_local.size() + n * params.oversample), 3);
    Eigen::Index row = 0;
    for (const Vec3& a : seeds_local) candidates.row(row++) = a.transpose();
    while (row < candidates.rows()) candidates.row(row++) = surface_sample(b.size(), draw).transpose();
    std::vector<std::size_t> seeds(seeds_local.size());
    std::iota(seeds.begin(), seeds.end(), 0);
    const auto keep = geo::farthest_point_sample(candidates, n, seeds);
    PointCloud local(static_cast<Eigen::Index>(n), 3);
    for (std::size_t k = 0; k < n; ++k) local.row(static_cast<Eigen::Index>(k)) = candidates.row(static_cast<Eigen::Index>(keep[k]));
    canon.emplace(b.template_id, geo::pca_canonicalize(local));
    sampled.emplace(b.template_id, std::move(local));
  }

  Generated g;
  g.shape.category = to_string(category);
  g.shape.point_budget = params.point_budget;
  std::vector<geo::Pose> poses;
  for (std::size_t k = 0; k < c.boxes.size(); ++k) {
    const Cuboid& b = c.boxes[k];
    const auto& cn = canon.at(b.template_id);
    PartRecord part;
    part.label = b.label;
    part.points = cn.canonical;
    part.gt_pose.rotation = cn.frame.rotation;
    part.gt_pose.translation = cn.frame.translation + b.center();
    part.order_index = k;
    poses.push_back(part.gt_pose);
    PointCloud world = sampled.at(b.template_id);
    world.rowwise() += b.center().transpose();
    g.world_parts.push_back(std::move(world));
    g.shape.parts.push_back(std::move(part));
  }
  const auto groups = geo::equivalence_classes(g.shape.clouds(), params.equivalence_eps);
  for (std::size_t k = 0; k < groups.size(); ++k) g.shape.parts[k].group_id = groups[k];
  g.shape.contacts = geo::contact_points(g.world_parts, poses, c.contacts);
  return g;
}

ShapeRecord generate_shape(Category category, std::uint64_t seed, const GenParams& params) {
  return generate_construction(category, seed, params).shape;
}

std::string to_string(OrderKind k) {
  switch (k) {
    case OrderKind::top_down: return "top_down";
    case OrderKind::volume: return "volume";
    case OrderKind::group_connectivity: return "group_connectivity";
    case OrderKind::part_connectivity: return "part_connectivity";
    case OrderKind::central_part_connectivity: return "central_part_connectivity";
    case OrderKind::random: return "random";
  }
  return "unknown";
}

OrderKind parse_order(std::string_view name) {
  for (OrderKind k : {OrderKind::top_down, OrderKind::volume, OrderKind::group_connectivity,
                      OrderKind::part_connectivity, OrderKind::central_part_connectivity, OrderKind::random}) {
    if (name == to_string(k)) return k;
  }
  throw InvalidArgument("unknown order strategy '" + std::string(name) + "'");
}

namespace {

using Graph = std::vector<std::vector<std::size_t>>;

Graph contact_graph(const ShapeRecord& shape) {
  const std::size_t n = shape.parts.size();
  Graph g(n);
  for (const auto& c : shape.contacts) {
    if (c.i >= n || c.j >= n) throw InvalidArgument("contact references a missing part");
    g[c.i].push_back(c.j);
    g[c.j].push_back(c.i);
  }
  for (auto& adj : g) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return g;
}

// Breadth-first from `start`; unreached nodes restart from the lowest index.
Ordering bfs(const Graph& g, std::size_t start) {
  const std::size_t n = g.size();
  Ordering out;
  std::vector<char> seen(n, 0);
  std::size_t next_root = 0;
  std::size_t root = start;
  while (out.perm.size() < n) {
    if (!out.perm.empty()) {
      out.disconnected = true;
      while (seen[next_root]) ++next_root;
      root = next_root;
    }
    std::queue<std::size_t> q;
    q.push(root);
    seen[root] = 1;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      out.perm.push_back(u);
      for (std::size_t v : g[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
  }
  return out;
}

std::size_t seeded_index(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

Ordering order_parts(const ShapeRecord& shape, const OrderStrategy& strategy) {
  const std::size_t n = shape.parts.size();
  if (n == 0) throw DegenerateInputError("order_parts: shape has no parts");
  Ordering out;
  out.perm.resize(n);
  std::iota(out.perm.begin(), out.perm.end(), 0);
  std::vector<double> volume(n);
  for (std::size_t i = 0; i < n; ++i) volume[i] = geo::aabb_volume(shape.parts[i].points);

  switch (strategy.kind) {
    case OrderKind::top_down: {
      std::vector<double> height(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 centroid = shape.parts[i].points.colwise().mean().transpose();
        height[i] = shape.parts[i].gt_pose.apply(centroid).y();
      }
      std::stable_sort(out.perm.begin(), out.perm.end(), [&](std::size_t a, std::size_t b) {
        if (height[a] != height[b]) return height[a] > height[b];
        return volume[a] > volume[b];
      });
      return out;
    }
    case OrderKind::volume:
      std::stable_sort(out.perm.begin(), out.perm.end(),
                       [&](std::size_t a, std::size_t b) { return volume[a] < volume[b]; });
      return out;
    case OrderKind::random: {
      std::mt19937_64 rng(strategy.seed);
      std::shuffle(out.perm.begin(), out.perm.end(), rng);
      return out;
    }
    case OrderKind::part_connectivity: return bfs(contact_graph(shape), seeded_index(strategy.seed, n));
    case OrderKind::central_part_connectivity: {
      const Graph g = contact_graph(shape);
      std::size_t hub = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (g[i].size() > g[hub].size()) hub = i;
      }
      return bfs(g, hub);
    }
    case OrderKind::group_connectivity: {
      // Group indices by first appearance.
      std::vector<int> ids;
      std::vector<std::size_t> group_of(n);
      std::vector<std::vector<std::size_t>> members;
      for (std::size_t i = 0; i < n; ++i) {
        const auto it = std::find(ids.begin(), ids.end(), shape.parts[i].group_id);
        group_of[i] = static_cast<std::size_t>(it - ids.begin());
        if (it == ids.end()) {
          ids.push_back(shape.parts[i].group_id);
          members.emplace_back();
        }
        members[group_of[i]].push_back(i);
      }
      const Graph parts = contact_graph(shape);
      Graph groups(ids.size());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j : parts[i]) {
          if (group_of[i] != group_of[j]) groups[group_of[i]].push_back(group_of[j]);
        }
      }
      for (auto& adj : groups) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
      }
      const Ordering by_group = bfs(groups, seeded_index(strategy.seed, ids.size()));
      out.perm.clear();
      out.disconnected = by_group.disconnected;
      for (std::size_t g : by_group.perm) out.perm.insert(out.perm.end(), members[g].begin(), members[g].end());
      return out;
    }
  }
  return out;
}

ShapeRecord apply_order(const ShapeRecord& shape, std::span<const std::size_t> perm) {
  const std::size_t n = shape.parts.size();
  if (perm.size() != n) throw InvalidArgument("apply_order: permutation size differs from part count");
  std::vector<std::size_t> where(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    if (perm[k] >= n || where[perm[k]] != n) throw InvalidArgument("apply_order: not a permutation");
    where[perm[k]] = k;
  }
  ShapeRecord out = shape;
  for (std::size_t k = 0; k < n; ++k) {
    out.parts[k] = shape.parts[perm[k]];
    out.parts[k].order_index = k;
  }
  for (auto& c : out.contacts) {
    c.i = where[c.i];
    c.j = where[c.j];
  }
  return out;
}

SplitCounts split_counts(std::size_t n) {
  SplitCounts s;
  s.val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  s.test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  if (n < 10 || s.val == 0 || s.test == 0 || s.val + s.test >= n) {
    throw InvalidArgument("dataset of " + std::to_string(n) + " shapes is too small for non-empty 70/10/20 splits (need >= 10)");
  }
  s.train = n - s.val - s.test;
  return s;
}

const ShapeRecord& Dataset::find(std::string_view id) const {
  for (const auto& s : shapes) {
    if (s.id == id) return s;
  }
  throw InvalidArgument("unknown shape id '" + std::string(id) + "'");
}

std::vector<ShapeRecord> Dataset::subset(std::span<const std::string> ids) const {
  std::vector<ShapeRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(find(id));
  return out;
}

Dataset build_dataset(std::size_t n, std::span<const Category> mix, std::uint64_t seed, const GenParams& params) {
  if (mix.empty()) throw InvalidArgument("build_dataset: empty category mix");
  const SplitCounts counts = split_counts(n);
  Dataset d;
  d.seed = seed;
  d.mix.assign(mix.begin(), mix.end());
  d.params = params;
  for (std::size_t i = 0; i < n; ++i) {
    const Category c = mix[i % mix.size()];
    ShapeRecord s = generate_shape(c, derive_seed(seed, i), params);
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04zu", i);
    s.id = to_string(c) + buf;
    d.shapes.push_back(std::move(s));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> ids;
    for (std::size_t i : idx) ids.push_back(d.shapes[i].id);
    return ids;
  };
  d.split.train = take(0, counts.train);
  d.split.val = take(counts.train, counts.val);
  d.split.test = take(counts.train + counts.val, counts.test);
  return d;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-vector", 0);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed " + std::string(what) + ": " + e.what(), e.byte);
  }
}

int read_version(const json& j, std::string_view what) {
  if (!j.is_object() || !j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw ParseError(std::string(what) + " has no integer format_version", 0);
  }
  const int found = j["format_version"].get<int>();
  if (found != kShapeFormatVersion) throw VersionError(kShapeFormatVersion, found);
  return found;
}

}  // namespace

std::string shape_to_text(const ShapeRecord& shape) {
  json parts = json::array();
  for (const auto& p : shape.parts) {
    json points = json::array();
    for (Eigen::Index r = 0; r < p.points.rows(); ++r) points.push_back({p.points(r, 0), p.points(r, 1), p.points(r, 2)});
    const auto& q = p.gt_pose.rotation;
    parts.push_back({{"label", p.label},
                     {"group_id", p.group_id},
                     {"order_index", p.order_index},
                     {"gt_quaternion", {q.w(), q.x(), q.y(), q.z()}},
                     {"gt_translation", vec_json(p.gt_pose.translation)},
                     {"points", std::move(points)}});
  }
  json contacts = json::array();
  for (const auto& c : shape.contacts) {
    contacts.push_back({{"i", c.i}, {"j", c.j}, {"c_ij", vec_json(c.c_ij)}, {"c_ji", vec_json(c.c_ji)}});
  }
  const json doc = {{"format_version", kShapeFormatVersion},
                    {"id", shape.id},
                    {"category", shape.category},
                    {"up_axis", kUpAxis},
                    {"point_budget", shape.point_budget},
                    {"parts", std::move(parts)},
                    {"contacts", std::move(contacts)}};
  return doc.dump() + "\n";
}

ShapeRecord shape_from_text(std::string_view text) {
  const json doc = parse_json(text, "shape file");
  read_version(doc, "shape file");
  ShapeRecord s;
  try {
    s.id = doc.at("id").get<std::string>();
    s.category = doc.at("category").get<std::string>();
    if (doc.at("up_axis").get<std::string>() != kUpAxis) throw ParseError("shape file: unsupported up_axis", 0);
    s.point_budget = doc.at("point_budget").get<std::size_t>();
    for (const auto& jp : doc.at("parts")) {
      PartRecord p;
      p.label = jp.at("label").get<std::string>();
      p.group_id = jp.at("group_id").get<int>();
      p.order_index = jp.at("order_index").get<std::size_t>();
      const auto& q = jp.at("gt_quaternion");
      if (!q.is_array() || q.size() != 4) throw ParseError("shape file: gt_quaternion needs 4 values", 0);
      p.gt_pose.rotation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                              q[3].get<double>());
      p.gt_pose.translation = vec_from(jp.at("gt_translation"));
      const auto& pts = jp.at("points");
      p.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
      for (std::size_t r = 0; r < pts.size(); ++r) p.points.row(static_cast<Eigen::Index>(r)) = vec_from(pts[r]).transpose();
      s.parts.push_back(std::move(p));
    }
    for (const auto& jc : doc.at("contacts")) {
      geo::ContactPair c;
      c.i = jc.at("i").get<std::size_t>();
      c.j = jc.at("j").get<std::size_t>();
      c.c_ij = vec_from(jc.at("c_ij"));
      c.c_ji = vec_from(jc.at("c_ji"));
      s.contacts.push_back(c);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("shape file: ") + e.what(), 0);
  }
  for (std::size_t k = 0; k < s.parts.size(); ++k) {
    if (s.parts[k].order_index != k) throw ParseError("shape file: parts are not sorted by order_index", 0);
    if (!s.parts[k].gt_pose.is_unit(1e-9)) throw ParseError("shape file: non-unit gt quaternion", 0);
    if (s.parts[k].points.rows() == 0) throw ParseError("shape file: part without points", 0);
  }
  for (const auto& c : s.contacts) {
    if (c.i >= s.parts.size() || c.j >= s.parts.size()) throw ParseError("shape file: contact out of range", 0);
  }
  if (s.point_count() != s.point_budget) {
    throw ParseError("shape file: " + std::to_string(s.point_count()) + " points for a budget of " +
                         std::to_string(s.point_budget),
                     0);
  }
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void save_shape(const ShapeRecord& shape, const std::filesystem::path& path) {
  write_text_file(path, shape_to_text(shape));
}

ShapeRecord load_shape(const std::filesystem::path& path) { return shape_from_text(read_text_file(path)); }

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "shapes", ec);
  if (ec) throw IoError("cannot create '" + (dir / "shapes").string() + "': " + ec.message());
  json shapes = json::array();
  for (const auto& s : dataset.shapes) {
    const std::string file = "shapes/" + s.id + ".json";
    save_shape(s, dir / file);
    shapes.push_back({{"id", s.id}, {"category", s.category}, {"parts", s.parts.size()}, {"file", file}});
  }
  json mix = json::array();
  for (Category c : dataset.mix) mix.push_back(to_string(c));
  const json manifest = {{"format_version", kShapeFormatVersion},
                         {"seed", dataset.seed},
                         {"count", dataset.shapes.size()},
                         {"categories", std::move(mix)},
                         {"generator", dataset.params},
                         {"up_axis", kUpAxis},
                         {"shapes", std::move(shapes)},
                         {"splits", {{"train", dataset.split.train}, {"val", dataset.split.val}, {"test", dataset.split.test}}}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json m = parse_json(read_text_file(dir / "manifest.json"), "manifest");
  read_version(m, "manifest");
  Dataset d;
  try {
    d.seed = m.at("seed").get<std::uint64_t>();
    for (const auto& c : m.at("categories")) d.mix.push_back(parse_category(c.get<std::string>()));
    d.params = m.at("generator").get<GenParams>();
    for (const auto& entry : m.at("shapes")) {
      ShapeRecord s = load_shape(dir / entry.at("file").get<std::string>());
      if (s.id != entry.at("id").get<std::string>()) throw ParseError("manifest id does not match shape file", 0);
      d.shapes.push_back(std::move(s));
    }
    const auto& splits = m.at("splits");
    d.split.train = splits.at("train").get<std::vector<std::string>>();
    d.split.val = splits.at("val").get<std::vector<std::string>>();
    d.split.test = splits.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what(), 0);
  }
  std::vector<std::string> all;
  for (const auto* part : {&d.split.train, &d.split.val, &d.split.test}) all.insert(all.end(), part->begin(), part->end());
  std::vector<std::string> ids;
  for (const auto& s : d.shapes) ids.push_back(s.id);
  std::sort(all.begin(), all.end());
  std::sort(ids.begin(), ids.end());
  if (all != ids) throw ParseError("manifest splits do not partition the shape ids", 0);
  return d;
}

}  // namespace partasm::data
