#pragma once

// Procedural cuboid shapes (chairs, tables, lamps), part orderings, splits and
// the on-disk shape format.

#include "partasm/shape.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace partasm::data {

enum class Category { chair, table, lamp };

std::string to_string(Category c);
Category parse_category(std::string_view name);

inline constexpr int kShapeFormatVersion = 1;
inline constexpr std::string_view kUpAxis = "+y";

struct GenParams {
  std::size_t point_budget = 1000;
  std::size_t min_points = 20;
  std::size_t oversample = 8;  // surface candidates per kept point before FPS
  int table_legs = 0;          // 0 draws from [3, 6]
  int chair_arms = -1;         // -1 random, 0 never, 1 always
  int table_stretchers = -1;   // -1 random, 0 never, 1 always
  double equivalence_eps = 1e-3;

  void validate() const;
  bool operator==(const GenParams&) const = default;
};

struct Generated {
  ShapeRecord shape;                       // parts in construction order
  std::vector<geo::PointCloud> world_parts;  // assembled construction, same order
};

// Up axis +y, bounding box centred at the origin with diagonal 1.
Generated generate_construction(Category category, std::uint64_t seed, const GenParams& params = {});
ShapeRecord generate_shape(Category category, std::uint64_t seed, const GenParams& params = {});

enum class OrderKind { top_down, volume, group_connectivity, part_connectivity, central_part_connectivity, random };

struct OrderStrategy {
  OrderKind kind = OrderKind::top_down;
  std::uint64_t seed = 0;  // used by random and the seeded connectivity strategies

  bool operator==(const OrderStrategy&) const = default;
};

std::string to_string(OrderKind k);
OrderKind parse_order(std::string_view name);

struct Ordering {
  std::vector<std::size_t> perm;  // perm[k] = part placed at position k
  bool disconnected = false;      // contact graph had more than one component
};

Ordering order_parts(const ShapeRecord& shape, const OrderStrategy& strategy);

// Parts rearranged so position k holds shape.parts[perm[k]]; contacts follow.
ShapeRecord apply_order(const ShapeRecord& shape, std::span<const std::size_t> perm);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// 70/10/20 with val and test rounded to nearest; train takes the remainder.
SplitCounts split_counts(std::size_t n);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct Dataset {
  std::uint64_t seed = 0;
  std::vector<Category> mix;
  GenParams params;
  std::vector<ShapeRecord> shapes;  // generation order
  Split split;

  const ShapeRecord& find(std::string_view id) const;
  std::vector<ShapeRecord> subset(std::span<const std::string> ids) const;
};

// Shape i uses category mix[i % mix.size()] and seed derive_seed(seed, i).
Dataset build_dataset(std::size_t n, std::span<const Category> mix, std::uint64_t seed, const GenParams& params = {});

std::string shape_to_text(const ShapeRecord& shape);
ShapeRecord shape_from_text(std::string_view text);
void save_shape(const ShapeRecord& shape, const std::filesystem::path& path);
ShapeRecord load_shape(const std::filesystem::path& path);

// <dir>/manifest.json plus <dir>/shapes/<id>.json.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace partasm::data
