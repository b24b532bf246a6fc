#pragma once

// Recurrent graph network that maps ordered canonical part clouds to poses.
// Poses on the tape are N x 7 rows (w, x, y, z, tx, ty, tz).

#include "partasm/geometry.hpp"
#include "partasm/optim.hpp"
#include "partasm/tensor.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace partasm::model {

using ad::Tape;
using ad::Tensor;
using ad::Var;

struct NetConfig {
  std::size_t feature_dim = 256;
  std::size_t hidden_dim = 256;
  std::size_t pose_feat_dim = 128;
  std::size_t noise_dim = 32;
  std::size_t iterations = 3;
  std::array<std::size_t, 2> encoder_dims = {64, 128};
  std::size_t edge_hidden = 256;
  std::size_t rel_hidden = 128;
  std::size_t pose_hidden = 256;

  // Throws InvalidArgument unless 0 <= noise_dim <= hidden_dim, iterations >= 1 and all widths > 0.
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

using ModelParams = ad::ParamSet;

ModelParams init_params(const NetConfig& config, std::uint64_t seed);

// Throws ConfigError naming both shapes when `params` does not fit `config`.
void check_params(const ModelParams& params, const NetConfig& config);

// Parameters placed on one tape, looked up by name.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ModelParams& params, bool requires_grad);
  // Binds the names of `params` to existing vars, in entry order.
  BoundParams(const ModelParams& params, std::span<const Var> vars);

  const Var& operator[](std::string_view name) const;
  std::span<const Var> vars() const noexcept { return vars_; }
  Tape& tape() const noexcept { return *tape_; }

 private:
  Tape* tape_;
  std::vector<Var> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Shared per-point MLP then max-pool over each part's points -> N x feature_dim.
Var encode_parts(std::span<const geo::PointCloud> parts, const BoundParams& p);

// All-ones at t = 0, otherwise sigmoid(f_rel([f_feat(T_i), f_feat(T_j)])).
Var attention_weights(const Var& poses, const BoundParams& p, std::size_t t);

// e[i, j] = f_edge([v_i, v_j]) -> N x N x feature_dim.
Var edge_messages(const Var& v, const BoundParams& p);

// m_i = sum_j w_ij e_ij / sum_j w_ij. Throws InvalidArgument for a row sum <= 0.
Var aggregate(const Var& e, const Var& w);

// [z, 0] as a 1 x hidden_dim constant.
Var init_hidden(Tape& tape, std::span<const double> z, const NetConfig& config);

enum class Direction { forward, reverse };
std::string_view direction_prefix(Direction d);

// One gated recurrent update. `x_proj` is the 1 x 3H input projection of r
// (reset, update, candidate blocks); `h` is 1 x H.
Var gru_step(const Var& x_proj, const Var& h, const BoundParams& p, Direction d);
// Convenience form taking the raw recurrent input r (1 x R).
Var gru_cell(const Var& r, const Var& h, const BoundParams& p, Direction d);

struct SweepOutput {
  Var a;  // N x H, a_i = state after consuming r_i going forward
  Var b;  // N x H, b_i = state after consuming r_i going backward
};
SweepOutput bidirectional_sweep(const Var& r, const Var& h_init, const BoundParams& p);

// v'_i = f_concat([a_i, b_i]).
Var fuse_directions(const Var& a, const Var& b, const BoundParams& p);

// f_pose([v', v0, T_prev]) with the quaternion block unit-normalized.
Var decode_pose(const Var& v_new, const Var& v0, const Var& prev_poses, const BoundParams& p);

struct ForwardResult {
  std::vector<Var> poses;      // one N x 7 set per iteration; the last is the prediction
  std::vector<Var> attention;  // N x N per iteration
};

// Runs every iteration from identity poses, starting from encoded features v0.
ForwardResult forward_features(const Var& v0, std::span<const double> z, const BoundParams& p,
                               const NetConfig& config);

// Throws unless there is at least one part and every part is non-empty and centred.
void validate_parts(std::span<const geo::PointCloud> parts);

// Encodes then runs forward_features. Parts must be centred (canonical).
ForwardResult forward(std::span<const geo::PointCloud> parts, std::span<const double> z, const BoundParams& p,
                      const NetConfig& config);

std::vector<geo::Pose> poses_from_tensor(const Tensor& poses);
Tensor poses_to_tensor(std::span<const geo::Pose> poses);

// Value-only prediction on a private tape: final-iteration poses.
std::vector<geo::Pose> predict(std::span<const geo::PointCloud> parts, std::span<const double> z,
                               const ModelParams& params, const NetConfig& config);

// Binary parameter archive: magic, format version, JSON header, raw little-endian doubles.
struct Checkpoint {
  NetConfig config;
  std::uint64_t seed = 0;
  ModelParams params;
  std::string metadata_json = "{}";  // run configuration echo
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace partasm::model
