#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ax/grid.hpp"
#include "ax/perception.hpp"
#include "ax/rng.hpp"

namespace ax {

enum class CommMode { None, Compressed, Perfect };

std::string to_string(CommMode mode);
CommMode comm_from_string(const std::string& name);

struct PolicyConfig {
  int S = 15;             // input side; padded up to a multiple of G
  int G = 5;
  int channels_out = 4;   // 1, 2 or 4
  int hidden = 8;         // decoder hidden channels
  int kernel_radius = 2;  // decoder receptive field on the G x G grid
  CommMode comm = CommMode::Compressed;

  int padded() const { return (S + G - 1) / G * G; }
  int alpha() const { return padded() / G; }
  void validate() const;
};

// 1 - 4G^2 / (7S^2)
double compression_ratio(int S, int G);

// Bytes a single decision puts on the wire.
std::size_t comm_bytes(const PolicyConfig& cfg);

// Block-average each channel of `info` down to a 7 x G^2 matrix (column = g = gy*G + gx).
Eigen::MatrixXd pool_local_info(const LocalInfo& info, const PolicyConfig& cfg);

// Center cell of goal-grid block `g`, clamped to the map.
Cell block_center(int g, const PolicyConfig& cfg, int width, int height);

// Per-channel running mean / variance over pooled inputs.
class FeatureNormalizer {
 public:
  FeatureNormalizer() { reset(); }
  void reset();
  void update(const Eigen::MatrixXd& pooled);
  void merge(const FeatureNormalizer& other);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& pooled) const;

  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& m2() const { return m2_; }
  void set(double count, const Eigen::VectorXd& mean, const Eigen::VectorXd& m2);

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

template <typename Scalar>
class McpPolicy {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  // Offsets of each block in the flat parameter vector.
  struct Layout {
    Eigen::Index we, be, wh, bh, wo, bo, wv, bv, total;
  };

  // One decision's inputs, already pooled and normalised (7 x G^2 each).
  struct Sample {
    Mat own;
    std::vector<Mat> peers;
    Mat critic;
  };

  struct Forward {
    Mat own_embed;
    std::vector<Mat> peer_embeds;
    Mat fused;
    Mat patches;
    Mat hidden;
    Vec logits;
    Vec probs;
    Mat critic_embed;
    Scalar value = 0;
  };

  explicit McpPolicy(const PolicyConfig& cfg);

  const PolicyConfig& config() const { return cfg_; }
  const Layout& layout() const { return layout_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  void init_orthogonal(std::uint64_t seed);

  Mat extract(const Mat& pooled) const;
  static Mat aggregate(const Mat& own, const std::vector<Mat>& peers);
  Vec logits(const Mat& fused) const;
  Vec distribution(const Mat& fused) const;
  Scalar value(const Mat& critic_embed) const;

  Forward forward(const Sample& s) const;

  // Accumulates dL/dparams into `grad` given dL/dlogits and dL/dvalue.
  void backward(const Sample& s, const Forward& f, const Vec& d_logits, Scalar d_value, Vec& grad) const;

 private:
  Mat im2col(const Mat& fused) const;
  void extract_backward(const Mat& pooled, const Mat& embed, const Mat& d_embed, Vec& grad) const;

  PolicyConfig cfg_;
  Layout layout_{};
  Vec params_;
};

using Policy = McpPolicy<double>;

// Sample a block index from `probs`.
int sample_index(const Eigen::VectorXd& probs, Rng& rng);

// Sample a goal block and map it to a map cell.
Cell sample_goal(const Eigen::VectorXd& probs, Rng& rng, const PolicyConfig& cfg, int width, int height);

struct Checkpoint {
  PolicyConfig config;
  Eigen::VectorXd params;
  FeatureNormalizer normalizer;
  std::int64_t steps = 0;
  int batch = 0;
  Eigen::VectorXd adam_m;
  Eigen::VectorXd adam_v;
  std::int64_t adam_t = 0;
  double reward_count = 0.0;  // running reward-scale statistics
  double reward_mean = 0.0;
  double reward_m2 = 0.0;
};

// `<stem>.bin` (flat little-endian float32 params), `<stem>.json` (layout, normaliser,
// counters) and `<stem>.opt.bin` (Adam moments) when present.
void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

}  // namespace ax
