#include "ax/policy.hpp"

#include <cmath>
#include <utility>
#include <vector>
#include <fstream>

#include <Eigen/QR>
#include <json.hpp>

#include "ax/error.hpp"
#include "binary_io.hpp"

namespace ax {

std::string to_string(CommMode mode) {
  switch (mode) {
    case CommMode::None: return "none";
    case CommMode::Compressed: return "compressed";
    case CommMode::Perfect: return "perfect";
  }
  return "unknown";
}

CommMode comm_from_string(const std::string& name) {
  for (CommMode m : {CommMode::None, CommMode::Compressed, CommMode::Perfect})
    if (to_string(m) == name) return m;
  throw Error(ErrorKind::Config, "unknown comm mode '" + name + "'");
}

void PolicyConfig::validate() const {
  if (G < 1 || S < G) throw Error(ErrorKind::Config, "policy needs S >= G >= 1");
  if (channels_out != 1 && channels_out != 2 && channels_out != 4)
    throw Error(ErrorKind::Config, "channels_out must be 1, 2 or 4");
  if (hidden < 1 || kernel_radius < 0) throw Error(ErrorKind::Config, "bad decoder shape");
}

double compression_ratio(int S, int G) {
  if (S < G || G < 1) throw Error(ErrorKind::Config, "compression_ratio needs S >= G >= 1");
  return 1.0 - 4.0 * G * G / (7.0 * S * S);
}

std::size_t comm_bytes(const PolicyConfig& cfg) {
  switch (cfg.comm) {
    case CommMode::None: return 0;
    case CommMode::Compressed: return static_cast<std::size_t>(cfg.G * cfg.G * cfg.channels_out) * 4;
    case CommMode::Perfect: return static_cast<std::size_t>(cfg.S * cfg.S * kChannelCount) * 4;
  }
  return 0;
}

Eigen::MatrixXd pool_local_info(const LocalInfo& info, const PolicyConfig& cfg) {
  const int G = cfg.G, a = cfg.alpha(), S = info.size();
  if (S > cfg.padded()) throw Error(ErrorKind::Config, "local info larger than policy input");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kChannelCount, G * G);
  for (int c = 0; c < kChannelCount; ++c) {
    const auto ch = info.channel(c);
    for (int gy = 0; gy < G; ++gy) {
      for (int gx = 0; gx < G; ++gx) {
        const int y0 = gy * a, x0 = gx * a;
        const int h = std::max(0, std::min(a, S - y0)), w = std::max(0, std::min(a, S - x0));
        if (h > 0 && w > 0) out(c, gy * G + gx) = ch.block(y0, x0, h, w).sum() / (a * a);
      }
    }
  }
  return out;
}

Cell block_center(int g, const PolicyConfig& cfg, int width, int height) {
  const int a = cfg.alpha();
  const int gx = g % cfg.G, gy = g / cfg.G;
  return {std::clamp(gx * a + a / 2, 0, width - 1), std::clamp(gy * a + a / 2, 0, height - 1)};
}

void FeatureNormalizer::reset() {
  count_ = 0.0;
  mean_ = Eigen::VectorXd::Zero(kChannelCount);
  m2_ = Eigen::VectorXd::Zero(kChannelCount);
}

void FeatureNormalizer::update(const Eigen::MatrixXd& pooled) {
  FeatureNormalizer batch;
  const double n = static_cast<double>(pooled.cols());
  batch.count_ = n;
  batch.mean_ = pooled.rowwise().mean();
  batch.m2_ = (pooled.colwise() - batch.mean_).array().square().rowwise().sum().matrix();
  merge(batch);
}

void FeatureNormalizer::merge(const FeatureNormalizer& o) {
  if (o.count_ == 0.0) return;
  const double n = count_ + o.count_;
  const Eigen::VectorXd delta = o.mean_ - mean_;
  mean_ += delta * (o.count_ / n);
  m2_ += o.m2_ + delta.array().square().matrix() * (count_ * o.count_ / n);
  count_ = n;
}

Eigen::MatrixXd FeatureNormalizer::apply(const Eigen::MatrixXd& pooled) const {
  if (count_ < 2.0) return pooled;
  const Eigen::ArrayXd inv_std = ((m2_.array() / count_) + 1e-8).rsqrt();
  return ((pooled.colwise() - mean_).array().colwise() * inv_std).matrix();
}

void FeatureNormalizer::set(double count, const Eigen::VectorXd& mean, const Eigen::VectorXd& m2) {
  if (mean.size() != kChannelCount || m2.size() != kChannelCount)
    throw Error(ErrorKind::Config, "normalizer width mismatch");
  count_ = count;
  mean_ = mean;
  m2_ = m2;
}

template <typename Scalar>
McpPolicy<Scalar>::McpPolicy(const PolicyConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const Eigen::Index C = cfg_.channels_out, G2 = cfg_.G * cfg_.G, H = cfg_.hidden;
  const Eigen::Index K = 2 * cfg_.kernel_radius + 1;
  Eigen::Index at = 0;
  auto take = [&at](Eigen::Index n) {
    const Eigen::Index o = at;
    at += n;
    return o;
  };
  layout_.we = take(C * kChannelCount);
  layout_.be = take(C);
  layout_.wh = take(H * 2 * C * K * K);
  layout_.bh = take(H);
  layout_.wo = take(H);
  layout_.bo = take(G2);
  layout_.wv = take(C * G2);
  layout_.bv = take(1);
  layout_.total = at;
  params_ = Vec::Zero(layout_.total);
}

template <typename Scalar>
void McpPolicy<Scalar>::init_orthogonal(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  params_.setZero();
  auto ortho = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols, double gain) {
    const Eigen::Index big = std::max(rows, cols), small = std::min(rows, cols);
    Eigen::MatrixXd a(big, small);
    for (Eigen::Index j = 0; j < small; ++j)
      for (Eigen::Index i = 0; i < big; ++i) a(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    // sign fix so the draw is uniform over orthogonal matrices
    const Eigen::VectorXd d = qr.matrixQR().diagonal();
    for (Eigen::Index j = 0; j < small; ++j)
      if (d(j) < 0) q.col(j) *= -1.0;
    Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
    MatMap(params_.data() + offset, rows, cols) = (gain * w).template cast<Scalar>();
  };
  const Eigen::Index C = cfg_.channels_out, G2 = cfg_.G * cfg_.G, H = cfg_.hidden;
  const Eigen::Index K = 2 * cfg_.kernel_radius + 1;
  ortho(layout_.we, C, kChannelCount, 1.0);
  ortho(layout_.wh, H, 2 * C * K * K, 1.0);
  ortho(layout_.wo, 1, H, 0.01);
  ortho(layout_.wv, 1, C * G2, 1.0);
}

template <typename Scalar>
typename McpPolicy<Scalar>::Mat McpPolicy<Scalar>::extract(const Mat& pooled) const {
  const Eigen::Index C = cfg_.channels_out;
  ConstMatMap we(params_.data() + layout_.we, C, kChannelCount);
  Eigen::Map<const Vec> be(params_.data() + layout_.be, C);
  return ((we * pooled).colwise() + be).array().tanh().matrix();
}

namespace {

// Correctly rounded sum (Shewchuk partials, as in Python's fsum). The result
// does not depend on the order of `xs`, and doubling every term doubles it
// exactly, so the peer mean is exactly permutation- and duplication-invariant.
template <typename Scalar>
Scalar exact_sum(std::vector<Scalar>& xs) {
  std::vector<Scalar> partials;
  for (Scalar x : xs) {
    std::size_t i = 0;
    for (Scalar y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const Scalar hi = x + y;
      const Scalar lo = y - (hi - x);
      if (lo != 0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  std::size_t n = partials.size();
  if (n == 0) return 0;
  Scalar hi = partials[--n], lo = 0;
  while (n > 0) {
    const Scalar x = hi, y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0) break;
  }
  // half-way case: round to even using the sign of the next partial
  if (n > 0 && ((lo < 0 && partials[n - 1] < 0) || (lo > 0 && partials[n - 1] > 0))) {
    const Scalar y = lo * 2, x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace

template <typename Scalar>
typename McpPolicy<Scalar>::Mat McpPolicy<Scalar>::aggregate(const Mat& own, const std::vector<Mat>& peers) {
  Mat fused = Mat::Zero(2 * own.rows(), own.cols());
  fused.topRows(own.rows()) = own;
  if (peers.empty()) return fused;
  const Scalar k = static_cast<Scalar>(peers.size());
  std::vector<Scalar> terms(peers.size());
  for (Eigen::Index c = 0; c < own.cols(); ++c)
    for (Eigen::Index r = 0; r < own.rows(); ++r) {
      for (std::size_t i = 0; i < peers.size(); ++i) terms[i] = peers[i](r, c);
      fused(own.rows() + r, c) = exact_sum(terms) / k;
    }
  return fused;
}

template <typename Scalar>
typename McpPolicy<Scalar>::Mat McpPolicy<Scalar>::im2col(const Mat& fused) const {
  const int G = cfg_.G, R = cfg_.kernel_radius, K = 2 * R + 1;
  const Eigen::Index F = fused.rows();
  Mat x = Mat::Zero(F * K * K, G * G);
  for (int gy = 0; gy < G; ++gy) {
    for (int gx = 0; gx < G; ++gx) {
      for (int dy = -R; dy <= R; ++dy) {
        for (int dx = -R; dx <= R; ++dx) {
          const int sy = gy + dy, sx = gx + dx;
          if (sy < 0 || sx < 0 || sy >= G || sx >= G) continue;
          const int k = (dy + R) * K + (dx + R);
          x.block(k * F, gy * G + gx, F, 1) = fused.col(sy * G + sx);
        }
      }
    }
  }
  return x;
}

template <typename Scalar>
typename McpPolicy<Scalar>::Vec McpPolicy<Scalar>::logits(const Mat& fused) const {
  const Eigen::Index H = cfg_.hidden, G2 = cfg_.G * cfg_.G;
  const Mat x = im2col(fused);
  ConstMatMap wh(params_.data() + layout_.wh, H, x.rows());
  Eigen::Map<const Vec> bh(params_.data() + layout_.bh, H);
  Eigen::Map<const Vec> wo(params_.data() + layout_.wo, H);
  Eigen::Map<const Vec> bo(params_.data() + layout_.bo, G2);
  const Mat hidden = ((wh * x).colwise() + bh).array().tanh().matrix();
  return hidden.transpose() * wo + bo;
}

namespace {

template <typename V>
V softmax(const V& z) {
  V e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace

template <typename Scalar>
typename McpPolicy<Scalar>::Vec McpPolicy<Scalar>::distribution(const Mat& fused) const {
  return softmax(logits(fused));
}

template <typename Scalar>
Scalar McpPolicy<Scalar>::value(const Mat& critic_embed) const {
  Eigen::Map<const Vec> wv(params_.data() + layout_.wv, critic_embed.size());
  return wv.dot(Eigen::Map<const Vec>(critic_embed.data(), critic_embed.size())) + params_(layout_.bv);
}

template <typename Scalar>
typename McpPolicy<Scalar>::Forward McpPolicy<Scalar>::forward(const Sample& s) const {
  Forward f;
  f.own_embed = extract(s.own);
  for (const auto& p : s.peers) f.peer_embeds.push_back(extract(p));
  f.fused = aggregate(f.own_embed, f.peer_embeds);
  f.patches = im2col(f.fused);
  const Eigen::Index H = cfg_.hidden, G2 = cfg_.G * cfg_.G;
  ConstMatMap wh(params_.data() + layout_.wh, H, f.patches.rows());
  Eigen::Map<const Vec> bh(params_.data() + layout_.bh, H);
  Eigen::Map<const Vec> wo(params_.data() + layout_.wo, H);
  Eigen::Map<const Vec> bo(params_.data() + layout_.bo, G2);
  f.hidden = ((wh * f.patches).colwise() + bh).array().tanh().matrix();
  f.logits = f.hidden.transpose() * wo + bo;
  f.probs = softmax(f.logits);
  f.critic_embed = extract(s.critic);
  f.value = value(f.critic_embed);
  return f;
}

template <typename Scalar>
void McpPolicy<Scalar>::extract_backward(const Mat& pooled, const Mat& embed, const Mat& d_embed, Vec& grad) const {
  const Eigen::Index C = cfg_.channels_out;
  const Mat dz = (d_embed.array() * (Scalar(1) - embed.array().square())).matrix();
  MatMap(grad.data() + layout_.we, C, kChannelCount) += dz * pooled.transpose();
  Eigen::Map<Vec>(grad.data() + layout_.be, C) += dz.rowwise().sum();
}

template <typename Scalar>
void McpPolicy<Scalar>::backward(const Sample& s, const Forward& f, const Vec& d_logits, Scalar d_value,
                                 Vec& grad) const {
  const int G = cfg_.G, R = cfg_.kernel_radius, K = 2 * R + 1;
  const Eigen::Index C = cfg_.channels_out, H = cfg_.hidden, G2 = G * G, F = 2 * C;
  if (grad.size() != layout_.total) grad = Vec::Zero(layout_.total);

  ConstMatMap wh(params_.data() + layout_.wh, H, f.patches.rows());
  Eigen::Map<const Vec> wo(params_.data() + layout_.wo, H);

  Eigen::Map<Vec>(grad.data() + layout_.wo, H) += f.hidden * d_logits;
  Eigen::Map<Vec>(grad.data() + layout_.bo, G2) += d_logits;
  const Mat d_pre = ((wo * d_logits.transpose()).array() * (Scalar(1) - f.hidden.array().square())).matrix();
  MatMap(grad.data() + layout_.wh, H, f.patches.rows()) += d_pre * f.patches.transpose();
  Eigen::Map<Vec>(grad.data() + layout_.bh, H) += d_pre.rowwise().sum();
  const Mat d_x = wh.transpose() * d_pre;

  Mat d_fused = Mat::Zero(F, G2);
  for (int gy = 0; gy < G; ++gy) {
    for (int gx = 0; gx < G; ++gx) {
      for (int dy = -R; dy <= R; ++dy) {
        for (int dx = -R; dx <= R; ++dx) {
          const int sy = gy + dy, sx = gx + dx;
          if (sy < 0 || sx < 0 || sy >= G || sx >= G) continue;
          const int k = (dy + R) * K + (dx + R);
          d_fused.col(sy * G + sx) += d_x.block(k * F, gy * G + gx, F, 1);
        }
      }
    }
  }
  extract_backward(s.own, f.own_embed, d_fused.topRows(C), grad);
  if (!s.peers.empty()) {
    const Mat d_peer = d_fused.bottomRows(C) / static_cast<Scalar>(s.peers.size());
    for (std::size_t i = 0; i < s.peers.size(); ++i) extract_backward(s.peers[i], f.peer_embeds[i], d_peer, grad);
  }

  if (d_value != Scalar(0)) {
    Eigen::Map<Vec>(grad.data() + layout_.wv, C * G2) +=
        Eigen::Map<const Vec>(f.critic_embed.data(), C * G2) * d_value;
    grad(layout_.bv) += d_value;
    const Mat d_critic = ConstMatMap(params_.data() + layout_.wv, C, G2) * d_value;
    extract_backward(s.critic, f.critic_embed, d_critic, grad);
  }
}

template class McpPolicy<double>;
template class McpPolicy<long double>;

int sample_index(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = uniform_real(rng, 0.0, 1.0);
  double acc = 0.0;
  int last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    last = static_cast<int>(i);
    acc += probs(i);
    if (u < acc) return last;
  }
  return last;
}

Cell sample_goal(const Eigen::VectorXd& probs, Rng& rng, const PolicyConfig& cfg, int width, int height) {
  return block_center(sample_index(probs, rng), cfg, width, height);
}

namespace {

void write_f32_vector(const std::filesystem::path& path, const Eigen::VectorXd& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (Eigen::Index i = 0; i < v.size(); ++i) detail::write_f32_le(out, static_cast<float>(v(i)));
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

Eigen::VectorXd read_f32_vector(const std::filesystem::path& path, Eigen::Index n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = detail::read_f32_le(in);
  if (in.peek() != std::ifstream::traits_type::eof())
    throw Error(ErrorKind::Io, path.string() + ": trailing bytes");
  return v;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.string() + suffix;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ck) {
  const Policy shape(ck.config);
  const auto& l = shape.layout();
  if (ck.params.size() != l.total) throw Error(ErrorKind::Config, "checkpoint params do not match layout");
  write_f32_vector(with_suffix(stem, ".bin"), ck.params);
  const bool has_opt = ck.adam_m.size() == l.total && ck.adam_v.size() == l.total;
  if (has_opt) {
    Eigen::VectorXd both(2 * l.total);
    both << ck.adam_m, ck.adam_v;
    write_f32_vector(with_suffix(stem, ".opt.bin"), both);
  }
  nlohmann::json j;
  j["format"] = "f32le";
  j["S"] = ck.config.S;
  j["G"] = ck.config.G;
  j["channels_out"] = ck.config.channels_out;
  j["hidden"] = ck.config.hidden;
  j["kernel_radius"] = ck.config.kernel_radius;
  j["comm"] = to_string(ck.config.comm);
  j["layout"] = {{"we", l.we}, {"be", l.be}, {"wh", l.wh}, {"bh", l.bh}, {"wo", l.wo},
                 {"bo", l.bo}, {"wv", l.wv}, {"bv", l.bv}, {"total", l.total}};
  const auto& n = ck.normalizer;
  j["normalizer"] = {{"count", n.count()},
                     {"mean", std::vector<double>(n.mean().data(), n.mean().data() + n.mean().size())},
                     {"m2", std::vector<double>(n.m2().data(), n.m2().data() + n.m2().size())}};
  j["steps"] = ck.steps;
  j["batch"] = ck.batch;
  j["adam_t"] = ck.adam_t;
  j["reward_scale"] = {ck.reward_count, ck.reward_mean, ck.reward_m2};
  j["optimizer"] = has_opt;
  std::ofstream out(with_suffix(stem, ".json"));
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint sidecar");
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream in(with_suffix(stem, ".json"));
  if (!in) throw Error(ErrorKind::Io, "cannot read " + with_suffix(stem, ".json").string());
  Checkpoint ck;
  try {
    const auto j = nlohmann::json::parse(in);
    ck.config.S = j.at("S").get<int>();
    ck.config.G = j.at("G").get<int>();
    ck.config.channels_out = j.at("channels_out").get<int>();
    ck.config.hidden = j.at("hidden").get<int>();
    ck.config.kernel_radius = j.at("kernel_radius").get<int>();
    ck.config.comm = comm_from_string(j.at("comm").get<std::string>());
    const auto& nj = j.at("normalizer");
    const auto mean = nj.at("mean").get<std::vector<double>>();
    const auto m2 = nj.at("m2").get<std::vector<double>>();
    ck.normalizer.set(nj.at("count").get<double>(), Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size()),
                      Eigen::Map<const Eigen::VectorXd>(m2.data(), m2.size()));
    ck.steps = j.at("steps").get<std::int64_t>();
    ck.batch = j.at("batch").get<int>();
    ck.adam_t = j.at("adam_t").get<std::int64_t>();
    if (j.contains("reward_scale")) {
      const auto rs = j.at("reward_scale").get<std::vector<double>>();
      if (rs.size() != 3) throw Error(ErrorKind::Config, "checkpoint reward_scale must have 3 entries");
      ck.reward_count = rs[0];
      ck.reward_mean = rs[1];
      ck.reward_m2 = rs[2];
    }
    const Policy shape(ck.config);
    const auto total = shape.layout().total;
    if (j.at("layout").at("total").get<Eigen::Index>() != total)
      throw Error(ErrorKind::Config, "checkpoint layout does not match its config");
    ck.params = read_f32_vector(with_suffix(stem, ".bin"), total);
    if (j.at("optimizer").get<bool>()) {
      const Eigen::VectorXd both = read_f32_vector(with_suffix(stem, ".opt.bin"), 2 * total);
      ck.adam_m = both.head(total);
      ck.adam_v = both.tail(total);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("checkpoint sidecar: ") + e.what());
  }
  return ck;
}

}  // namespace ax
