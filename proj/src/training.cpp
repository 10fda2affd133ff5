#include "ax/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "ax/error.hpp"

namespace ax {

double accumulate_macro_reward(const std::vector<RewardSample>& rewards, double gamma) {
  double total = 0.0;
  for (const auto& r : rewards) total += std::pow(gamma, r.offset) * r.reward;
  return total;
}

void cache_push(TransitionCache& cache, MacroTransition t) { cache.push_back(std::move(t)); }

void flush_caches(std::vector<TransitionCache>& caches, ReplayBuffer& buffer) {
  for (auto& cache : caches) {
    if (cache.empty()) continue;
    buffer.segment_starts.push_back(buffer.items.size());
    if (!cache.back().terminal && !cache.back().has_next) ++buffer.incomplete;
    for (auto& t : cache) buffer.items.push_back(std::move(t));
    cache.clear();
  }
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<int>& steps, double gamma, double lambda, double bootstrap_value) {
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value, next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double discount = std::pow(gamma, steps[k]);
    const double delta = rewards[k] + discount * next_value - values[k];
    const double adv = delta + std::pow(gamma * lambda, steps[k]) * next_adv;
    out.advantages[k] = adv;
    out.returns[k] = adv + values[k];
    next_value = values[k];
    next_adv = adv;
  }
  return out;
}

void RewardScaler::update(double r) {
  n_ += 1.0;
  const double d = r - mean_;
  mean_ += d / n_;
  m2_ += d * (r - mean_);
}

double RewardScaler::scale(double r) const {
  if (n_ < 2.0) return r;
  const double sd = std::sqrt(m2_ / n_);
  return sd > 1e-8 ? r / sd : r;
}

void compute_advantages(ReplayBuffer& buffer, const TrainHyper& hyper, RewardScaler* scaler) {
  const std::size_t n = buffer.items.size();
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  const bool scale = hyper.reward_normalization && scaler != nullptr;
  if (scale)
    for (const auto& t : buffer.items) scaler->update(t.reward);

  for (std::size_t s = 0; s < buffer.segment_starts.size(); ++s) {
    const std::size_t lo = buffer.segment_starts[s];
    const std::size_t hi = s + 1 < buffer.segment_starts.size() ? buffer.segment_starts[s + 1] : n;
    std::vector<double> rewards, values;
    std::vector<int> steps;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& t = buffer.items[i];
      rewards.push_back(scale ? scaler->scale(t.reward) : t.reward);
      values.push_back(t.value);
      steps.push_back(hyper.per_macro_discount ? 1 : std::max(1, t.steps));
    }
    const auto& last = buffer.items[hi - 1];
    const GaeResult g =
        compute_gae(rewards, values, steps, hyper.gamma, hyper.gae_lambda, last.terminal ? 0.0 : last.bootstrap);
    std::copy(g.advantages.begin(), g.advantages.end(), buffer.advantages.begin() + static_cast<long>(lo));
    std::copy(g.returns.begin(), g.returns.end(), buffer.returns.begin() + static_cast<long>(lo));
  }

  if (n > 1) {
    const double mean = std::accumulate(buffer.advantages.begin(), buffer.advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : buffer.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : buffer.advantages) a = (a - mean) / (sd + 1e-8);
  }
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr, double eps, double weight_decay) {
  constexpr double b1 = 0.9, b2 = 0.999;
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    t = 0;
  }
  ++t;
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  if (weight_decay != 0.0) params -= lr * weight_decay * params;
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

namespace {

template <typename Scalar>
typename McpPolicy<Scalar>::Sample cast_sample(const Policy::Sample& s) {
  typename McpPolicy<Scalar>::Sample out;
  out.own = s.own.cast<Scalar>();
  for (const auto& p : s.peers) out.peers.push_back(p.cast<Scalar>());
  out.critic = s.critic.cast<Scalar>();
  return out;
}

template <typename V>
V log_softmax(const V& z) {
  using S = typename V::Scalar;
  const S m = z.maxCoeff();
  const S lse = m + std::log((z.array() - m).exp().sum());
  return (z.array() - lse).matrix();
}

}  // namespace

template <typename Scalar>
Scalar ppo_loss(const McpPolicy<Scalar>& policy, const ReplayBuffer& buffer, const std::vector<std::size_t>& idx,
                const TrainHyper& hyper, typename McpPolicy<Scalar>::Vec* grad, LossReport* report) {
  using Vec = typename McpPolicy<Scalar>::Vec;
  const Scalar n = static_cast<Scalar>(idx.size());
  const Scalar eps = static_cast<Scalar>(hyper.clip_eps), delta = static_cast<Scalar>(hyper.huber_delta);
  const Scalar cv = static_cast<Scalar>(hyper.value_coef), ce = static_cast<Scalar>(hyper.entropy_coef);
  if (grad) *grad = Vec::Zero(policy.layout().total);
  Scalar total = 0, pol_sum = 0, val_sum = 0, ent_sum = 0;
  for (std::size_t i : idx) {
    const MacroTransition& t = buffer.items[i];
    const auto sample = cast_sample<Scalar>(t.obs);
    const auto f = policy.forward(sample);
    const Vec logp = log_softmax(f.logits);
    const Scalar adv = static_cast<Scalar>(buffer.advantages[i]);
    const Scalar ratio = std::exp(logp(t.action) - static_cast<Scalar>(t.log_prob));
    const Scalar s1 = ratio * adv;
    const Scalar s2 = std::clamp(ratio, Scalar(1) - eps, Scalar(1) + eps) * adv;
    const Scalar pol = -std::min(s1, s2);
    const Scalar ent = -(f.probs.array() * logp.array()).sum();
    const Scalar diff = f.value - static_cast<Scalar>(buffer.returns[i]);
    const Scalar ad = std::abs(diff);
    const Scalar vloss = ad <= delta ? Scalar(0.5) * diff * diff : delta * (ad - Scalar(0.5) * delta);
    total += pol + cv * vloss - ce * ent;
    pol_sum += pol;
    val_sum += vloss;
    ent_sum += ent;
    if (grad) {
      const Scalar d_logp = s1 <= s2 ? -ratio * adv : Scalar(0);
      Vec d_logits = -d_logp * f.probs;
      d_logits(t.action) += d_logp;
      // d(entropy)/d(logit_j) = -p_j (log p_j + H)
      const Vec d_ent = (-(f.probs.array() * (logp.array() + ent))).matrix();
      d_logits -= ce * d_ent;
      const Scalar d_value = diff > delta ? delta : diff < -delta ? -delta : diff;
      policy.backward(sample, f, d_logits / n, cv * d_value / n, *grad);
    }
  }
  if (report) {
    report->policy_loss = static_cast<double>(pol_sum / n);
    report->value_loss = static_cast<double>(val_sum / n);
    report->entropy = static_cast<double>(ent_sum / n);
  }
  return total / n;
}

template double ppo_loss<double>(const McpPolicy<double>&, const ReplayBuffer&, const std::vector<std::size_t>&,
                                 const TrainHyper&, McpPolicy<double>::Vec*, LossReport*);
template long double ppo_loss<long double>(const McpPolicy<long double>&, const ReplayBuffer&,
                                           const std::vector<std::size_t>&, const TrainHyper&,
                                           McpPolicy<long double>::Vec*, LossReport*);

LossReport ppo_update(Policy& policy, Adam& adam, const ReplayBuffer& buffer, const TrainHyper& hyper, Rng& rng) {
  if (buffer.items.empty()) throw Error(ErrorKind::Config, "ppo_update on an empty buffer");
  const Eigen::VectorXd saved_params = policy.params();
  const Adam saved_adam = adam;
  std::vector<std::size_t> order(buffer.items.size());
  std::iota(order.begin(), order.end(), 0);
  const int mbs = std::max(1, hyper.minibatches);
  LossReport sum;
  int updates = 0;
  for (int epoch = 0; epoch < hyper.ppo_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t per = (order.size() + static_cast<std::size_t>(mbs) - 1) / static_cast<std::size_t>(mbs);
    for (std::size_t lo = 0; lo < order.size(); lo += per) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(lo),
                                         order.begin() + static_cast<long>(std::min(order.size(), lo + per)));
      Eigen::VectorXd grad;
      LossReport rep;
      const double loss = ppo_loss(policy, buffer, idx, hyper, &grad, &rep);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        policy.params() = saved_params;
        adam = saved_adam;
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": loss or gradient not finite");
      }
      rep.grad_norm = grad.norm();
      if (rep.grad_norm > hyper.grad_clip_norm) grad *= hyper.grad_clip_norm / rep.grad_norm;
      adam.step(policy.params(), grad, hyper.lr, hyper.adam_eps, hyper.weight_decay);
      sum.policy_loss += rep.policy_loss;
      sum.value_loss += rep.value_loss;
      sum.entropy += rep.entropy;
      sum.grad_norm += rep.grad_norm;
      ++updates;
    }
  }
  if (updates > 0) {
    sum.policy_loss /= updates;
    sum.value_loss /= updates;
    sum.entropy /= updates;
    sum.grad_norm /= updates;
  }
  return sum;
}

Cell refine_goal(const World& world, int block, const PolicyConfig& cfg) {
  const int w = world.map.width(), h = world.map.height(), a = cfg.alpha();
  const Cell center = block_center(block, cfg, w, h);
  const int x0 = (block % cfg.G) * a, y0 = (block / cfg.G) * a;
  std::optional<Cell> best;
  auto d2 = [center](Cell c) { return (c.x - center.x) * (c.x - center.x) + (c.y - center.y) * (c.y - center.y); };
  for (const Cell& c : frontier_cells(world.known)) {
    if (c.x < x0 || c.y < y0 || c.x >= x0 + a || c.y >= y0 + a) continue;
    if (!best || d2(c) < d2(*best)) best = c;  // frontier list is row-major, so ties keep the first
  }
  return best ? *best : center;
}

PolicySource::PolicySource(const Policy& policy, const FeatureNormalizer& normalizer, const TrainHyper& hyper,
                           bool collect, int episode)
    : policy_(policy), normalizer_(normalizer), hyper_(hyper), collect_(collect), episode_(episode) {}

Policy::Sample PolicySource::observe(const World& world, int agent, const PolicyConfig& cfg) {
  const int S = cfg.S;
  const auto poses = world.poses();
  const auto alive = world.alive();
  const auto& pose = poses[static_cast<std::size_t>(agent)];
  auto prep = [this](const Eigen::MatrixXd& raw) {
    return hyper_.feature_normalization ? normalizer_.apply(raw) : raw;
  };
  Policy::Sample s;
  const Eigen::MatrixXd merged = pool_local_info(build_merged_local_info(world.map, world.exploration, poses, alive, S), cfg);
  Eigen::MatrixXd own;
  if (cfg.comm == CommMode::Perfect) {
    own = merged;
  } else {
    own = pool_local_info(build_local_info(world.map, world.exploration, pose, agent, S), cfg);
  }
  if (collect_) observed_.update(own);
  s.own = prep(own);
  if (cfg.comm == CommMode::Compressed) {
    for (int w = 0; w < world.agent_count(); ++w) {
      if (w == agent || !alive[static_cast<std::size_t>(w)]) continue;
      s.peers.push_back(prep(pool_local_info(
          build_local_info(world.map, world.exploration, poses[static_cast<std::size_t>(w)], w, S), cfg)));
    }
  }
  s.critic = prep(merged);
  return s;
}

void PolicySource::close_pending(int agent, const MacroOutcome& outcome, bool terminal,
                                 std::optional<double> next_value) {
  auto& slot = pending_[static_cast<std::size_t>(agent)];
  if (!slot) return;
  MacroTransition t = std::move(*slot);
  slot.reset();
  t.reward = accumulate_macro_reward(outcome.rewards, hyper_.gamma);
  t.steps = outcome.steps;
  t.terminal = terminal;
  t.has_next = next_value.has_value() && !terminal;
  t.bootstrap = next_value.value_or(0.0);
  cache_push(caches_[static_cast<std::size_t>(agent)], std::move(t));
}

Decision PolicySource::decide(const World& world, const DecisionRequest& req) {
  const auto n = static_cast<std::size_t>(world.agent_count());
  if (caches_.size() < n) {
    caches_.resize(n);
    pending_.resize(n);
  }
  PolicyConfig cfg = policy_.config();
  cfg.S = std::max(world.map.width(), world.map.height());
  Policy::Sample obs = observe(world, req.agent, cfg);
  const auto f = policy_.forward(obs);
  Rng rng(derive_seed(world.seeds.decision, static_cast<std::uint64_t>(req.agent),
                      static_cast<std::uint64_t>(req.macro_index)));
  const int action = sample_index(f.probs, rng);
  const Cell goal = refine_goal(world, action, cfg);
  if (collect_) {
    if (req.previous) {
      // the successor observation of the pending macro is this one
      close_pending(req.agent, *req.previous, false, f.value);
    }
    MacroTransition t;
    t.action = action;
    t.goal = goal;
    t.value = f.value;
    t.log_prob = log_softmax(f.logits)(action);
    t.agent = req.agent;
    t.episode = episode_;
    t.index = req.macro_index;
    t.obs = std::move(obs);
    pending_[static_cast<std::size_t>(req.agent)] = std::move(t);
  }
  return {goal, comm_bytes(cfg)};
}

void PolicySource::finish(const World& world, const FinishRequest& req) {
  if (!collect_ || static_cast<std::size_t>(req.agent) >= pending_.size()) return;
  if (!pending_[static_cast<std::size_t>(req.agent)]) return;
  if (req.terminal) {
    close_pending(req.agent, req.last, true, std::nullopt);
    return;
  }
  PolicyConfig cfg = policy_.config();
  cfg.S = std::max(world.map.width(), world.map.height());
  const bool was = collect_;
  collect_ = false;  // bootstrap observation does not feed the normaliser
  const Policy::Sample obs = observe(world, req.agent, cfg);
  collect_ = was;
  const double v = policy_.value(policy_.extract(obs.critic));
  auto& slot = pending_[static_cast<std::size_t>(req.agent)];
  slot->has_next = false;
  MacroTransition t = std::move(*slot);
  slot.reset();
  t.reward = accumulate_macro_reward(req.last.rewards, hyper_.gamma);
  t.steps = req.last.steps;
  t.terminal = false;
  t.bootstrap = v;
  cache_push(caches_[static_cast<std::size_t>(req.agent)], std::move(t));
}

Decision RandomGoalSource::decide(const World& world, const DecisionRequest& req) {
  PolicyConfig cfg = cfg_;
  cfg.S = std::max(world.map.width(), world.map.height());
  Rng rng(derive_seed(world.seeds.decision, static_cast<std::uint64_t>(req.agent),
                      static_cast<std::uint64_t>(req.macro_index)));
  const int block = uniform_int(rng, 0, cfg.G * cfg.G - 1);
  return {refine_goal(world, block, cfg), 0};
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<EpisodeResult> run_episodes(const EpisodeConfig& base, int episodes, std::uint64_t seed,
                                        const SourceFactory& factory, int jobs) {
  std::vector<EpisodeResult> out(static_cast<std::size_t>(episodes));
  parallel_for(episodes, jobs, [&](int i) {
    EpisodeConfig cfg = base;
    cfg.seed = derive_seed(seed, 0, static_cast<std::uint64_t>(i));
    auto source = factory(i);
    out[static_cast<std::size_t>(i)] = run_episode(cfg, *source);
  });
  return out;
}

void write_curves_csv(std::ostream& out, const std::vector<CurveRow>& rows, bool header) {
  if (header) out << kCurvesHeader << '\n';
  const auto old = out.precision(10);
  for (const auto& r : rows)
    out << r.batch << ',' << r.steps << ',' << r.mean_time << ',' << r.mean_acs << ',' << r.policy_loss << ','
        << r.value_loss << ',' << r.entropy << ',' << r.grad_norm << '\n';
  out.precision(old);
}

namespace {

int map_side(const EpisodeConfig& c) {
  if (c.fixed_map) return std::max(c.fixed_map->width(), c.fixed_map->height());
  return std::max(c.map.width, c.map.height);
}

std::vector<EpisodeMetrics> evaluate(const Policy& policy, const FeatureNormalizer& norm, const TrainHyper& hyper,
                                     const EpisodeConfig& base, int episodes, std::uint64_t seed, int jobs) {
  const auto results = run_episodes(
      base, episodes, seed,
      [&](int i) { return std::make_unique<PolicySource>(policy, norm, hyper, false, i); }, jobs);
  std::vector<EpisodeMetrics> m;
  for (const auto& r : results) m.push_back(episode_metrics(r, base.t_max, base.reward.success_threshold));
  return m;
}

Checkpoint make_checkpoint(const Policy& policy, const FeatureNormalizer& norm, const Adam& adam,
                           const RewardScaler& scaler, std::int64_t steps, int batch) {
  Checkpoint ck;
  ck.config = policy.config();
  ck.params = policy.params();
  ck.normalizer = norm;
  ck.steps = steps;
  ck.batch = batch;
  ck.adam_m = adam.m;
  ck.adam_v = adam.v;
  ck.adam_t = adam.t;
  ck.reward_count = scaler.count();
  ck.reward_mean = scaler.mean();
  ck.reward_m2 = scaler.m2();
  return ck;
}

}  // namespace

std::vector<EpisodeMetrics> evaluate_policy(const Checkpoint& ck, const EpisodeConfig& base, int episodes,
                                            std::uint64_t seed, int jobs) {
  PolicyConfig cfg = ck.config;
  cfg.S = map_side(base);
  Policy policy(cfg);
  if (ck.params.size() != policy.layout().total) throw Error(ErrorKind::Config, "checkpoint does not fit policy");
  policy.params() = ck.params;
  return evaluate(policy, ck.normalizer, TrainHyper{}, base, episodes, seed, jobs);
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir, const std::optional<Checkpoint>& resume) {
  PolicyConfig pc = cfg.policy;
  pc.S = map_side(cfg.episode);
  Policy policy(pc);
  FeatureNormalizer norm;
  Adam adam;
  RewardScaler scaler;
  std::int64_t steps = 0;
  int batch = 0;
  if (resume) {
    if (resume->params.size() != policy.layout().total)
      throw Error(ErrorKind::Config, "resume checkpoint does not fit the policy config");
    policy.params() = resume->params;
    norm = resume->normalizer;
    adam.m = resume->adam_m;
    adam.v = resume->adam_v;
    adam.t = resume->adam_t;
    scaler.set(resume->reward_count, resume->reward_mean, resume->reward_m2);
    steps = resume->steps;
    batch = resume->batch;
  } else {
    policy.init_orthogonal(derive_seed(cfg.seed, 0x1417));
  }

  std::ofstream curves_out;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto path = out_dir / "curves.csv";
    const bool append = resume && std::filesystem::exists(path);
    curves_out.open(path, append ? std::ios::app : std::ios::trunc);
    if (!curves_out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    if (!append) curves_out << kCurvesHeader << '\n';
  }

  TrainResult result;
  EpisodeConfig rollout = cfg.episode;
  rollout.mode = ExecutionMode::Async;
  const int per_batch = std::max(1, cfg.episodes_per_batch);
  while (steps < cfg.step_max) {
    ++batch;
    std::vector<std::unique_ptr<PolicySource>> sources(static_cast<std::size_t>(per_batch));
    try {
      parallel_for(per_batch, cfg.jobs, [&](int i) {
        EpisodeConfig ec = rollout;
        ec.seed = derive_seed(cfg.seed, 0x7A, static_cast<std::uint64_t>(batch - 1) * per_batch + i);
        auto src = std::make_unique<PolicySource>(policy, norm, cfg.hyper, true, i);
        run_episode(ec, *src);
        sources[static_cast<std::size_t>(i)] = std::move(src);
      });
      ReplayBuffer buffer;
      FeatureNormalizer seen;
      for (auto& s : sources) {
        flush_caches(s->caches(), buffer);
        seen.merge(s->observed());
      }
      steps += static_cast<std::int64_t>(buffer.size());
      LossReport rep;
      if (!buffer.items.empty()) {
        compute_advantages(buffer, cfg.hyper, &scaler);
        Rng rng(derive_seed(cfg.seed, 0x5EED, static_cast<std::uint64_t>(batch)));
        rep = ppo_update(policy, adam, buffer, cfg.hyper, rng);
      }
      if (cfg.hyper.feature_normalization) norm.merge(seen);

      if (cfg.eval_every > 0 && batch % cfg.eval_every == 0) {
        const auto m = evaluate(policy, norm, cfg.hyper, cfg.episode, cfg.eval_episodes,
                                derive_seed(cfg.seed, 0xE7A1), cfg.jobs);
        CurveRow row{batch, steps, 0.0, 0.0, rep.policy_loss, rep.value_loss, rep.entropy, rep.grad_norm};
        for (const auto& e : m) {
          row.mean_time += e.time / static_cast<double>(m.size());
          row.mean_acs += e.acs / static_cast<double>(m.size());
        }
        result.curves.push_back(row);
        if (curves_out.is_open()) {
          write_curves_csv(curves_out, {row}, false);
          curves_out.flush();
        }
      }
      if (!out_dir.empty() && cfg.checkpoint_every > 0 && batch % cfg.checkpoint_every == 0)
        save_checkpoint(out_dir / ("ckpt_" + std::to_string(batch)),
                        make_checkpoint(policy, norm, adam, scaler, steps, batch));
    } catch (const Error& e) {
      throw Error(e.kind(), "batch " + std::to_string(batch) + ": " + e.what());
    }
  }
  result.checkpoint = make_checkpoint(policy, norm, adam, scaler, steps, batch);
  if (!out_dir.empty()) save_checkpoint(out_dir / "policy", result.checkpoint);
  return result;
}

}  // namespace ax
