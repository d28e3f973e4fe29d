#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fishswim/env.hpp"
#include "fishswim/mlp.hpp"
#include "fishswim/replay_buffer.hpp"

// Soft actor-critic with a tanh-squashed Gaussian policy and twin critics.
// Actions inside the learner are normalised to (-1, 1); environments receive
// them scaled by their action limit.
namespace fishswim::sac {

struct SacConfig {
  double gamma = 0.99;
  double learning_rate = 3e-4;  // all networks and the temperature
  int batch_size = 256;
  double tau = 0.005;
  int updates_per_step = 1;
  double entropy_target = -3.0;
  double initial_alpha = 0.2;
  bool learn_alpha = true;
  std::vector<int> hidden{256, 256};
  std::size_t buffer_capacity = 1000000;
  std::int64_t warmup_steps = 1000;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};

void validate(const SacConfig& c);

// y = r + gamma (1 - done) (min(q1, q2) - alpha logp_next)
double td_target(double reward, double q1_next, double q2_next, double logp_next, double gamma, double alpha,
                 bool done);

// log(1 - tanh(u)^2), stable for large |u|.
template <typename T>
T log_one_minus_tanh_sq(T u) {
  const T a = std::abs(u);
  return static_cast<T>(2.0) * (static_cast<T>(std::numbers::ln2) - a - std::log1p(std::exp(-2 * a)));
}

// Log-density of a = tanh(mean + std * xi) in the squashed space, summed over
// components.
template <typename T>
T squashed_log_prob(T mean, T log_std, T xi) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  const T u = mean + std::exp(log_std) * xi;
  return -T(0.5) * xi * xi - log_std - static_cast<T>(kHalfLog2Pi) - log_one_minus_tanh_sq(u);
}

template <typename T>
struct ActorLoss {
  T loss = T(0);
  T mean_log_prob = T(0);
  nn::Matrix<T> actions;   // act_dim x batch, squashed
  nn::Matrix<T> log_prob;  // 1 x batch
};

// Actor objective mean(alpha * logp - min(q1, q2)) for actions drawn with the
// given standard-normal noise; accumulates its gradient into the policy's
// gradient buffer. Critic gradient buffers are overwritten with scratch.
template <typename T>
ActorLoss<T> actor_loss(nn::Mlp<T>& policy, nn::Mlp<T>& q1, nn::Mlp<T>& q2, const nn::Matrix<T>& obs,
                        const nn::Matrix<T>& xi, T alpha, double log_std_min, double log_std_max) {
  using Mat = nn::Matrix<T>;
  const Eigen::Index act = xi.rows();
  const Eigen::Index batch = obs.cols();
  const Mat out = policy.forward(obs);
  Mat mean = out.topRows(act);
  Mat log_std = out.bottomRows(act);
  Mat clamp_mask = Mat::Ones(act, batch);
  for (Eigen::Index i = 0; i < log_std.size(); ++i) {
    const T v = log_std(i);
    if (v < log_std_min || v > log_std_max) {
      clamp_mask(i) = T(0);
      log_std(i) = std::clamp(v, static_cast<T>(log_std_min), static_cast<T>(log_std_max));
    }
  }
  const Mat std_dev = log_std.array().exp().matrix();
  const Mat pre = mean + std_dev.cwiseProduct(xi);
  ActorLoss<T> r;
  r.actions = pre.array().tanh().matrix();
  r.log_prob = Mat::Zero(1, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < act; ++i) r.log_prob(0, b) += squashed_log_prob(mean(i, b), log_std(i, b), xi(i, b));
  }

  Mat critic_in(obs.rows() + act, batch);
  critic_in.topRows(obs.rows()) = obs;
  critic_in.bottomRows(act) = r.actions;
  const Mat v1 = q1.forward(critic_in);
  const Mat v2 = q2.forward(critic_in);
  Mat g1 = Mat::Zero(1, batch);
  Mat g2 = Mat::Zero(1, batch);
  const T inv_b = T(1) / static_cast<T>(batch);
  T loss = T(0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const bool first = v1(0, b) <= v2(0, b);
    const T qmin = first ? v1(0, b) : v2(0, b);
    (first ? g1 : g2)(0, b) = -inv_b;
    loss += alpha * r.log_prob(0, b) - qmin;
  }
  r.loss = loss * inv_b;
  r.mean_log_prob = r.log_prob.sum() * inv_b;

  // dL/da from the critics; their own parameter gradients are scratch.
  const Mat da = q1.backward(g1).bottomRows(act) + q2.backward(g2).bottomRows(act);
  q1.zero_grad();
  q2.zero_grad();

  Mat grad_out(2 * act, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < act; ++i) {
      const T a = r.actions(i, b);
      const T s = std_dev(i, b);
      const T x = xi(i, b);
      const T dpre = da(i, b) * (T(1) - a * a);
      grad_out(i, b) = alpha * inv_b * T(2) * a + dpre;
      grad_out(act + i, b) = clamp_mask(i, b) * (alpha * inv_b * (T(-1) + T(2) * a * s * x) + dpre * s * x);
    }
  }
  policy.backward(grad_out);
  return r;
}

struct ActionSample {
  env::Action action{};  // normalised to (-1, 1)
  double log_prob = 0.0;
};

struct LossReport {
  double q1 = 0.0;
  double q2 = 0.0;
  double actor = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log prob of the actor batch
};

class SacAgent {
 public:
  using Net = nn::Mlp<float>;
  using Rng = std::mt19937_64;

  SacAgent(const SacConfig& config, std::uint64_t seed);

  // Stochastic (deterministic = false) or mean action, normalised.
  ActionSample sample(const env::Observation& obs, bool deterministic);
  LossReport update(const ReplayBuffer::Batch& batch);

  double alpha() const { return std::exp(log_alpha_); }
  double log_alpha() const { return log_alpha_; }
  const SacConfig& config() const { return config_; }
  Net& policy() { return policy_; }
  Net& critic(int i) { return i == 0 ? q1_ : q2_; }
  Net& target_critic(int i) { return i == 0 ? q1_target_ : q2_target_; }
  const Net& policy() const { return policy_; }
  const Net& critic(int i) const { return i == 0 ? q1_ : q2_; }
  const Net& target_critic(int i) const { return i == 0 ? q1_target_ : q2_target_; }
  void set_log_alpha(double v) { log_alpha_ = v; }
  Rng& rng() { return rng_; }
  std::int64_t updates() const { return updates_; }

 private:
  SacConfig config_;
  Rng rng_;
  Net policy_;
  Net q1_;
  Net q2_;
  Net q1_target_;
  Net q2_target_;
  nn::Adam<float> policy_opt_;
  nn::Adam<float> q1_opt_;
  nn::Adam<float> q2_opt_;
  nn::Adam<double> alpha_opt_;
  double log_alpha_ = 0.0;
  std::int64_t updates_ = 0;
};

// Checkpoint: 8-byte magic, u32 header length, JSON header (layer shapes,
// config hash, temperature), then every network's parameters as
// little-endian float32 in header order.
void save_checkpoint(std::ostream& out, const SacAgent& agent, const std::string& config_hash);
void save_checkpoint(const std::string& path, const SacAgent& agent, const std::string& config_hash);
// Throws DataError on a malformed file or a config hash mismatch.
SacAgent load_checkpoint(std::istream& in, const SacConfig& config, const std::string& config_hash);
SacAgent load_checkpoint(const std::string& path, const SacConfig& config, const std::string& config_hash);

struct EpisodeLog {
  std::int64_t episode = 0;
  std::int64_t steps = 0;  // environment steps so far
  double episode_return = 0.0;
  bool success = false;
  int length = 0;
  env::Status status = env::Status::kRunning;
  double alpha = 0.0;
  LossReport losses;
  std::uint64_t seed = 0;
};

std::string to_json_line(const EpisodeLog& e);

struct TrainOptions {
  std::int64_t total_steps = 0;
  std::int64_t max_episodes = 0;     // 0: unlimited
  std::int64_t checkpoint_every = 0;  // episodes, 0: never
  std::uint64_t seed = 0;
};

struct TrainCallbacks {
  std::function<void(const EpisodeLog&)> on_episode;
  // Called every checkpoint_every episodes and once with halted = true
  // before a non-finite loss stops training.
  std::function<void(const SacAgent&, std::int64_t episode, bool halted)> on_checkpoint;
};

struct TrainSummary {
  std::int64_t steps = 0;
  std::int64_t episodes = 0;
  std::int64_t aborted = 0;
  std::int64_t successes = 0;
};

// Episode seeds for a training or evaluation run.
std::uint64_t episode_seed(std::uint64_t run_seed, std::int64_t episode);

// Interleaves environment steps with updates after the uniform-action warmup.
// Aborted episodes are dropped from the replay buffer and logged. Throws
// NumericFault on a non-finite loss (after the halted checkpoint callback).
TrainSummary train(env::Environment& env, SacAgent& agent, const TrainOptions& options,
                   const TrainCallbacks& callbacks = {});

}  // namespace fishswim::sac
