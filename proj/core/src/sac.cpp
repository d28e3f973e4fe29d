#include "fishswim/sac.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "fishswim/errors.hpp"

namespace fishswim::sac {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'W', 'S', 'A', 'C', '0', '1'};

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

nn::Matrix<float> column(const env::Observation& obs) {
  nn::Matrix<float> m(env::kObsDim, 1);
  for (int i = 0; i < env::kObsDim; ++i) m(i, 0) = static_cast<float>(obs[i]);
  return m;
}

bool finite(const LossReport& r) {
  return std::isfinite(r.q1) && std::isfinite(r.q2) && std::isfinite(r.actor) && std::isfinite(r.alpha_loss);
}

}  // namespace

void validate(const SacConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("sac.gamma must be in (0, 1]");
  if (!(c.learning_rate > 0.0)) throw ConfigError("sac.learning_rate must be positive");
  if (c.batch_size <= 0) throw ConfigError("sac.batch_size must be positive");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ConfigError("sac.tau must be in (0, 1]");
  if (c.updates_per_step <= 0) throw ConfigError("sac.updates_per_step must be positive");
  if (!(c.initial_alpha > 0.0)) throw ConfigError("sac.initial_alpha must be positive");
  if (c.hidden.empty()) throw ConfigError("sac.hidden needs at least one layer");
  for (int h : c.hidden) {
    if (h <= 0) throw ConfigError("sac.hidden sizes must be positive");
  }
  if (c.buffer_capacity == 0) throw ConfigError("sac.buffer_capacity must be positive");
  if (c.warmup_steps < 0) throw ConfigError("sac.warmup_steps must be >= 0");
  if (!(c.log_std_min < c.log_std_max)) throw ConfigError("sac log-std clamp range is empty");
}

double td_target(double reward, double q1_next, double q2_next, double logp_next, double gamma, double alpha,
                 bool done) {
  if (done) return reward;
  return reward + gamma * (std::min(q1_next, q2_next) - alpha * logp_next);
}

SacAgent::SacAgent(const SacConfig& config, std::uint64_t seed) : config_(config), rng_(seed) {
  validate(config_);
  policy_ = Net(layer_sizes(env::kObsDim, config_.hidden, 2 * env::kActDim), rng_);
  q1_ = Net(layer_sizes(env::kObsDim + env::kActDim, config_.hidden, 1), rng_);
  q2_ = Net(layer_sizes(env::kObsDim + env::kActDim, config_.hidden, 1), rng_);
  q1_target_ = q1_;
  q2_target_ = q2_;
  policy_opt_ = nn::Adam<float>(policy_.parameter_count(), config_.learning_rate);
  q1_opt_ = nn::Adam<float>(q1_.parameter_count(), config_.learning_rate);
  q2_opt_ = nn::Adam<float>(q2_.parameter_count(), config_.learning_rate);
  alpha_opt_ = nn::Adam<double>(1, config_.learning_rate);
  log_alpha_ = std::log(config_.initial_alpha);
}

ActionSample SacAgent::sample(const env::Observation& obs, bool deterministic) {
  const nn::Matrix<float> out = policy_.predict(column(obs));
  ActionSample s;
  std::normal_distribution<double> normal;
  for (int i = 0; i < env::kActDim; ++i) {
    const double mean = out(i, 0);
    const double log_std = std::clamp<double>(out(env::kActDim + i, 0), config_.log_std_min, config_.log_std_max);
    const double xi = deterministic ? 0.0 : normal(rng_);
    s.action[i] = std::tanh(mean + std::exp(log_std) * xi);
    s.log_prob += squashed_log_prob(mean, log_std, xi);
  }
  return s;
}

LossReport SacAgent::update(const ReplayBuffer::Batch& batch) {
  using Mat = nn::Matrix<float>;
  const Eigen::Index n = batch.state.cols();
  const int act = env::kActDim;
  const float alpha = static_cast<float>(std::exp(log_alpha_));
  std::normal_distribution<float> normal;
  LossReport report;

  // Soft Bellman targets from the target critics.
  Mat y(1, n);
  {
    const Mat out = policy_.predict(batch.next_state);
    Mat critic_in(env::kObsDim + act, n);
    critic_in.topRows(env::kObsDim) = batch.next_state;
    Mat logp = Mat::Zero(1, n);
    for (Eigen::Index b = 0; b < n; ++b) {
      for (int i = 0; i < act; ++i) {
        const float mean = out(i, b);
        const float log_std = std::clamp<float>(out(act + i, b), static_cast<float>(config_.log_std_min),
                                                static_cast<float>(config_.log_std_max));
        const float xi = normal(rng_);
        critic_in(env::kObsDim + i, b) = std::tanh(mean + std::exp(log_std) * xi);
        logp(0, b) += squashed_log_prob(mean, log_std, xi);
      }
    }
    const Mat t1 = q1_target_.predict(critic_in);
    const Mat t2 = q2_target_.predict(critic_in);
    for (Eigen::Index b = 0; b < n; ++b) {
      y(0, b) = static_cast<float>(td_target(batch.reward(0, b), t1(0, b), t2(0, b), logp(0, b), config_.gamma,
                                             alpha, batch.done(0, b) > 0.5f));
    }
  }

  // Critics: mean squared error to the targets.
  Mat critic_in(env::kObsDim + act, n);
  critic_in.topRows(env::kObsDim) = batch.state;
  critic_in.bottomRows(act) = batch.action;
  auto fit = [&](Net& q, nn::Adam<float>& opt) {
    q.zero_grad();
    const Mat err = q.forward(critic_in) - y;
    q.backward(err * (2.0f / static_cast<float>(n)));
    opt.step(q.params(), q.grads());
    return static_cast<double>(err.squaredNorm()) / static_cast<double>(n);
  };
  report.q1 = fit(q1_, q1_opt_);
  report.q2 = fit(q2_, q2_opt_);

  // Actor through the updated critics.
  Mat xi(act, n);
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal(rng_);
  policy_.zero_grad();
  const ActorLoss<float> al =
      actor_loss(policy_, q1_, q2_, batch.state, xi, alpha, config_.log_std_min, config_.log_std_max);
  policy_opt_.step(policy_.params(), policy_.grads());
  report.actor = al.loss;
  report.entropy = -static_cast<double>(al.mean_log_prob);

  // Temperature: L = -log_alpha (logp + target).
  const double alpha_grad = -(static_cast<double>(al.mean_log_prob) + config_.entropy_target);
  report.alpha_loss = log_alpha_ * alpha_grad;
  if (config_.learn_alpha) {
    nn::Vector<double> p(1);
    nn::Vector<double> g(1);
    p[0] = log_alpha_;
    g[0] = alpha_grad;
    alpha_opt_.step(p, g);
    log_alpha_ = p[0];
  }
  report.alpha = std::exp(log_alpha_);

  nn::polyak_update(q1_target_, q1_, config_.tau);
  nn::polyak_update(q2_target_, q2_, config_.tau);
  ++updates_;
  return report;
}

void save_checkpoint(std::ostream& out, const SacAgent& agent, const std::string& config_hash) {
  using nlohmann::json;
  const std::array<std::pair<const char*, const SacAgent::Net*>, 5> nets{{{"policy", &agent.policy()},
                                                                         {"q1", &agent.critic(0)},
                                                                         {"q2", &agent.critic(1)},
                                                                         {"q1_target", &agent.target_critic(0)},
                                                                         {"q2_target", &agent.target_critic(1)}}};
  json header;
  header["format"] = 1;
  header["config_hash"] = config_hash;
  header["log_alpha"] = agent.log_alpha();
  header["updates"] = agent.updates();
  header["obs_dim"] = env::kObsDim;
  header["act_dim"] = env::kActDim;
  json list = json::array();
  for (const auto& [name, net] : nets) {
    list.push_back({{"name", name}, {"layers", net->sizes()}, {"params", net->parameter_count()}});
  }
  header["networks"] = list;
  const std::string text = header.dump();

  auto put_u32 = [&out](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  out.write(kMagic, sizeof kMagic);
  put_u32(static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, net] : nets) {
    for (Eigen::Index i = 0; i < net->parameter_count(); ++i) put_u32(std::bit_cast<std::uint32_t>(net->params()[i]));
  }
  if (!out) throw DataError("failed to write checkpoint");
}

void save_checkpoint(const std::string& path, const SacAgent& agent, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  save_checkpoint(out, agent, config_hash);
}

SacAgent load_checkpoint(std::istream& in, const SacConfig& config, const std::string& config_hash) {
  using nlohmann::json;
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a fishswim checkpoint (bad magic)");
  }
  auto get_u32 = [&in]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  };
  const std::uint32_t len = get_u32();
  if (len > (1u << 24)) throw DataError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw DataError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::string stored = header.value("config_hash", "");
  if (stored != config_hash) {
    throw DataError("checkpoint was written for config hash " + stored + ", current config hashes to " + config_hash);
  }

  SacAgent agent(config, 0);
  SacAgent::Net* nets[5] = {&agent.policy(), &agent.critic(0), &agent.critic(1), &agent.target_critic(0),
                            &agent.target_critic(1)};
  const json& list = header.at("networks");
  if (!list.is_array() || list.size() != 5) throw DataError("checkpoint must hold five networks");
  for (std::size_t k = 0; k < 5; ++k) {
    if (list[k].at("layers").get<std::vector<int>>() != nets[k]->sizes()) {
      throw DataError("checkpoint network '" + list[k].value("name", "?") + "' has layer shapes " +
                      list[k].at("layers").dump() + " that do not match the configured network");
    }
  }
  for (SacAgent::Net* net : nets) {
    for (Eigen::Index i = 0; i < net->parameter_count(); ++i) net->params()[i] = std::bit_cast<float>(get_u32());
  }
  agent.set_log_alpha(header.at("log_alpha").get<double>());
  return agent;
}

SacAgent load_checkpoint(const std::string& path, const SacConfig& config, const std::string& config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(in, config, config_hash);
}

std::string to_json_line(const EpisodeLog& e) {
  nlohmann::json j;
  j["episode"] = e.episode;
  j["steps"] = e.steps;
  j["return"] = e.episode_return;
  j["success"] = e.success;
  j["length"] = e.length;
  j["status"] = env::to_string(e.status);
  j["seed"] = e.seed;
  j["alpha"] = e.alpha;
  j["losses"] = {{"q1", e.losses.q1},
                 {"q2", e.losses.q2},
                 {"actor", e.losses.actor},
                 {"alpha", e.losses.alpha_loss},
                 {"entropy", e.losses.entropy}};
  return j.dump();
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::int64_t episode) {
  // splitmix64 of the pair
  std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(episode) + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

TrainSummary train(env::Environment& env, SacAgent& agent, const TrainOptions& options,
                   const TrainCallbacks& callbacks) {
  const SacConfig& cfg = agent.config();
  ReplayBuffer buffer(cfg.buffer_capacity);
  std::mt19937_64 sample_rng(episode_seed(options.seed, -1));
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  const double limit = env.action_limit();
  TrainSummary summary;
  LossReport last;
  last.alpha = agent.alpha();

  while (summary.steps < options.total_steps &&
         (options.max_episodes == 0 || summary.episodes < options.max_episodes)) {
    EpisodeLog log;
    log.episode = summary.episodes;
    log.seed = episode_seed(options.seed, summary.episodes);
    env::Observation obs = env.reset(log.seed);
    std::vector<Transition> pending;
    env::Status status = env::Status::kRunning;
    while (status == env::Status::kRunning) {
      env::Action u{};
      if (summary.steps < cfg.warmup_steps) {
        for (double& x : u) x = uniform(sample_rng);
      } else {
        u = agent.sample(obs, false).action;
      }
      env::Action a{};
      for (int i = 0; i < env::kActDim; ++i) a[i] = limit * u[i];
      const env::StepResult r = env.step(a);
      status = r.status;
      ++summary.steps;
      if (status != env::Status::kAborted) {
        log.episode_return += r.reward.total;
        pending.push_back({obs, u, r.reward.total, r.observation,
                           status == env::Status::kSuccess || status == env::Status::kFailed});
      }
      obs = r.observation;

      if (summary.steps > cfg.warmup_steps && buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
        for (int k = 0; k < cfg.updates_per_step; ++k) {
          last = agent.update(buffer.sample(static_cast<std::size_t>(cfg.batch_size), sample_rng));
          if (!finite(last)) {
            if (callbacks.on_checkpoint) callbacks.on_checkpoint(agent, summary.episodes, true);
            throw NumericFault("non-finite SAC loss at step " + std::to_string(summary.steps));
          }
        }
      }
      if (summary.steps >= options.total_steps) break;
    }
    // Episodes enter the buffer whole; aborted ones are dropped.
    if (status != env::Status::kAborted) {
      for (const Transition& t : pending) buffer.push(t);
    }
    log.steps = summary.steps;
    log.length = env.step_count();
    log.status = status;
    log.success = status == env::Status::kSuccess;
    log.alpha = agent.alpha();
    log.losses = last;
    if (status == env::Status::kAborted) ++summary.aborted;
    if (log.success) ++summary.successes;
    ++summary.episodes;
    if (callbacks.on_episode) callbacks.on_episode(log);
    if (callbacks.on_checkpoint && options.checkpoint_every > 0 && summary.episodes % options.checkpoint_every == 0) {
      callbacks.on_checkpoint(agent, summary.episodes, false);
    }
  }
  return summary;
}

}  // namespace fishswim::sac
