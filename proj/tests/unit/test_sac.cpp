#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fishswim/errors.hpp"
#include "fishswim/sac.hpp"
#include "fishswim/sanity_env.hpp"

using namespace fishswim;
using namespace fishswim::sac;

namespace {

SacConfig tiny_config() {
  SacConfig c;
  c.hidden = {16, 16};
  c.batch_size = 32;
  c.buffer_capacity = 10000;
  c.warmup_steps = 200;
  return c;
}

}  // namespace

TEST_CASE("soft Bellman target") {
  CHECK(td_target(1.0, 2.0, 1.8, -0.5, 0.99, 0.2, false) == doctest::Approx(1.0 + 0.99 * (1.8 + 0.1)).epsilon(1e-15));
  CHECK(td_target(1.0, 2.0, 1.8, -0.5, 0.99, 0.2, false) == doctest::Approx(2.881).epsilon(1e-14));
  CHECK(td_target(0.5, 2.0, 2.3, -1.0, 0.99, 0.2, false) == doctest::Approx(2.678).epsilon(1e-14));
  CHECK(td_target(-3.0, 5.0, 7.0, 0.3, 0.99, 0.2, true) == -3.0);
  CHECK(td_target(-3.0, 5.0, 7.0, 0.3, 0.0, 0.2, false) == -3.0);
}

TEST_CASE("stable log(1 - tanh^2) matches the direct formula") {
  for (double u : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double t = std::tanh(u);
    CHECK(log_one_minus_tanh_sq(u) == doctest::Approx(std::log(1.0 - t * t)).epsilon(1e-12));
  }
  CHECK(std::isfinite(log_one_minus_tanh_sq(400.0)));
  CHECK(log_one_minus_tanh_sq(400.0) == doctest::Approx(2.0 * (std::log(2.0) - 400.0)).epsilon(1e-14));
}

TEST_CASE("squashed log-density integrates to the sample histogram") {
  const double mean = 0.3;
  const double log_std = -0.4;
  const double sd = std::exp(log_std);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  const int bins = 20;
  const int n = 400000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    const double a = std::tanh(mean + sd * normal(rng));
    ++counts[std::min(bins - 1, static_cast<int>((a + 1.0) * 0.5 * bins))];
  }
  auto density = [&](double a) {
    const double xi = (std::atanh(a) - mean) / sd;
    return std::exp(squashed_log_prob(mean, log_std, xi));
  };
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double lo = -1.0 + 2.0 * b / bins;
    const double hi = lo + 2.0 / bins;
    double mass = 0.0;
    const int sub = 400;
    for (int k = 0; k < sub; ++k) mass += density(lo + (k + 0.5) * (hi - lo) / sub) * (hi - lo) / sub;
    total += mass;
    const double expected = mass * n;
    CHECK(std::abs(counts[b] - expected) <= 5.0 * std::sqrt(expected) + 2.0);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("actor gradient matches finite differences") {
  std::mt19937_64 rng(5);
  const int obs = 3;
  const int act = 2;
  nn::Mlp<double> policy({obs, 4, 2 * act}, rng);
  nn::Mlp<double> q1({obs + act, 4, 1}, rng);
  nn::Mlp<double> q2({obs + act, 4, 1}, rng);
  std::normal_distribution<double> normal;
  nn::Matrix<double> x(obs, 5);
  nn::Matrix<double> xi(act, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
  const double alpha = 0.3;

  policy.zero_grad();
  actor_loss(policy, q1, q2, x, xi, alpha, -20.0, 2.0);
  const nn::Vector<double> analytic = policy.grads();

  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index p = 0; p < policy.parameter_count(); ++p) {
    const double keep = policy.params()[p];
    policy.params()[p] = keep + h;
    const double up = actor_loss(policy, q1, q2, x, xi, alpha, -20.0, 2.0).loss;
    policy.params()[p] = keep - h;
    const double down = actor_loss(policy, q1, q2, x, xi, alpha, -20.0, 2.0).loss;
    policy.params()[p] = keep;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(numeric - analytic[p]) / std::max(1.0, std::abs(numeric)));
  }
  MESSAGE("worst relative gradient error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("polyak update with tau one copies the online network") {
  std::mt19937_64 rng(2);
  nn::Mlp<float> online({3, 5, 1}, rng);
  nn::Mlp<float> target({3, 5, 1}, rng);
  CHECK(online.params() != target.params());
  nn::polyak_update(target, online, 1.0);
  CHECK(online.params() == target.params());
  nn::Mlp<float> other({3, 6, 1}, rng);
  CHECK_THROWS_AS(nn::polyak_update(other, online, 0.5), ConfigError);
}

TEST_CASE("critics learn a one-step bandit reward") {
  SacConfig c = tiny_config();
  c.hidden = {32, 32};
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  SacAgent agent(c, 4);
  ReplayBuffer buffer(1000);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Transition t;
    for (double& s : t.state) s = u(rng);
    for (double& a : t.action) a = u(rng);
    t.reward = 0.7;
    t.next_state = t.state;
    t.done = true;
    buffer.push(t);
  }
  for (int k = 0; k < 5000; ++k) agent.update(buffer.sample(c.batch_size, rng));
  const ReplayBuffer::Batch probe = buffer.sample(200, rng);
  nn::Matrix<float> in(env::kObsDim + env::kActDim, 200);
  in.topRows(env::kObsDim) = probe.state;
  in.bottomRows(env::kActDim) = probe.action;
  for (int q = 0; q < 2; ++q) {
    const nn::Matrix<float> v = agent.critic(q).predict(in);
    const double worst = (v.array() - 0.7f).abs().maxCoeff();
    MESSAGE("critic " << q << " worst error " << worst);
    CHECK(worst < 1e-2);
  }
}

TEST_CASE("actions respect the limit and collapse to the mean as the spread vanishes") {
  SacConfig c = tiny_config();
  SacAgent agent(c, 1);
  env::Observation o{};
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.1 * static_cast<double>(i) - 0.4;
  for (int k = 0; k < 200; ++k) {
    for (double a : agent.sample(o, false).action) CHECK(std::abs(a) <= 1.0);
  }
  c.log_std_min = -30.0;
  c.log_std_max = -29.0;
  SacAgent narrow(c, 1);
  const env::Action mean = narrow.sample(o, true).action;
  const env::Action drawn = narrow.sample(o, false).action;
  for (int i = 0; i < env::kActDim; ++i) CHECK(drawn[i] == doctest::Approx(mean[i]).epsilon(1e-6));
}

TEST_CASE("checkpoints round-trip and refuse a different configuration") {
  SacConfig c = tiny_config();
  SacAgent agent(c, 8);
  agent.set_log_alpha(-1.25);
  std::stringstream buf;
  save_checkpoint(buf, agent, "abc123");
  const std::string bytes = buf.str();
  CHECK(bytes.compare(0, 8, "FSWSAC01") == 0);

  std::istringstream in(bytes);
  const SacAgent back = load_checkpoint(in, c, "abc123");
  CHECK(back.log_alpha() == -1.25);
  CHECK(back.policy().params() == agent.policy().params());
  for (int q = 0; q < 2; ++q) {
    CHECK(back.critic(q).params() == agent.critic(q).params());
    CHECK(back.target_critic(q).params() == agent.target_critic(q).params());
  }

  std::istringstream mismatch(bytes);
  CHECK_THROWS_AS(load_checkpoint(mismatch, c, "other"), DataError);
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(truncated, c, "abc123"), DataError);
  std::istringstream garbage("not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(garbage, c, "abc123"), DataError);
  SacConfig wider = c;
  wider.hidden = {32, 16};
  std::istringstream shape(bytes);
  CHECK_THROWS_AS(load_checkpoint(shape, wider, "abc123"), DataError);
}

TEST_CASE("episode seeds are distinct and reproducible") {
  std::set<std::uint64_t> seen;
  for (std::int64_t e = 0; e < 1000; ++e) seen.insert(episode_seed(7, e));
  CHECK(seen.size() == 1000);
  CHECK(episode_seed(7, 3) == episode_seed(7, 3));
  CHECK(episode_seed(7, 3) != episode_seed(8, 3));
}

TEST_CASE("equal seeds give identical training runs") {
  auto run = [] {
    env::SanityEnv e;
    SacAgent agent(tiny_config(), 21);
    TrainOptions o;
    o.total_steps = 600;
    o.seed = 21;
    std::vector<std::string> lines;
    TrainCallbacks cb;
    cb.on_episode = [&](const EpisodeLog& log) { lines.push_back(to_json_line(log)); };
    const TrainSummary s = train(e, agent, o, cb);
    CHECK(s.steps == 600);
    return std::make_pair(lines, agent.policy().params());
  };
  const auto a = run();
  const auto b = run();
  CHECK(!a.first.empty());
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
