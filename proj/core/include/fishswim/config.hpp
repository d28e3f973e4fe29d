#pragma once

#include <cstdint>
#include <string>

#include "fishswim/baseline.hpp"
#include "fishswim/calibrate.hpp"
#include "fishswim/env.hpp"
#include "fishswim/sac.hpp"
#include "fishswim/sanity_env.hpp"

// Run configuration: a JSON object with the optional blocks fluid, fish,
// episode, randomization, sac, train, baseline and calibrate. Missing keys
// keep their defaults; unknown keys and wrong types are rejected with the
// key path and line.
namespace fishswim::config {

enum class EnvKind { kFish, kSanity };

struct TrainConfig {
  EnvKind env = EnvKind::kFish;
  std::int64_t total_steps = 150000;
  std::int64_t max_episodes = 1500;
  std::int64_t checkpoint_every = 100;  // episodes
  int eval_episodes = 10;               // per checkpoint snapshot
};

struct RunConfig {
  env::FishEnvConfig env;
  env::SanityConfig sanity;
  sac::SacConfig sac;
  TrainConfig train;
  baseline::WaypointConfig baseline;
  calibrate::FitOptions calibrate;
  calibrate::OpenLoopSetup calibrate_setup = calibrate::default_open_loop_setup();
};

RunConfig parse(const std::string& text, const std::string& source = "<config>");
RunConfig load(const std::string& path);
// Effective configuration with every key, in the input format.
std::string to_json(const RunConfig& c);
// FNV-1a over the blocks a trained policy depends on (training environment,
// fluid, fish, episode dynamics, network shape); task and noise settings are
// excluded.
std::string policy_hash(const RunConfig& c);

}  // namespace fishswim::config
