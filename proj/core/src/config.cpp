#include "fishswim/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <type_traits>
#include <sstream>
#include <vector>

#include "fishswim/errors.hpp"
#include "fishswim/lbm.hpp"

namespace fishswim::config {

namespace {

using nlohmann::json;

// 1-based line of the first occurrence of the quoted key path in the text.
int line_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const std::string& key : path) {
    const std::size_t found = text.find('"' + key + '"', pos);
    if (found == std::string::npos) return 0;
    pos = found + 1;
  }
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos - 1), '\n'));
}

// Reads into or writes out of a struct through the same key list, so the
// parser and the dump cannot drift apart.
class Block {
 public:
  Block(json* node, std::vector<std::string> path, const std::string* text, const std::string* source)
      : node_(node), path_(std::move(path)), text_(text), source_(source) {}

  bool reading() const { return text_ != nullptr; }

  // Integer fields reject fractional numbers.
  template <typename T>
  static bool matches(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      return v.is_number_integer() && (std::is_signed_v<T> || v.get<std::int64_t>() >= 0);
    } else if constexpr (std::is_floating_point_v<T>) {
      return v.is_number();
    } else if constexpr (requires { typename T::value_type; } && !std::is_same_v<T, std::string>) {
      if (!v.is_array()) return false;
      return std::all_of(v.begin(), v.end(), [](const json& e) { return matches<typename T::value_type>(e); });
    } else {
      return true;
    }
  }

  template <typename T>
  void field(const char* key, T& value) {
    if (!reading()) {
      (*node_)[key] = value;
      return;
    }
    if (!node_->contains(key)) return;
    seen_.insert(key);
    if (!matches<T>((*node_)[key])) fail(key, "has the wrong type (got " + (*node_)[key].dump() + ")");
    try {
      value = (*node_)[key].get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type (got " + (*node_)[key].dump() + ")");
    }
  }

  template <std::size_t N>
  void array(const char* key, std::array<double, N>& value, double scale = 1.0) {
    if (!reading()) {
      std::array<double, N> out{};
      for (std::size_t i = 0; i < N; ++i) out[i] = value[i] / scale;
      (*node_)[key] = out;
      return;
    }
    if (!node_->contains(key)) return;
    seen_.insert(key);
    const json& v = (*node_)[key];
    if (!v.is_array() || v.size() != N) fail(key, "must be an array of " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number()) fail(key, "must be an array of " + std::to_string(N) + " numbers");
      value[i] = v[i].get<double>() * scale;
    }
  }

  void degrees(const char* key, double& radians) {
    double d = rad2deg(radians);
    field(key, d);
    radians = deg2rad(d);
  }

  template <typename E>
  void choice(const char* key, E& value, const std::vector<std::pair<const char*, E>>& names) {
    std::string s;
    for (const auto& [n, e] : names) {
      if (e == value) s = n;
    }
    field(key, s);
    if (!reading()) return;
    for (const auto& [n, e] : names) {
      if (s == n) {
        value = e;
        return;
      }
    }
    std::string options;
    for (const auto& [n, e] : names) options += (options.empty() ? "" : ", ") + std::string(n);
    fail(key, "must be one of " + options + " (got '" + s + "')");
  }

  Block child(const char* key) {
    if (!reading()) {
      (*node_)[key] = json::object();
      return Block(&(*node_)[key], extend(key), nullptr, source_);
    }
    seen_.insert(key);
    if (!node_->contains(key)) (*node_)[key] = json::object();
    if (!(*node_)[key].is_object()) fail(key, "must be an object");
    return Block(&(*node_)[key], extend(key), text_, source_);
  }

  bool has(const char* key) const { return node_->contains(key); }

  void finish() const {
    if (!reading()) return;
    for (const auto& [key, v] : node_->items()) {
      if (!seen_.count(key)) {
        const std::vector<std::string> p = extend(key);
        throw ConfigError(*source_ + ":" + std::to_string(line_of(*text_, p)) + ": unknown key '" + dotted(p) + "'");
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::vector<std::string> p = extend(key);
    throw ConfigError(*source_ + ":" + std::to_string(line_of(*text_, p)) + ": key '" + dotted(p) + "' " + what);
  }

 private:
  std::vector<std::string> extend(const std::string& key) const {
    std::vector<std::string> p = path_;
    p.push_back(key);
    return p;
  }
  static std::string dotted(const std::vector<std::string>& p) {
    std::string s;
    for (const std::string& k : p) s += (s.empty() ? "" : ".") + k;
    return s;
  }

  json* node_;
  std::vector<std::string> path_;
  const std::string* text_;
  const std::string* source_;
  std::set<std::string> seen_;
};

void bind_fluid(Block b, RunConfig& c) {
  auto& f = c.env.sim.fluid;
  b.field("density", f.physical_density);
  b.field("viscosity", f.kinematic_viscosity);
  b.field("default_tau", f.default_tau);
  b.field("domain_x", f.domain_x);
  b.field("domain_y", f.domain_y);
  b.field("slip_ratio", f.slip_ratio);
  b.field("nx", c.env.sim.nx);
  b.field("ny", c.env.sim.ny);
  b.field("dt", c.env.sim.dt);
  b.field("marker_spacing_cells", c.env.sim.marker_spacing_cells);
  b.finish();
}

void bind_fish(Block b, RunConfig& c) {
  auto& m = c.env.sim.morphology;
  std::array<double, body::kLinks> mass{};
  std::array<double, body::kLinks> length{};
  std::array<double, body::kLinks> width{};
  for (int k = 0; k < body::kLinks; ++k) {
    mass[k] = m.links[k].mass;
    length[k] = m.links[k].length;
    width[k] = m.links[k].width;
  }
  b.array("link_mass", mass);
  b.array("link_length", length);
  b.array("link_width", width);
  for (int k = 0; k < body::kLinks; ++k) m.links[k] = {mass[k], length[k], width[k]};
  b.field("tail_tip_width", m.tail_tip_width);
  b.degrees("joint_limit_deg", m.joint_limit);
  b.field("effective_depth", c.env.sim.effective_depth);
  Block s = b.child("servo");
  auto& servo = c.env.sim.servo;
  s.array("kp", servo.kp);
  s.array("kd", servo.kd);
  s.field("torque_limit", servo.torque_limit);
  s.field("speed_limit", servo.speed_limit);
  s.finish();
  b.finish();
}

void bind_episode(Block b, RunConfig& c, bool with_task) {
  auto& e = c.env.episode;
  b.field("t_max", e.t_max);
  b.field("success_radius", e.success_radius);
  b.field("substeps_per_control", e.substeps_per_control);
  b.field("wall_margin", e.wall_margin);
  b.field("min_target_distance", e.min_target_distance);
  b.choice("mach_policy", e.mach_policy, {{"report", env::MachPolicy::kReport}, {"abort", env::MachPolicy::kAbort}});
  Block r = b.child("reward");
  r.field("approach", e.reward.approach);
  r.field("energy", e.reward.energy);
  r.field("terminal", e.reward.terminal);
  r.finish();
  if (with_task) {
    b.choice("task", c.env.task.kind,
             {{"position", env::TaskKind::kPosition},
              {"uturn", env::TaskKind::kUturn},
              {"pentagram", env::TaskKind::kPentagram}});
    b.field("uturn_distance", c.env.task.uturn_distance);
    b.field("pentagram_radius", c.env.task.pentagram_radius);
  }
  b.finish();
}

void bind_randomization(Block b, RunConfig& c) {
  auto& r = c.env.randomization;
  b.field("enabled", r.enabled);
  b.field("latency_mean", r.latency_mean);
  b.field("latency_half_range", r.latency_half_range);
  b.field("position_sigma", r.position_sigma);
  b.degrees("direction_sigma_deg", r.direction_sigma);
  b.degrees("joint_sigma_deg", r.joint_sigma);
  b.finish();
}

void bind_sac(Block b, RunConfig& c, bool shape_only) {
  auto& s = c.sac;
  b.field("hidden", s.hidden);
  if (!shape_only) {
    b.field("gamma", s.gamma);
    b.field("learning_rate", s.learning_rate);
    b.field("batch_size", s.batch_size);
    b.field("tau", s.tau);
    b.field("updates_per_step", s.updates_per_step);
    b.field("entropy_target", s.entropy_target);
    b.field("initial_alpha", s.initial_alpha);
    b.field("learn_alpha", s.learn_alpha);
    b.field("buffer_capacity", s.buffer_capacity);
    b.field("warmup_steps", s.warmup_steps);
    b.field("log_std_min", s.log_std_min);
    b.field("log_std_max", s.log_std_max);
  }
  b.finish();
}

void bind_train(Block b, RunConfig& c) {
  auto& t = c.train;
  b.choice("env", t.env, {{"fish", EnvKind::kFish}, {"sanity", EnvKind::kSanity}});
  b.field("total_steps", t.total_steps);
  b.field("max_episodes", t.max_episodes);
  b.field("checkpoint_every", t.checkpoint_every);
  b.field("eval_episodes", t.eval_episodes);
  b.finish();
}

void bind_baseline(Block b, RunConfig& c) {
  auto& w = c.baseline;
  b.field("frequency", w.cpg.frequency);
  b.array("amplitude_deg", w.cpg.amplitude, deg2rad(1.0));
  b.array("phase_deg", w.cpg.phase, deg2rad(1.0));
  b.field("kp", w.pid.kp);
  b.field("ki", w.pid.ki);
  b.field("kd", w.pid.kd);
  b.degrees("offset_limit_deg", w.pid.output_limit);
  b.field("slow_radius", w.slow_radius);
  b.field("smoothing_time", w.smoothing_time);
  b.finish();
}

void bind_calibrate(Block b, RunConfig& c) {
  auto& f = c.calibrate;
  auto& s = c.calibrate_setup.sim;
  b.field("nx", s.nx);
  b.field("ny", s.ny);
  b.field("domain_x", s.fluid.domain_x);
  b.field("domain_y", s.fluid.domain_y);
  b.field("kp_grid", f.kp_grid);
  b.field("kd_grid", f.kd_grid);
  b.field("latency_min", f.latency_range[0]);
  b.field("latency_max", f.latency_range[1]);
  b.field("max_refinement_evaluations", f.max_refinement_evaluations);
  Block i = b.child("initial");
  i.field("kp", f.initial.kp);
  i.field("kd", f.initial.kd);
  i.field("latency", f.initial.latency);
  i.finish();
  b.finish();
}

void bind(Block root, RunConfig& c) {
  bind_fluid(root.child("fluid"), c);
  bind_fish(root.child("fish"), c);
  bind_episode(root.child("episode"), c, true);
  bind_randomization(root.child("randomization"), c);
  bind_sac(root.child("sac"), c, false);
  bind_train(root.child("train"), c);
  bind_baseline(root.child("baseline"), c);
  bind_calibrate(root.child("calibrate"), c);
  root.finish();
}

void finalize(RunConfig& c) {
  auto& sim = c.env.sim;
  env::validate(c.env);
  lbm::unit_convert(sim.fluid, sim.nx, sim.ny, sim.dt);
  sac::validate(c.sac);
  if (c.train.total_steps <= 0) throw ConfigError("train.total_steps must be positive");
  if (c.train.max_episodes < 0 || c.train.checkpoint_every < 0 || c.train.eval_episodes < 0) {
    throw ConfigError("train counts must be >= 0");
  }
  c.baseline.joint_limit = sim.morphology.joint_limit;
  c.baseline.control_period = sim.dt * c.env.episode.substeps_per_control;
  baseline::validate(c.baseline);

  // Calibration shares the fish, servo limits and fluid with the run; only
  // the tank is its own.
  auto& cs = c.calibrate_setup.sim;
  const calibrate::OpenLoopSetup tank = c.calibrate_setup;
  cs = sim;
  cs.nx = tank.sim.nx;
  cs.ny = tank.sim.ny;
  cs.fluid.domain_x = tank.sim.fluid.domain_x;
  cs.fluid.domain_y = tank.sim.fluid.domain_y;
  c.calibrate_setup.substeps_per_sample = c.env.episode.substeps_per_control;
  lbm::unit_convert(cs.fluid, cs.nx, cs.ny, cs.dt);

  c.sanity.action_limit = sim.morphology.joint_limit;
  c.sanity.control_period = sim.dt * c.env.episode.substeps_per_control;
  c.sanity.episode = c.env.episode;
}

}  // namespace

RunConfig parse(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at ? at - 1 : 0), '\n');
    throw ConfigError(source + ":" + std::to_string(line) + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError(source + ": top level must be a JSON object");
  RunConfig c;
  bind(Block(&root, {}, &text, &source), c);
  finalize(c);
  return c;
}

RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string to_json(const RunConfig& c) {
  json root = json::object();
  RunConfig copy = c;
  bind(Block(&root, {}, nullptr, nullptr), copy);
  return root.dump(2);
}

std::string policy_hash(const RunConfig& c) {
  json root = json::object();
  RunConfig copy = c;
  Block b(&root, {}, nullptr, nullptr);
  bind_fluid(b.child("fluid"), copy);
  bind_fish(b.child("fish"), copy);
  bind_episode(b.child("episode"), copy, false);
  bind_sac(b.child("sac"), copy, true);
  if (c.train.env == EnvKind::kSanity) root["env"] = "sanity";
  const std::string text = root.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace fishswim::config
