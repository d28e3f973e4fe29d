#include "fishswim/calibrate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numbers>
#include <sstream>
#include <limits>
#include <tuple>
#include <utility>

#include "fishswim/errors.hpp"

namespace fishswim::calibrate {

std::vector<double> generate_excitation(const Excitation& e, double joint_limit) {
  if (std::abs(e.amplitude) > joint_limit) {
    throw ConfigError("excitation amplitude " + std::to_string(rad2deg(e.amplitude)) + " deg exceeds the joint limit");
  }
  if (!(e.duration > 0.0)) throw ConfigError("excitation duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(e.duration / kSamplePeriod));
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * kSamplePeriod;
    if (e.kind == ExcitationKind::kStep) {
      out[k] = t + 1e-12 >= e.step_time ? e.amplitude : 0.0;
    } else {
      out[k] = e.amplitude * std::sin(2.0 * std::numbers::pi * e.frequency * t);
    }
  }
  return out;
}

void validate(const ResponseTrace& trace) {
  const std::size_t n = trace.t.size();
  if (trace.command.size() != n || trace.measured.size() != n) throw DataError("trace columns differ in length");
  for (std::size_t k = 1; k < n; ++k) {
    const double step = trace.t[k] - trace.t[k - 1];
    if (!(step > 0.0)) throw DataError("trace timestamps must increase (row " + std::to_string(k + 1) + ")");
    if (std::abs(step - kSamplePeriod) > 1e-6) {
      throw DataError("trace sample spacing must be 0.02 s, got " + std::to_string(step) + " s at row " +
                      std::to_string(k + 1));
    }
  }
}

std::string to_csv(const ResponseTrace& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "t,j1_cmd,j1_pos,j2_cmd,j2_pos,j3_cmd,j3_pos\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out << trace.t[k];
    for (int j = 0; j < body::kJoints; ++j) out << ',' << trace.command[k][j] << ',' << trace.measured[k][j];
    out << '\n';
  }
  return out.str();
}

ResponseTrace parse_csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  ResponseTrace trace;
  trace.name = name;
  if (!std::getline(in, line)) throw DataError("empty reference trace " + name);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string header;
  for (char c : line) {
    if (c != ' ') header += c;
  }
  if (header != "t,j1_cmd,j1_pos,j2_cmd,j2_pos,j3_cmd,j3_pos") {
    throw DataError(name + ": expected header t,j1_cmd,j1_pos,j2_cmd,j2_pos,j3_cmd,j3_pos, got '" + line + "'");
  }
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 7> v{};
    std::size_t pos = 0;
    for (int c = 0; c < 7; ++c) {
      const std::size_t end = line.find(',', pos);
      if ((c < 6) != (end != std::string::npos)) {
        throw DataError(name + ": row " + std::to_string(row) + " must have 7 columns");
      }
      std::string cell = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      cell.erase(0, cell.find_first_not_of(' '));
      cell.erase(cell.find_last_not_of(' ') + 1);
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v[c]);
      if (r.ec != std::errc() || r.ptr != cell.data() + cell.size() || !std::isfinite(v[c])) {
        throw DataError(name + ": row " + std::to_string(row) + " column " + std::to_string(c + 1) +
                        " is not a number: '" + cell + "'");
      }
      pos = end + 1;
    }
    trace.t.push_back(v[0]);
    trace.command.push_back({v[1], v[3], v[5]});
    trace.measured.push_back({v[2], v[4], v[6]});
  }
  if (trace.t.empty()) throw DataError(name + ": reference trace has no samples");
  validate(trace);
  return trace;
}

ResponseTrace read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open reference trace " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

void write_csv(const std::string& path, const ResponseTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << to_csv(trace);
}

OpenLoopSetup default_open_loop_setup() {
  OpenLoopSetup s;
  s.sim.nx = 64;
  s.sim.ny = 64;
  s.sim.fluid.domain_x = 1.2;
  s.sim.fluid.domain_y = 1.2;
  return s;
}

ResponseTrace run_open_loop(const std::vector<body::JointVector>& commands, const ServoParams& params,
                            const OpenLoopSetup& setup) {
  if (!(params.kp > 0.0) || !(params.kd >= 0.0) || !(params.latency >= 0.0)) {
    throw ConfigError("servo parameters must be kp > 0, kd >= 0, latency >= 0");
  }
  coupling::SimConfig cfg = setup.sim;
  cfg.servo.kp.fill(params.kp);
  cfg.servo.kd.fill(params.kd);
  body::FishState fish;
  fish.base_position = {0.5 * cfg.fluid.domain_x + 0.5 * cfg.morphology.total_length(), 0.5 * cfg.fluid.domain_y};
  const int delay = body::latency_steps(params.latency, cfg.dt);
  coupling::CoupledSim sim(cfg, fish, delay);

  ResponseTrace trace;
  trace.t.reserve(commands.size());
  for (std::size_t k = 0; k < commands.size(); ++k) {
    trace.t.push_back(static_cast<double>(k) * kSamplePeriod);
    trace.command.push_back(commands[k]);
    trace.measured.push_back(sim.fish().joint_angles);
    sim.command(commands[k]);
    for (int s = 0; s < setup.substeps_per_sample; ++s) sim.substep();
  }
  return trace;
}

ResponseTrace run_open_loop(const std::vector<double>& commands, const ServoParams& params,
                            const OpenLoopSetup& setup) {
  std::vector<body::JointVector> c(commands.size());
  for (std::size_t k = 0; k < commands.size(); ++k) c[k].fill(commands[k]);
  return run_open_loop(c, params, setup);
}

body::JointVector response_error(const ResponseTrace& sim, const ResponseTrace& ref) {
  if (sim.size() != ref.size() || sim.measured.size() != ref.measured.size()) {
    throw DataError("response traces differ in length (" + std::to_string(sim.size()) + " vs " +
                    std::to_string(ref.size()) + ")");
  }
  if (sim.size() == 0) throw DataError("response traces are empty");
  body::JointVector out{};
  for (std::size_t k = 0; k < sim.size(); ++k) {
    if (std::abs(sim.t[k] - ref.t[k]) > 1e-6) throw DataError("response trace timestamps are not aligned");
    for (int j = 0; j < body::kJoints; ++j) {
      const double d = sim.measured[k][j] - ref.measured[k][j];
      out[j] += d * d;
    }
  }
  for (double& v : out) v = std::sqrt(v / static_cast<double>(sim.size()));
  return out;
}

namespace {

bool is_step_like(const ResponseTrace& t) {
  std::vector<double> values;
  for (const auto& c : t.command) {
    if (std::none_of(values.begin(), values.end(), [&](double v) { return std::abs(v - c[0]) < 1e-9; })) {
      values.push_back(c[0]);
      if (values.size() > 2) return false;
    }
  }
  return true;
}

// Joint angles before every substep of a zero-latency run.
std::vector<body::JointVector> substep_response(const std::vector<body::JointVector>& commands, double kp, double kd,
                                                const OpenLoopSetup& setup) {
  coupling::SimConfig cfg = setup.sim;
  cfg.servo.kp.fill(kp);
  cfg.servo.kd.fill(kd);
  body::FishState fish;
  fish.base_position = {0.5 * cfg.fluid.domain_x + 0.5 * cfg.morphology.total_length(), 0.5 * cfg.fluid.domain_y};
  coupling::CoupledSim sim(cfg, fish, 0);
  std::vector<body::JointVector> out;
  out.reserve(commands.size() * static_cast<std::size_t>(setup.substeps_per_sample));
  for (const body::JointVector& c : commands) {
    sim.command(c);
    for (int s = 0; s < setup.substeps_per_sample; ++s) {
      out.push_back(sim.fish().joint_angles);
      sim.substep();
    }
  }
  return out;
}

// The fish starts at rest, so a command latency of d substeps shifts the
// zero-latency response by d substeps. One simulation per (kp, kd) then
// scores every latency.
class Objective {
 public:
  Objective(const std::vector<ResponseTrace>& refs, const OpenLoopSetup& setup, int max_delay)
      : refs_(refs), setup_(setup), max_delay_(max_delay) {}

  struct Entry {
    int delay = 0;  // best substep delay, smallest among ties
    double total = 0.0;
    std::vector<double> by_delay;
  };

  const Entry& gains(double kp, double kd) {
    const auto key = std::make_pair(kp, kd);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Entry e;
    e.by_delay.assign(static_cast<std::size_t>(max_delay_) + 1, 0.0);
    const auto stride = static_cast<std::int64_t>(setup_.substeps_per_sample);
    for (const ResponseTrace& ref : refs_) {
      const std::vector<body::JointVector> y = substep_response(ref.command, kp, kd, setup_);
      for (int d = 0; d <= max_delay_; ++d) {
        body::JointVector sq{};
        for (std::size_t k = 0; k < ref.size(); ++k) {
          const std::int64_t at = static_cast<std::int64_t>(k) * stride - d;
          const body::JointVector& sim = y[static_cast<std::size_t>(std::max<std::int64_t>(at, 0))];
          for (int j = 0; j < body::kJoints; ++j) {
            const double diff = sim[j] - ref.measured[k][j];
            sq[j] += diff * diff;
          }
        }
        for (double v : sq) e.by_delay[static_cast<std::size_t>(d)] += std::sqrt(v / static_cast<double>(ref.size()));
      }
    }
    e.total = std::numeric_limits<double>::infinity();
    for (int d = 0; d <= max_delay_; ++d) {
      if (e.by_delay[static_cast<std::size_t>(d)] < e.total) {
        e.total = e.by_delay[static_cast<std::size_t>(d)];
        e.delay = d;
      }
    }
    ++evaluations_;
    return cache_.emplace(key, std::move(e)).first->second;
  }

  int evaluations() const { return evaluations_; }

 private:
  const std::vector<ResponseTrace>& refs_;
  const OpenLoopSetup& setup_;
  int max_delay_;
  std::map<std::pair<double, double>, Entry> cache_;
  int evaluations_ = 0;
};

}  // namespace

FitResult fit_servo_params(const std::vector<ResponseTrace>& refs, const OpenLoopSetup& setup,
                           const FitOptions& options) {
  if (refs.empty()) throw DataError("calibration needs at least one reference trace");
  for (const ResponseTrace& r : refs) validate(r);
  const bool has_step = std::any_of(refs.begin(), refs.end(), is_step_like);
  const bool has_other = std::any_of(refs.begin(), refs.end(), [](const ResponseTrace& r) { return !is_step_like(r); });
  if (!has_step || !has_other) throw DataError("calibration needs at least one step and one sinusoid reference");

  const double dt = setup.sim.dt;
  const int min_delay = body::latency_steps(options.latency_range[0], dt);
  const int max_delay = body::latency_steps(options.latency_range[1], dt);
  if (min_delay > max_delay) throw ConfigError("calibration latency range is empty");
  Objective objective(refs, setup, std::max(max_delay, body::latency_steps(options.initial.latency, dt)));

  struct Candidate {
    double kp = 0.0;
    double kd = 0.0;
    int delay = 0;
    double total = std::numeric_limits<double>::infinity();
  };
  // Best latency within the allowed range for the given gains.
  auto score = [&](double kp, double kd) {
    const Objective::Entry& e = objective.gains(kp, kd);
    Candidate c{kp, kd, min_delay, e.by_delay[static_cast<std::size_t>(min_delay)]};
    for (int d = min_delay + 1; d <= max_delay; ++d) {
      if (e.by_delay[static_cast<std::size_t>(d)] < c.total) {
        c.total = e.by_delay[static_cast<std::size_t>(d)];
        c.delay = d;
      }
    }
    return c;
  };

  FitResult result;
  const int initial_delay = body::latency_steps(options.initial.latency, dt);
  const Candidate initial{options.initial.kp, options.initial.kd, initial_delay,
                          objective.gains(options.initial.kp, options.initial.kd)
                              .by_delay[static_cast<std::size_t>(initial_delay)]};
  result.initial_rmse = initial.total;

  // Grid in lexicographic order so a strict < keeps the smallest tuple among
  // ties.
  Candidate best;
  for (double kp : options.kp_grid) {
    for (double kd : options.kd_grid) {
      const Candidate c = score(kp, kd);
      if (c.total < best.total) best = c;
    }
  }

  // Pattern search on log gains: axis and diagonal moves, halving the step
  // (in log space) when none improves.
  const int budget = objective.evaluations() + options.max_refinement_evaluations;
  double step = std::log(2.0);
  const std::array<std::pair<int, int>, 8> moves{
      {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}}};
  while (step > std::log(1.005) && objective.evaluations() < budget) {
    bool improved = false;
    for (const auto& [mp, md] : moves) {
      if (objective.evaluations() >= budget) break;
      const double kp = std::clamp(best.kp * std::exp(mp * step), options.kp_range[0], options.kp_range[1]);
      const double kd = std::clamp(best.kd * std::exp(md * step), options.kd_range[0], options.kd_range[1]);
      const Candidate c = score(kp, kd);
      if (c.total < best.total) {
        best = c;
        improved = true;
        break;
      }
    }
    if (!improved) step *= 0.5;
  }
  if (objective.evaluations() >= budget) result.warning = "refinement stopped at the evaluation budget";

  if (initial.total <= best.total) {
    if (initial.total < best.total || best.kp != initial.kp || best.kd != initial.kd || best.delay != initial.delay) {
      result.warning = "search did not improve on the initial guess; returning it";
    }
    best = initial;
  }
  result.params = {best.kp, best.kd, best.delay * dt};
  // Residuals from a full run with the latency in the loop.
  result.total_rmse = 0.0;
  for (const ResponseTrace& ref : refs) {
    result.residuals.push_back(response_error(run_open_loop(ref.command, result.params, setup), ref));
    for (double v : result.residuals.back()) result.total_rmse += v;
  }
  result.evaluations = objective.evaluations();
  return result;
}

std::string to_json(const FitResult& r) {
  nlohmann::json j;
  j["servo"] = {{"kp", r.params.kp}, {"kd", r.params.kd}, {"latency", r.params.latency}};
  j["total_rmse"] = r.total_rmse;
  j["initial_rmse"] = r.initial_rmse;
  j["evaluations"] = r.evaluations;
  nlohmann::json res = nlohmann::json::array();
  for (const auto& v : r.residuals) res.push_back(v);
  j["residual_rmse"] = res;
  j["warning"] = r.warning;
  return j.dump(2);
}

}  // namespace fishswim::calibrate
