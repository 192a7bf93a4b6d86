// Copyright 2026 The dqn-drive Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRIVE_TRAINING_HPP_
#define DRIVE_TRAINING_HPP_

// Experiment orchestration: seeded training runs (metrics CSV, periodic
// checkpoints, optional episode traces), greedy evaluation, and the frame
// JSON shared with the stream server.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "drive/agent.hpp"
#include "drive/config.hpp"
#include "drive/digest.hpp"
#include "drive/env.hpp"
#include "drive/metrics.hpp"
#include "drive/nn.hpp"
#include "drive/trace.hpp"
#include "drive/trackmap.hpp"

namespace drive {

// Wire-protocol frame for one simulation step.
inline nlohmann::ordered_json make_frame(int t, const Pose& pose,
                                         const std::vector<double>& sensors,
                                         Action action, int reward, int score,
                                         bool terminal, double epsilon) {
  nlohmann::ordered_json j;
  j["type"] = "frame";
  j["t"] = t;
  j["x"] = pose.x;
  j["y"] = pose.y;
  j["theta"] = pose.theta;
  j["sensors"] = sensors;
  j["action"] = action_index(action);
  j["reward"] = reward;
  j["score"] = score;
  j["terminal"] = terminal;
  j["epsilon"] = epsilon;
  return j;
}

inline nlohmann::ordered_json make_end(int score, int steps) {
  nlohmann::ordered_json j;
  j["type"] = "end";
  j["score"] = score;
  j["steps"] = steps;
  return j;
}

// The output directory is where a run lands, not what it computes, so it is
// left out of the digest.
inline std::string config_digest(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("out_dir");
  return sha256_hex(j.dump());
}

inline std::string track_digest(const TrackSpec& t) { return sha256_hex(serialize_trk(t)); }

// Seed passed to env reset for a given episode.
inline std::uint64_t episode_seed(std::uint64_t run_seed, int episode) {
  return derive_seed(run_seed, 1000 + static_cast<std::uint64_t>(episode));
}

// Common face of the DQN and baseline learners used by the episode loop.
class Learner {
 public:
  explicit Learner(const ExperimentConfig& c) : agent_(make(c)) {}

  ActionChoice select_action(std::span<const double> s) {
    return std::visit([&](auto& a) { return a.select_action(s); }, agent_);
  }

  // Feeds one transition; returns the loss when a training step ran.
  std::optional<double> observe(Transition t) {
    if (auto* dqn = std::get_if<DqnAgent>(&agent_)) {
      dqn->push(std::move(t));
      return dqn->train_step();
    }
    return std::get<VanillaAgent>(agent_).act_and_learn(t);
  }

  double decay_epsilon() {
    return std::visit([](auto& a) { return a.decay_epsilon(); }, agent_);
  }
  double epsilon() const {
    return std::visit([](const auto& a) { return a.epsilon(); }, agent_);
  }
  const Mlp& net() const {
    if (const auto* dqn = std::get_if<DqnAgent>(&agent_)) return dqn->main_net();
    return std::get<VanillaAgent>(agent_).net();
  }

 private:
  using Agent = std::variant<DqnAgent, VanillaAgent>;

  static Agent make(const ExperimentConfig& c) {
    if (c.agent_kind == AgentKind::kVanillaNn) {
      return Agent(std::in_place_type<VanillaAgent>, c.hp, c.optimizer, c.seed);
    }
    const AgentMode mode =
        c.agent_kind == AgentKind::kDqnModified ? AgentMode::kModified : AgentMode::kOriginal;
    return Agent(std::in_place_type<DqnAgent>, c.hp, mode, c.priority, c.optimizer, c.seed);
  }

  Agent agent_;
};

struct TrainingHooks {
  // Called with every step frame (live streaming).
  std::function<void(const nlohmann::ordered_json&)> on_frame;
  // Called after each finished episode.
  std::function<void(const MetricsRow&)> on_episode;
  // Called with the last episode's score and the total step count.
  std::function<void(const nlohmann::ordered_json&)> on_end;
};

struct TrainingSummary {
  std::filesystem::path metrics_path;
  std::vector<std::filesystem::path> checkpoint_paths;
  std::filesystem::path final_model_path;
  std::vector<std::filesystem::path> trace_paths;
  std::vector<MetricsRow> rows;
  Mlp final_model;
};

inline std::string numbered(const char* prefix, int n, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%05d%s", prefix, n, ext);
  return buf;
}

// Runs cfg.episodes episodes: reset, then select -> step -> store/train ->
// decay epsilon until terminal. Deterministic for a fixed config.
inline TrainingSummary run_training(const ExperimentConfig& cfg,
                                    const TrainingHooks& hooks = {}) {
  validate(cfg);
  namespace fs = std::filesystem;
  const auto track = std::make_shared<const TrackSpec>(load_track(cfg.track));
  Environment env(track, cfg.env);
  Learner learner(cfg);

  const fs::path out_dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "config.json", to_json(cfg).dump(2) + "\n");

  TrainingSummary summary;
  summary.metrics_path = out_dir / "metrics.csv";
  MetricsWriter metrics(summary.metrics_path);
  const std::set<int> traced(cfg.trace_episodes.begin(), cfg.trace_episodes.end());
  const TraceHeader header{track_digest(*track), config_digest(cfg), cfg.seed};

  std::int64_t total_steps = 0;
  int last_score = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const auto started = std::chrono::steady_clock::now();
    StepResult res = env.reset(episode_seed(cfg.seed, ep));
    std::vector<double> obs = res.observation;
    const bool tracing = traced.count(ep) > 0;
    Trace trace{header, {}};
    double loss_sum = 0.0;
    int loss_count = 0;

    for (;;) {
      const double eps_used = learner.epsilon();
      ActionChoice choice = learner.select_action(obs);
      res = env.step(choice.action);
      Transition tr{obs, choice.action, res.reward, res.observation, res.terminal,
                    res.truncated};
      try {
        if (auto loss = learner.observe(std::move(tr))) {
          loss_sum += *loss;
          ++loss_count;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteGradient) throw;
        throw Error(ErrorCode::DivergedNonFinite,
                    "episode " + std::to_string(ep) + " step " + std::to_string(res.steps) +
                        ": " + e.what());
      }
      learner.decay_epsilon();
      ++total_steps;

      const Pose& pose = env.state().pose;
      if (tracing) {
        trace.events.push_back({res.steps, pose.x, pose.y, pose.theta, choice.action,
                                res.reward, res.observation, eps_used, choice.explored});
      }
      if (hooks.on_frame) {
        hooks.on_frame(make_frame(res.steps, pose, res.observation, choice.action,
                                  res.reward, res.score, res.terminal, eps_used));
      }
      obs = std::move(res.observation);
      if (res.terminal) break;
    }

    MetricsRow row;
    row.episode = ep;
    row.steps = env.state().steps_taken;
    row.total_reward = env.state().score;
    row.epsilon_end = learner.epsilon();
    row.mean_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.laps = env.state().laps;
    if (cfg.record_wall_ms) {
      row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - started)
                        .count();
    }
    metrics.append(row);
    summary.rows.push_back(row);
    last_score = row.total_reward;
    if (hooks.on_episode) hooks.on_episode(row);

    if (tracing) {
      const fs::path p = out_dir / numbered("trace_ep", ep, ".jsonl");
      write_trace(p, trace);
      summary.trace_paths.push_back(p);
    }
    if ((ep + 1) % cfg.checkpoint_every == 0) {
      const fs::path p = out_dir / numbered("model_ep", ep + 1, ".json");
      write_file(p, save_model(learner.net()));
      summary.checkpoint_paths.push_back(p);
    }
  }
  summary.final_model_path = out_dir / "model_final.json";
  write_file(summary.final_model_path, save_model(learner.net()));
  summary.checkpoint_paths.push_back(summary.final_model_path);
  summary.final_model = learner.net();
  if (hooks.on_end) {
    hooks.on_end(make_end(last_score, static_cast<int>(std::min<std::int64_t>(
                                          total_steps, std::numeric_limits<int>::max()))));
  }
  return summary;
}

struct EvalOptions {
  int episodes = 20;
  AgentKind agent_kind = AgentKind::kDqnOriginal;
  std::uint64_t seed = 1;
  EnvConfig env;
  PriorityConfig priority;
  // When set, episode 0 is written here as a TRACEv1 file.
  std::optional<std::filesystem::path> trace_path;
};

struct EvalStats {
  int episodes = 0;
  double mean_reward = 0.0;
  int max_reward = 0;
  int min_reward = 0;
  double mean_steps = 0.0;
  int laps = 0;
  std::vector<int> rewards;
};

// Pure exploitation (epsilon 0): no learning and no buffer writes.
inline EvalStats run_eval(const Mlp& net, const TrackSpec& track, const EvalOptions& opt) {
  if (opt.episodes < 1) throw Error(ErrorCode::EmptyEval, "episodes must be >= 1");
  if (net.input_dim() != opt.env.n_sensors || net.output_dim() != kNumActions) {
    throw Error(ErrorCode::ShapeMismatch, "model dims do not match the environment");
  }
  const AgentMode mode =
      opt.agent_kind == AgentKind::kDqnModified ? AgentMode::kModified : AgentMode::kOriginal;
  if (mode == AgentMode::kModified) validate(opt.priority, opt.env.n_sensors);
  Environment env(std::make_shared<const TrackSpec>(track), opt.env);
  Rng rng(derive_seed(opt.seed, 2));

  EvalStats stats;
  stats.episodes = opt.episodes;
  std::int64_t total_steps = 0;
  std::int64_t total_reward = 0;
  for (int ep = 0; ep < opt.episodes; ++ep) {
    StepResult res = env.reset(episode_seed(opt.seed, ep));
    Trace trace;
    const bool tracing = ep == 0 && opt.trace_path.has_value();
    if (tracing) {
      trace.header = {track_digest(track), sha256_hex("eval"), opt.seed};
    }
    while (!res.terminal) {
      const ActionChoice c =
          select_epsilon_greedy(net, res.observation, 0.0, mode, opt.priority, rng);
      res = env.step(c.action);
      if (tracing) {
        const Pose& p = env.state().pose;
        trace.events.push_back(
            {res.steps, p.x, p.y, p.theta, c.action, res.reward, res.observation, 0.0, false});
      }
    }
    if (tracing) write_trace(*opt.trace_path, trace);
    const int score = env.state().score;
    stats.rewards.push_back(score);
    total_reward += score;
    total_steps += env.state().steps_taken;
    stats.laps += env.state().laps;
  }
  stats.mean_reward = static_cast<double>(total_reward) / opt.episodes;
  stats.mean_steps = static_cast<double>(total_steps) / opt.episodes;
  stats.max_reward = *std::max_element(stats.rewards.begin(), stats.rewards.end());
  stats.min_reward = *std::min_element(stats.rewards.begin(), stats.rewards.end());
  return stats;
}

inline EvalStats run_eval(const std::filesystem::path& model_path, const TrackSpec& track,
                          const EvalOptions& opt) {
  if (opt.episodes < 1) throw Error(ErrorCode::EmptyEval, "episodes must be >= 1");
  return run_eval(load_model(read_file(model_path)), track, opt);
}

}  // namespace drive

#endif  // DRIVE_TRAINING_HPP_
