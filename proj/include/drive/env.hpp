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

#ifndef DRIVE_ENV_HPP_
#define DRIVE_ENV_HPP_

// Fixed-timestep car simulation on a TrackSpec: steering kinematics for the
// three-action space, footprint collision, the +5 / -20 reward, and the
// normalized forward-facing range sensors.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "drive/error.hpp"
#include "drive/trackmap.hpp"

namespace drive {

// Index values are part of every serialized artifact (checkpoints, traces,
// wire protocol) and must not change.
enum class Action : int { kLeft = 0, kRight = 1, kNoop = 2 };

inline constexpr int kNumActions = 3;

inline const char* action_name(Action a) {
  switch (a) {
    case Action::kLeft: return "LEFT";
    case Action::kRight: return "RIGHT";
    case Action::kNoop: return "NOOP";
  }
  return "?";
}

inline Action action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw Error(ErrorCode::InvalidConfig,
                "action index out of range: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

inline int action_index(Action a) { return static_cast<int>(a); }

struct EnvConfig {
  int n_sensors = 7;
  double sensor_spacing = 20.0;  // degrees between adjacent sensors
  int max_ray = kDefaultMaxRay;
  double speed = 5.0;            // units per step
  double turn_rate = 5.0;        // degrees per step
  int max_steps = 5000;
  int reward_alive = 5;
  int reward_crash = -20;
  double car_half_length = 4.0;
  double car_half_width = 2.0;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

inline void validate(const EnvConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidConfig, "env." + field + " " + why);
  };
  if (c.n_sensors < 1 || c.n_sensors % 2 == 0) fail("n_sensors", "must be odd and >= 1");
  if (!(c.sensor_spacing >= 0.0)) fail("sensor_spacing", "must be >= 0");
  if (c.max_ray < 1) fail("max_ray", "must be >= 1");
  if (!(c.speed > 0.0) || !std::isfinite(c.speed)) fail("speed", "must be > 0");
  if (!(c.turn_rate >= 0.0) || !std::isfinite(c.turn_rate)) fail("turn_rate", "must be >= 0");
  if (c.max_steps < 1) fail("max_steps", "must be >= 1");
  if (!(c.car_half_length >= 0.0)) fail("car_half_length", "must be >= 0");
  if (!(c.car_half_width >= 0.0)) fail("car_half_width", "must be >= 0");
}

struct CarState {
  Pose pose;
  int steps_taken = 0;
  int score = 0;
  bool alive = true;
  bool crashed = false;
  int next_checkpoint = 0;
  int checkpoint_hits = 0;
  int laps = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const CarState&, const CarState&) = default;
};

struct StepResult {
  std::vector<double> observation;
  int reward = 0;
  bool terminal = false;
  bool crashed = false;    // terminal because of a collision
  bool truncated = false;  // terminal because max_steps was reached
  int steps = 0;
  int score = 0;
  bool lap_completed = false;

  friend bool operator==(const StepResult&, const StepResult&) = default;
};

// Oriented-rectangle footprint sampled at its 4 corners, 4 edge midpoints and
// center. `along` runs with the heading, `across` to the car's right.
inline std::array<Point, 9> footprint_samples(const Pose& pose,
                                              const EnvConfig& config) {
  const Point f = direction(pose.theta);
  const Point r{-f.y, f.x};
  const double hl = config.car_half_length;
  const double hw = config.car_half_width;
  static constexpr std::array<std::array<int, 2>, 9> kOffsets{{
      {-1, -1}, {1, -1}, {1, 1}, {-1, 1},  // corners
      {1, 0}, {-1, 0}, {0, -1}, {0, 1},    // edge midpoints
      {0, 0},                              // center
  }};
  std::array<Point, 9> pts{};
  for (std::size_t i = 0; i < kOffsets.size(); ++i) {
    const double a = kOffsets[i][0] * hl;
    const double b = kOffsets[i][1] * hw;
    pts[i] = {pose.x + a * f.x + b * r.x, pose.y + a * f.y + b * r.y};
  }
  return pts;
}

inline bool collides(const Pose& pose, const TrackSpec& track,
                     const EnvConfig& config) {
  for (const Point& p : footprint_samples(pose, config)) {
    if (is_occupied(track.grid, p.x, p.y)) return true;
  }
  return false;
}

// Front-center of the footprint; all sensors start here.
inline Point sensor_origin(const Pose& pose, const EnvConfig& config) {
  const Point f = direction(pose.theta);
  return {pose.x + config.car_half_length * f.x,
          pose.y + config.car_half_length * f.y};
}

inline double sensor_angle(const Pose& pose, const EnvConfig& config, int k) {
  const int center = config.n_sensors / 2;
  return pose.theta + (k - center) * config.sensor_spacing;
}

// Sensor k points at theta + (k - center) * spacing, so index 0 is the
// leftmost ray. Each reading is the raw ray length divided by max_ray.
inline std::vector<double> get_game_state(const Pose& pose,
                                          const TrackSpec& track,
                                          const EnvConfig& config) {
  const Point origin = sensor_origin(pose, config);
  std::vector<double> obs(static_cast<std::size_t>(config.n_sensors));
  for (int k = 0; k < config.n_sensors; ++k) {
    const int raw = ray_cast(track.grid, origin, sensor_angle(pose, config, k),
                             config.max_ray);
    obs[static_cast<std::size_t>(k)] =
        static_cast<double>(raw) / static_cast<double>(config.max_ray);
  }
  return obs;
}

// Places the car at the spawn pose and reports the do-nothing observation
// without moving. The seed is recorded for trace reproducibility only.
inline std::pair<CarState, StepResult> reset(const TrackSpec& track,
                                             const EnvConfig& config,
                                             std::uint64_t seed) {
  validate(config);
  if (is_occupied(track.grid, track.spawn.x, track.spawn.y)) {
    throw Error(ErrorCode::SpawnOccupied, "spawn cell is not drivable");
  }
  CarState state;
  state.pose = track.spawn;
  state.seed = seed;
  StepResult result;
  result.observation = get_game_state(state.pose, track, config);
  return {state, result};
}

inline std::pair<CarState, StepResult> step(const CarState& state,
                                            Action action,
                                            const TrackSpec& track,
                                            const EnvConfig& config) {
  if (!state.alive || state.steps_taken >= config.max_steps) {
    throw Error(ErrorCode::SteppedWhenTerminal,
                "step() called on a finished episode");
  }
  CarState next = state;
  // Turn, then move.
  if (action == Action::kRight) next.pose.theta += config.turn_rate;
  if (action == Action::kLeft) next.pose.theta -= config.turn_rate;
  const Point dir = direction(next.pose.theta);
  next.pose.x += config.speed * dir.x;
  next.pose.y += config.speed * dir.y;
  next.steps_taken += 1;

  StepResult result;
  result.crashed = collides(next.pose, track, config);
  result.reward = result.crashed ? config.reward_crash : config.reward_alive;
  next.score += result.reward;
  next.crashed = result.crashed;
  result.truncated = !result.crashed && next.steps_taken >= config.max_steps;
  result.terminal = result.crashed || result.truncated;
  next.alive = !result.terminal;

  if (!result.crashed && !track.checkpoints.empty()) {
    const Checkpoint& cp =
        track.checkpoints[static_cast<std::size_t>(next.next_checkpoint)];
    if (std::hypot(next.pose.x - cp.x, next.pose.y - cp.y) <= cp.radius) {
      const int n = static_cast<int>(track.checkpoints.size());
      // Returning to checkpoint 0 after the full ordered cycle is a lap.
      if (cp.index == 0 && next.checkpoint_hits >= n) {
        next.laps += 1;
        result.lap_completed = true;
      }
      next.checkpoint_hits += 1;
      next.next_checkpoint = (next.next_checkpoint + 1) % n;
    }
  }

  result.observation = get_game_state(next.pose, track, config);
  result.steps = next.steps_taken;
  result.score = next.score;
  return {next, result};
}

// Stateful wrapper over reset()/step() with gym-style calls.
class Environment {
 public:
  Environment(std::shared_ptr<const TrackSpec> track, EnvConfig config)
      : track_(std::move(track)), config_(config) {
    validate(config_);
    validate_track(*track_);
  }

  StepResult reset(std::uint64_t seed) {
    auto [s, r] = drive::reset(*track_, config_, seed);
    state_ = s;
    return r;
  }

  StepResult step(Action action) {
    auto [s, r] = drive::step(state_, action, *track_, config_);
    state_ = s;
    return r;
  }

  const CarState& state() const { return state_; }
  const TrackSpec& track() const { return *track_; }
  const EnvConfig& config() const { return config_; }

 private:
  std::shared_ptr<const TrackSpec> track_;
  EnvConfig config_;
  CarState state_;
};

}  // namespace drive

#endif  // DRIVE_ENV_HPP_
