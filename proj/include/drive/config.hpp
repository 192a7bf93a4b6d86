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

#ifndef DRIVE_CONFIG_HPP_
#define DRIVE_CONFIG_HPP_

// ExperimentConfig and its JSON form. The JSON keys mirror the struct field
// names; unknown keys are rejected so typos surface as validation errors.
// See configs/experiment.schema.json for the documented schema.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drive/agent.hpp"
#include "drive/env.hpp"
#include "drive/error.hpp"
#include "drive/nn.hpp"
#include "drive/trackmap.hpp"

namespace drive {

enum class AgentKind { kDqnOriginal, kDqnModified, kVanillaNn };

inline const char* agent_kind_name(AgentKind k) {
  switch (k) {
    case AgentKind::kDqnOriginal: return "DQN_ORIGINAL";
    case AgentKind::kDqnModified: return "DQN_MODIFIED";
    case AgentKind::kVanillaNn: return "VANILLA_NN";
  }
  return "?";
}

inline AgentKind parse_agent_kind(const std::string& s) {
  if (s == "DQN_ORIGINAL" || s == "original") return AgentKind::kDqnOriginal;
  if (s == "DQN_MODIFIED" || s == "modified") return AgentKind::kDqnModified;
  if (s == "VANILLA_NN" || s == "vanilla") return AgentKind::kVanillaNn;
  throw Error(ErrorCode::ConfigInvalid, "agent_kind: unknown value '" + s + "'");
}

// Either a TRK1 file or a generator with its parameters.
struct TrackSource {
  std::string path;                // TRK1 file; wins when non-empty
  std::string generator = "ring";  // "ring" | "corridor"
  RingParams ring;
  int corridor_length = 200;
  int corridor_width = 21;

  friend bool operator==(const TrackSource&, const TrackSource&) = default;
};

struct StreamSettings {
  int port = 8765;
  std::string mode = "live";  // live | play
  int tick_hz = 30;
  int wait_clients = 0;       // live: clients to wait for before training

  friend bool operator==(const StreamSettings&, const StreamSettings&) = default;
};

struct ExperimentConfig {
  TrackSource track;
  EnvConfig env;
  Hyperparams hp;
  AgentKind agent_kind = AgentKind::kDqnOriginal;
  PriorityConfig priority;
  OptimizerSettings optimizer;
  std::uint64_t seed = 1;
  int episodes = 1000;
  std::string out_dir = "runs/default";
  int checkpoint_every = 50;
  std::vector<int> trace_episodes;
  // Off by default: wall-clock times would break byte-identical metrics.
  bool record_wall_ms = false;
  std::optional<StreamSettings> stream;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where,
                           std::initializer_list<const char*> known) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::ConfigInvalid, where + ": expected an object");
  }
  const std::set<std::string> allowed(known.begin(), known.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw Error(ErrorCode::ConfigInvalid,
                  (where.empty() ? "" : where + ".") + it.key() + ": unknown field");
    }
  }
}

template <typename T>
void read_field(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ConfigInvalid,
                (where.empty() ? "" : where + ".") + key + ": wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json track;
  if (!c.track.path.empty()) {
    track["path"] = c.track.path;
  } else if (c.track.generator == "corridor") {
    track = {{"generator", "corridor"},
             {"length", c.track.corridor_length},
             {"width", c.track.corridor_width}};
  } else {
    track = {{"generator", c.track.generator},
             {"width", c.track.ring.width},
             {"height", c.track.ring.height},
             {"outer_radius", c.track.ring.outer_radius},
             {"inner_radius", c.track.ring.inner_radius},
             {"n_checkpoints", c.track.ring.n_checkpoints}};
  }
  json j = {
      {"track", track},
      {"env",
       {{"n_sensors", c.env.n_sensors},
        {"sensor_spacing", c.env.sensor_spacing},
        {"max_ray", c.env.max_ray},
        {"speed", c.env.speed},
        {"turn_rate", c.env.turn_rate},
        {"max_steps", c.env.max_steps},
        {"reward_alive", c.env.reward_alive},
        {"reward_crash", c.env.reward_crash},
        {"car_half_length", c.env.car_half_length},
        {"car_half_width", c.env.car_half_width}}},
      {"hp",
       {{"epsilon_start", c.hp.epsilon_start},
        {"epsilon_min", c.hp.epsilon_min},
        {"epsilon_decay", c.hp.epsilon_decay},
        {"gamma", c.hp.gamma},
        {"capacity", c.hp.capacity},
        {"min_replay", c.hp.min_replay},
        {"batch_size", c.hp.batch_size},
        {"target_sync_every", c.hp.target_sync_every},
        {"bootstrap_truncated", c.hp.bootstrap_truncated}}},
      {"agent_kind", agent_kind_name(c.agent_kind)},
      {"priority",
       {{"beta", c.priority.beta},
        {"tau", c.priority.tau},
        {"left_sensors", c.priority.left_sensors},
        {"right_sensors", c.priority.right_sensors}}},
      {"optimizer",
       {{"kind", c.optimizer.kind == OptimizerKind::kAdam ? "adam" : "sgd"},
        {"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"seed", c.seed},
      {"episodes", c.episodes},
      {"out_dir", c.out_dir},
      {"checkpoint_every", c.checkpoint_every},
      {"trace_episodes", c.trace_episodes},
      {"record_wall_ms", c.record_wall_ms},
  };
  if (c.stream) {
    j["stream"] = {{"port", c.stream->port},
                   {"mode", c.stream->mode},
                   {"tick_hz", c.stream->tick_hz},
                   {"wait_clients", c.stream->wait_clients}};
  }
  return j;
}

// Missing keys keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  using detail::reject_unknown;
  ExperimentConfig c;
  reject_unknown(j, "", {"track", "env", "hp", "agent_kind", "priority", "optimizer",
                         "seed", "episodes", "out_dir", "checkpoint_every",
                         "trace_episodes", "record_wall_ms", "stream"});
  if (j.contains("track")) {
    const auto& t = j["track"];
    reject_unknown(t, "track", {"path", "generator", "width", "height", "outer_radius",
                                "inner_radius", "n_checkpoints", "length"});
    read_field(t, "track", "path", c.track.path);
    read_field(t, "track", "generator", c.track.generator);
    if (c.track.generator == "corridor") {
      read_field(t, "track", "length", c.track.corridor_length);
      read_field(t, "track", "width", c.track.corridor_width);
    } else {
      read_field(t, "track", "width", c.track.ring.width);
      read_field(t, "track", "height", c.track.ring.height);
      read_field(t, "track", "outer_radius", c.track.ring.outer_radius);
      read_field(t, "track", "inner_radius", c.track.ring.inner_radius);
      read_field(t, "track", "n_checkpoints", c.track.ring.n_checkpoints);
    }
  }
  if (j.contains("env")) {
    const auto& e = j["env"];
    reject_unknown(e, "env", {"n_sensors", "sensor_spacing", "max_ray", "speed", "turn_rate",
                              "max_steps", "reward_alive", "reward_crash",
                              "car_half_length", "car_half_width"});
    read_field(e, "env", "n_sensors", c.env.n_sensors);
    read_field(e, "env", "sensor_spacing", c.env.sensor_spacing);
    read_field(e, "env", "max_ray", c.env.max_ray);
    read_field(e, "env", "speed", c.env.speed);
    read_field(e, "env", "turn_rate", c.env.turn_rate);
    read_field(e, "env", "max_steps", c.env.max_steps);
    read_field(e, "env", "reward_alive", c.env.reward_alive);
    read_field(e, "env", "reward_crash", c.env.reward_crash);
    read_field(e, "env", "car_half_length", c.env.car_half_length);
    read_field(e, "env", "car_half_width", c.env.car_half_width);
  }
  if (j.contains("hp")) {
    const auto& h = j["hp"];
    reject_unknown(h, "hp", {"epsilon_start", "epsilon_min", "epsilon_decay", "gamma",
                             "capacity", "min_replay", "batch_size", "target_sync_every",
                             "bootstrap_truncated"});
    read_field(h, "hp", "epsilon_start", c.hp.epsilon_start);
    read_field(h, "hp", "epsilon_min", c.hp.epsilon_min);
    read_field(h, "hp", "epsilon_decay", c.hp.epsilon_decay);
    read_field(h, "hp", "gamma", c.hp.gamma);
    read_field(h, "hp", "capacity", c.hp.capacity);
    read_field(h, "hp", "min_replay", c.hp.min_replay);
    read_field(h, "hp", "batch_size", c.hp.batch_size);
    read_field(h, "hp", "target_sync_every", c.hp.target_sync_every);
    read_field(h, "hp", "bootstrap_truncated", c.hp.bootstrap_truncated);
  }
  if (j.contains("agent_kind")) {
    std::string kind;
    read_field(j, "", "agent_kind", kind);
    c.agent_kind = parse_agent_kind(kind);
  }
  if (j.contains("priority")) {
    const auto& p = j["priority"];
    reject_unknown(p, "priority", {"beta", "tau", "left_sensors", "right_sensors"});
    read_field(p, "priority", "beta", c.priority.beta);
    read_field(p, "priority", "tau", c.priority.tau);
    read_field(p, "priority", "left_sensors", c.priority.left_sensors);
    read_field(p, "priority", "right_sensors", c.priority.right_sensors);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    reject_unknown(o, "optimizer", {"kind", "learning_rate", "beta1", "beta2", "epsilon"});
    std::string kind = "adam";
    read_field(o, "optimizer", "kind", kind);
    if (kind == "adam") {
      c.optimizer.kind = OptimizerKind::kAdam;
    } else if (kind == "sgd") {
      c.optimizer.kind = OptimizerKind::kSgd;
    } else {
      throw Error(ErrorCode::ConfigInvalid, "optimizer.kind: unknown value '" + kind + "'");
    }
    read_field(o, "optimizer", "learning_rate", c.optimizer.learning_rate);
    read_field(o, "optimizer", "beta1", c.optimizer.beta1);
    read_field(o, "optimizer", "beta2", c.optimizer.beta2);
    read_field(o, "optimizer", "epsilon", c.optimizer.epsilon);
  }
  read_field(j, "", "seed", c.seed);
  read_field(j, "", "episodes", c.episodes);
  read_field(j, "", "out_dir", c.out_dir);
  read_field(j, "", "checkpoint_every", c.checkpoint_every);
  read_field(j, "", "trace_episodes", c.trace_episodes);
  read_field(j, "", "record_wall_ms", c.record_wall_ms);
  if (j.contains("stream") && !j["stream"].is_null()) {
    const auto& s = j["stream"];
    reject_unknown(s, "stream", {"port", "mode", "tick_hz", "wait_clients"});
    StreamSettings st;
    read_field(s, "stream", "port", st.port);
    read_field(s, "stream", "mode", st.mode);
    read_field(s, "stream", "tick_hz", st.tick_hz);
    read_field(s, "stream", "wait_clients", st.wait_clients);
    c.stream = st;
  }
  c.hp.episodes = c.episodes;
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline TrackSpec load_track(const TrackSource& src) {
  if (!src.path.empty()) {
    const std::filesystem::path p(src.path);
    return parse_trk(read_file(p), p.stem().string());
  }
  if (src.generator == "ring") return gen_ring_track(src.ring);
  if (src.generator == "corridor") {
    return gen_corridor_track(src.corridor_length, src.corridor_width);
  }
  throw Error(ErrorCode::ConfigInvalid, "track.generator: unknown value '" + src.generator + "'");
}

// Throws ConfigInvalid with the offending field named.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
  auto rethrow = [&](auto&& check) {
    try {
      check();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid) throw;
      fail(e.what());
    }
  };
  if (!c.track.path.empty() && !std::filesystem::exists(c.track.path)) {
    fail("track.path: file does not exist: " + c.track.path);
  }
  if (c.track.path.empty() && c.track.generator != "ring" && c.track.generator != "corridor") {
    fail("track.generator: unknown value '" + c.track.generator + "'");
  }
  rethrow([&] { validate(c.env); });
  rethrow([&] { validate(c.hp); });
  if (c.agent_kind == AgentKind::kDqnModified) {
    rethrow([&] { validate(c.priority, c.env.n_sensors); });
  }
  if (!(c.optimizer.learning_rate > 0.0)) fail("optimizer.learning_rate must be > 0");
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0)) fail("optimizer.beta1 must be in [0, 1)");
  if (!(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0)) fail("optimizer.beta2 must be in [0, 1)");
  if (!(c.optimizer.epsilon > 0.0)) fail("optimizer.epsilon must be > 0");
  if (c.episodes < 1) fail("episodes must be >= 1");
  if (c.checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (c.out_dir.empty()) fail("out_dir must be set");
  for (int e : c.trace_episodes) {
    if (e < 0 || e >= c.episodes) fail("trace_episodes: episode " + std::to_string(e) + " out of range");
  }
  if (c.stream) {
    if (c.stream->port < 0 || c.stream->port > 65535) fail("stream.port out of range");
    if (c.stream->mode != "live" && c.stream->mode != "play") fail("stream.mode must be live or play");
    if (c.stream->tick_hz < 1) fail("stream.tick_hz must be >= 1");
    if (c.stream->wait_clients < 0) fail("stream.wait_clients must be >= 0");
  }
  rethrow([&] { (void)load_track(c.track); });
}

}  // namespace drive

#endif  // DRIVE_CONFIG_HPP_
