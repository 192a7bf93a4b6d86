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

#ifndef DRIVE_TRACE_HPP_
#define DRIVE_TRACE_HPP_

// TRACEv1 episode traces: a JSONL header line followed by one line per step.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drive/env.hpp"
#include "drive/error.hpp"

namespace drive {

inline constexpr std::string_view kTraceFormat = "TRACEv1";

struct TraceHeader {
  std::string track_sha256;
  std::string config_sha256;
  std::uint64_t seed = 0;

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct TraceEvent {
  int t = 0;  // 1-based step index within the episode
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  Action action = Action::kNoop;
  int reward = 0;
  std::vector<double> sensors;
  double epsilon = 0.0;  // value used when the action was selected
  bool explored = false;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct Trace {
  TraceHeader header;
  std::vector<TraceEvent> events;
};

inline std::string trace_header_line(const TraceHeader& h) {
  nlohmann::ordered_json j;
  j["format"] = kTraceFormat;
  j["track_sha256"] = h.track_sha256;
  j["config_sha256"] = h.config_sha256;
  j["seed"] = h.seed;
  return j.dump();
}

inline std::string trace_event_line(const TraceEvent& e) {
  nlohmann::ordered_json j;
  j["t"] = e.t;
  j["x"] = e.x;
  j["y"] = e.y;
  j["theta"] = e.theta;
  j["action"] = action_index(e.action);
  j["reward"] = e.reward;
  j["sensors"] = e.sensors;
  j["epsilon"] = e.epsilon;
  j["explored"] = e.explored;
  return j.dump();
}

inline void write_trace(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << trace_header_line(trace.header) << '\n';
  for (const auto& e : trace.events) out << trace_event_line(e) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "trace write failed for " + path.string());
}

inline Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  Trace trace;
  std::string line;
  try {
    if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, "empty trace");
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != kTraceFormat) {
      throw Error(ErrorCode::BadVersion, "trace format is not TRACEv1");
    }
    trace.header.track_sha256 = h.at("track_sha256").get<std::string>();
    trace.header.config_sha256 = h.at("config_sha256").get<std::string>();
    trace.header.seed = h.at("seed").get<std::uint64_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      TraceEvent e;
      e.t = j.at("t").get<int>();
      e.x = j.at("x").get<double>();
      e.y = j.at("y").get<double>();
      e.theta = j.at("theta").get<double>();
      e.action = action_from_index(j.at("action").get<int>());
      e.reward = j.at("reward").get<int>();
      e.sensors = j.at("sensors").get<std::vector<double>>();
      e.epsilon = j.at("epsilon").get<double>();
      e.explored = j.at("explored").get<bool>();
      trace.events.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::BadFormat, std::string("malformed trace: ") + ex.what());
  }
  return trace;
}

// Replays the recorded actions through a fresh environment and checks that
// pose, reward and sensors match every event exactly. Returns the index of
// the first mismatching event, or -1 when the whole trace reproduces.
inline int first_trace_mismatch(const Trace& trace, const TrackSpec& track,
                                const EnvConfig& config) {
  auto [state, result] = reset(track, config, trace.header.seed);
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& e = trace.events[i];
    if (!state.alive) return static_cast<int>(i);
    std::tie(state, result) = step(state, e.action, track, config);
    if (e.t != result.steps || e.x != state.pose.x || e.y != state.pose.y ||
        e.theta != state.pose.theta || e.reward != result.reward ||
        e.sensors != result.observation) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

}  // namespace drive

#endif  // DRIVE_TRACE_HPP_
