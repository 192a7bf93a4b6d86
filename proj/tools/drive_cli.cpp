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

// drive: command-line entry point for training, evaluation, track generation,
// model inspection, and the viewer stream (play / replay).
//
// Exit status: 0 success, 1 validation error, 2 runtime failure.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drive/config.hpp"
#include "drive/nn.hpp"
#include "drive/stream.hpp"
#include "drive/trace.hpp"
#include "drive/trackmap.hpp"
#include "drive/training.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

bool is_validation(drive::ErrorCode code) {
  using drive::ErrorCode;
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidRadii:
    case ErrorCode::InvalidDimensions:
    case ErrorCode::EmptyEval:
      return true;
    default:
      return false;
  }
}

drive::TrackSpec load_track_file(const std::string& path) {
  return drive::parse_trk(drive::read_file(path), std::filesystem::path(path).stem().string());
}

int cmd_train(const std::string& config_path) {
  drive::ExperimentConfig cfg = drive::load_config(config_path);
  drive::validate(cfg);

  std::unique_ptr<drive::StreamServer> server;
  drive::TrainingHooks hooks;
  hooks.on_episode = [](const drive::MetricsRow& r) {
    std::cerr << "episode " << r.episode << " steps " << r.steps << " reward "
              << r.total_reward << " epsilon " << r.epsilon_end << "\n";
  };
  if (cfg.stream) {
    if (cfg.stream->mode != "live") {
      throw drive::Error(drive::ErrorCode::ConfigInvalid, "stream.mode: train supports only live");
    }
    const drive::TrackSpec track = drive::load_track(cfg.track);
    server = std::make_unique<drive::StreamServer>(drive::serialize_trk(track), cfg.stream->port,
                                                   cfg.stream->tick_hz, drive::StreamMode::kLive);
    std::cerr << "streaming on port " << server->port() << "\n";
    if (cfg.stream->wait_clients > 0) {
      while (!server->wait_for_clients(static_cast<std::size_t>(cfg.stream->wait_clients),
                                       std::chrono::milliseconds(200))) {
        if (g_stop.load()) return kExitRuntime;
      }
    }
    hooks.on_frame = [&](const nlohmann::ordered_json& f) { server->broadcast(f); };
    hooks.on_end = [&](const nlohmann::ordered_json& e) { server->broadcast(e); };
  }

  const drive::TrainingSummary summary = drive::run_training(cfg, hooks);
  if (server) server->drain(std::chrono::seconds(5));
  std::cout << "metrics: " << summary.metrics_path.string() << "\n";
  for (const auto& p : summary.checkpoint_paths) std::cout << "checkpoint: " << p.string() << "\n";
  for (const auto& p : summary.trace_paths) std::cout << "trace: " << p.string() << "\n";
  std::cout << "final model: " << summary.final_model_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& model, const std::string& track_path, int episodes,
             std::uint64_t seed, const std::string& agent, const std::string& trace) {
  drive::EvalOptions opt;
  opt.episodes = episodes;
  opt.seed = seed;
  opt.agent_kind = drive::parse_agent_kind(agent);
  if (!trace.empty()) opt.trace_path = trace;
  if (episodes < 1) throw drive::Error(drive::ErrorCode::EmptyEval, "--episodes must be >= 1");
  const drive::EvalStats s = drive::run_eval(model, load_track_file(track_path), opt);
  nlohmann::ordered_json j;
  j["episodes"] = s.episodes;
  j["mean_reward"] = s.mean_reward;
  j["max_reward"] = s.max_reward;
  j["min_reward"] = s.min_reward;
  j["mean_steps"] = s.mean_steps;
  j["laps"] = s.laps;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_inspect(const std::string& model) {
  const drive::Mlp net = drive::load_model(drive::read_file(model));
  std::cout << "layer      in    out  act     params\n";
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    const std::string name = k == 0 ? "dense" : "dense_" + std::to_string(k);
    std::printf("%-9s %4d %6d  %-6s %7zu\n", name.c_str(), l.in_dim, l.out_dim,
                drive::activation_name(l.activation), l.param_count());
  }
  std::printf("total params: %zu\n", net.param_count());
  return 0;
}

int cmd_gen_track(const std::string& kind, std::optional<int> width, std::optional<int> height,
                  double outer, double inner, int checkpoints, int length,
                  const std::string& out) {
  drive::TrackSpec spec;
  if (kind == "ring") {
    drive::RingParams p;
    p.width = width.value_or(p.width);
    p.height = height.value_or(width.value_or(p.height));
    p.outer_radius = outer;
    p.inner_radius = inner;
    p.n_checkpoints = checkpoints;
    spec = drive::gen_ring_track(p);
  } else if (kind == "corridor") {
    spec = drive::gen_corridor_track(length, width.value_or(21));
  } else {
    throw drive::Error(drive::ErrorCode::ConfigInvalid,
                       "kind: expected ring or corridor, got '" + kind + "'");
  }
  drive::write_file(out, drive::serialize_trk(spec));
  std::cout << "wrote " << out << " (" << spec.grid.width() << "x" << spec.grid.height()
            << ", " << spec.checkpoints.size() << " checkpoints)\n";
  return 0;
}

int cmd_play(const std::string& track_path, int port, int tick_hz) {
  const drive::TrackSpec track = load_track_file(track_path);
  drive::StreamServer server(drive::serialize_trk(track), port, tick_hz, drive::StreamMode::kPlay);
  std::cerr << "play server on port " << server.port() << " (Ctrl-C to stop)\n";
  drive::run_play_session(server, track, drive::EnvConfig{}, g_stop);
  return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& track_path, int port,
               int tick_hz) {
  const drive::Trace trace = drive::read_trace(trace_path);
  const drive::TrackSpec track = load_track_file(track_path);
  if (drive::track_digest(track) != trace.header.track_sha256) {
    throw drive::Error(drive::ErrorCode::ConfigInvalid,
                       "--track: digest does not match the trace header");
  }
  drive::StreamServer server(drive::serialize_trk(track), port, tick_hz,
                             drive::StreamMode::kReplay);
  std::cerr << "replay server on port " << server.port() << ", waiting for a viewer\n";
  while (!server.wait_for_clients(1, std::chrono::milliseconds(200))) {
    if (g_stop.load()) return 0;
  }
  drive::run_replay_session(server, trace, g_stop);
  server.drain(std::chrono::seconds(5));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"2D self-driving DQN: train, evaluate, and watch"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Run a training experiment from a JSON config");
  train->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string model, track_path, agent = "DQN_ORIGINAL", trace_out;
  int episodes = 20;
  std::uint64_t seed = 1;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a saved model");
  eval->add_option("model", model, "MLPv1 checkpoint")->required();
  eval->add_option("track", track_path, "TRK1 track file")->required();
  eval->add_option("--episodes", episodes, "Episodes to run");
  eval->add_option("--seed", seed, "Seed");
  eval->add_option("--agent", agent, "DQN_ORIGINAL | DQN_MODIFIED | VANILLA_NN");
  eval->add_option("--trace", trace_out, "Write episode 0 as a TRACEv1 file");

  int port = 8765;
  int tick_hz = 30;
  auto* play = app.add_subcommand("play", "Drive the car by keyboard from the viewer");
  play->add_option("track", track_path, "TRK1 track file")->required();
  play->add_option("--port", port, "Listen port");
  play->add_option("--tick-hz", tick_hz, "Simulation ticks per second");

  std::string trace_path;
  auto* replay = app.add_subcommand("replay", "Stream a recorded trace to the viewer");
  replay->add_option("trace", trace_path, "TRACEv1 file")->required();
  replay->add_option("--track", track_path, "TRK1 track the trace was recorded on")->required();
  replay->add_option("--port", port, "Listen port");
  replay->add_option("--tick-hz", tick_hz, "Frames per second");

  std::string kind, out;
  std::optional<int> width, height;
  double outer = drive::RingParams{}.outer_radius;
  double inner = drive::RingParams{}.inner_radius;
  int checkpoints = drive::RingParams{}.n_checkpoints;
  int length = 200;
  auto* gen = app.add_subcommand("gen-track", "Write a generated track as TRK1");
  gen->add_option("kind", kind, "ring | corridor")->required();
  gen->add_option("--width", width, "ring: grid width; corridor: corridor width");
  gen->add_option("--height", height, "ring: grid height (defaults to width)");
  gen->add_option("--outer", outer, "ring: outer radius");
  gen->add_option("--inner", inner, "ring: inner radius");
  gen->add_option("--checkpoints", checkpoints, "ring: checkpoint count");
  gen->add_option("--length", length, "corridor: length in cells");
  gen->add_option("-o,--output", out, "Output file")->required();

  auto* inspect = app.add_subcommand("inspect", "Print layer shapes and parameter counts");
  inspect->add_option("model", model, "MLPv1 checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*train) return cmd_train(config_path);
    if (*eval) return cmd_eval(model, track_path, episodes, seed, agent, trace_out);
    if (*play) return cmd_play(track_path, port, tick_hz);
    if (*replay) return cmd_replay(trace_path, track_path, port, tick_hz);
    if (*gen) return cmd_gen_track(kind, width, height, outer, inner, checkpoints, length, out);
    if (*inspect) return cmd_inspect(model);
  } catch (const drive::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation(e.code()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
