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

// Acceptance gate: one PASS/FAIL line per primary criterion. Exit status is
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "drive/agent.hpp"
#include "drive/config.hpp"
#include "drive/env.hpp"
#include "drive/metrics.hpp"
#include "drive/nn.hpp"
#include "drive/trace.hpp"
#include "drive/trackmap.hpp"
#include "drive/training.hpp"
#include "oracles.hpp"

namespace {

using namespace drive;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  %-22s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

fs::path workdir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "drive_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double window_mean(const std::vector<MetricsRow>& rows, std::size_t from, std::size_t n) {
  double s = 0;
  for (std::size_t i = from; i < from + n; ++i) s += rows[i].total_reward;
  return s / static_cast<double>(n);
}

ExperimentConfig ring_run(AgentKind kind, std::uint64_t seed, int episodes, const fs::path& out) {
  ExperimentConfig c;
  c.agent_kind = kind;
  c.seed = seed;
  c.episodes = episodes;
  c.hp.episodes = episodes;
  c.checkpoint_every = episodes;
  c.out_dir = out.string();
  return c;
}

Outcome architecture() {
  const Mlp net = init_mlp(1);
  const bool ok = net.layers.size() == 3 && net.layers[0].param_count() == 512 &&
                  net.layers[1].param_count() == 4160 && net.layers[2].param_count() == 195 &&
                  net.param_count() == 4867;
  return {ok, fmt("dense %.0f / dense_1 %.0f / dense_2 %.0f, total %.0f (exact)",
                  double(net.layers[0].param_count()), double(net.layers[1].param_count()),
                  double(net.layers[2].param_count()), double(net.param_count()))};
}

Outcome reward_accounting() {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> pick(0, 2);
  int violations = 0;
  int crashes = 0;
  int truncations = 0;
  const int episodes = 1000;
  for (int ep = 0; ep < episodes; ++ep) {
    TrackSpec track;
    if (ep % 2 == 0) {
      const int size = 120 + 20 * (ep % 7);
      const double outer = size / 2.0 - 4 - (ep % 3);
      const double inner = outer - 24 - 2 * (ep % 5);
      track = gen_ring_track(size, size, outer, inner, 4 + ep % 5);
    } else {
      track = gen_corridor_track(60 + 7 * (ep % 13), 9 + 2 * (ep % 6));
    }
    EnvConfig cfg;
    cfg.max_steps = 2 + ep % 30;
    auto [s, r] = reset(track, cfg, static_cast<std::uint64_t>(ep));
    int alive_steps = 0;
    int crashed = 0;
    while (!r.terminal) {
      std::tie(s, r) = step(s, action_from_index(pick(gen)), track, cfg);
      if (r.crashed) {
        crashed = 1;
      } else {
        ++alive_steps;
      }
    }
    crashes += crashed;
    truncations += r.truncated;
    if (r.score != 5 * alive_steps - 20 * crashed) ++violations;
  }
  return {violations == 0 && crashes > 0 && truncations > 0,
          fmt("%.0f episodes, %.0f violations (%.0f crashed, %.0f truncated; exact)", episodes,
              violations, crashes, truncations)};
}

Outcome bellman_tabular() {
  bool ok = true;
  const std::vector<double> next{1.0, 10.0, 3.0};
  ok &= bellman_target(5, false, false, next, 0.97) == 5.0 + 0.97 * 10.0;
  ok &= bellman_target(-20, true, false, next, 0.97) == -20.0;
  ok &= bellman_target(5, true, true, next, 0.97) == 5.0 + 0.97 * 10.0;
  TabularQ q;
  q.alpha = 0.5;
  q.gamma = 0.9;
  q.table[{1, 0}] = 2.0;
  const std::vector<int> two{0, 1};
  ok &= tabular_update(q, 0, 0, 1.0, 1, two) == 0.5 * (1.0 + 0.9 * 2.0);
  TabularQ full;
  full.alpha = 1.0;
  full.gamma = 0.9;
  full.table[{1, 1}] = 2.0;
  full.table[{0, 0}] = 50.0;
  ok &= tabular_update(full, 0, 0, 1.0, 1, two) == 1.0 + 0.9 * 2.0;

  double worst = 0;
  int max_updates = 0;
  for (const oracle::Mdp& m : {oracle::chain_mdp(), oracle::cycle_mdp()}) {
    const auto qstar = oracle::value_iteration(m, 0.9);
    TabularQ t;
    t.alpha = 0.5;
    t.gamma = 0.9;
    std::vector<int> actions(static_cast<std::size_t>(m.n_actions));
    std::iota(actions.begin(), actions.end(), 0);
    const std::vector<int> none;
    int n = 0;
    double err = 1;
    while (n < 10000 && err >= 1e-6) {
      for (int s = m.n_states - 1; s >= 0; --s) {
        if (m.terminal[s]) continue;
        for (int a = 0; a < m.n_actions; ++a) {
          const int j = s * m.n_actions + a;
          tabular_update(t, s, a, m.reward[j], m.next[j], m.terminal[m.next[j]] ? none : actions);
          ++n;
        }
      }
      err = 0;
      for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a)
          err = std::max(err, std::abs(t.value(s, a) - qstar[s * m.n_actions + a]));
    }
    worst = std::max(worst, err);
    max_updates = std::max(max_updates, n);
  }
  ok &= worst < 1e-6;
  return {ok, fmt("examples exact; max |Q - Q*| = %.2e (< 1e-6) after <= %.0f updates on 2 MDPs",
                  worst, max_updates)};
}

Outcome gradients() {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nrm(0.0, 3.0);
  double worst = 0;
  long checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Mlp net = init_mlp(5000 + trial);
    TrainTarget b(6, 7, 3);
    for (double& v : b.inputs) v = u(gen);
    for (double& v : b.targets) v = nrm(gen);
    for (auto& m : b.mask) m = u(gen) < 0.5;
    b.mask[0] = 1;
    const Gradients g = compute_gradients(net, b);
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      for (int which = 0; which < 2; ++which) {
        const auto& analytic = which == 0 ? g.layers[k].weights : g.layers[k].biases;
        for (std::size_t j = 0; j < analytic.size(); ++j) {
          const double fd = oracle::finite_difference(net, b, k, which, j);
          const double rel =
              std::abs(analytic[j] - fd) / std::max(std::abs(analytic[j]) + std::abs(fd), 1e-6);
          worst = std::max(worst, rel);
          ++checked;
        }
      }
    }
  }
  return {worst < 1e-4, fmt("max relative error %.2e (< 1e-4) over %.0f parameters, 10 nets",
                            worst, double(checked))};
}

Outcome ray_oracle() {
  std::mt19937_64 gen(31337);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 80);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = dim(gen);
    const int h = dim(gen);
    OccupancyGrid g(w, h);
    const double density = 0.3 * u(gen);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) g.set(x, y, u(gen) < density);
    const double ox = u(gen) * w;
    const double oy = u(gen) * h;
    const double a = 360.0 * u(gen);
    if (ray_cast(g, {ox, oy}, a) != oracle::march(oracle::RawGrid::from(g), ox, oy, a, 1000)) {
      ++mismatches;
    }
  }
  return {mismatches == 0, fmt("%.0f mismatches in 1000 cases (exact)", mismatches)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DRIVE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome determinism() {
  const fs::path dir = workdir("determinism");
  std::vector<fs::path> outs{dir / "a", dir / "b"};
  for (const auto& out : outs) {
    ExperimentConfig c = ring_run(AgentKind::kDqnOriginal, 1, 150, out);
    c.trace_episodes = {0, 75, 149};
    c.checkpoint_every = 50;
    write_file(out.string() + ".json", to_json(c).dump(2));
    if (run_cli("train " + out.string() + ".json") != 0) return {false, "train exited non-zero"};
  }
  int identical = 0;
  int compared = 0;
  for (const char* f : {"metrics.csv", "trace_ep00000.jsonl", "trace_ep00075.jsonl",
                        "trace_ep00149.jsonl", "model_final.json"}) {
    ++compared;
    identical += read_file(outs[0] / f) == read_file(outs[1] / f);
  }
  return {identical == compared,
          fmt("%.0f/%.0f artifacts byte-identical (metrics, 3 traces, model; 150 episodes)",
              identical, compared)};
}

Outcome learning_a() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = run_training(
        ring_run(AgentKind::kDqnOriginal, seed, 150, workdir("learn_a_" + std::to_string(seed))));
    const double first = window_mean(s.rows, 0, 20);
    const double last = window_mean(s.rows, 130, 20);
    wins += last > first;
    detail += fmt("s%.0f %.2f->%.2f ", double(seed), first, last);
  }
  return {wins >= 2, detail + fmt("(last20 > first20 on %.0f/3, need 2)", wins)};
}

Outcome learning_b() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const std::string tag = std::to_string(seed);
    const auto orig =
        run_training(ring_run(AgentKind::kDqnOriginal, seed, 300, workdir("learn_b_o" + tag)));
    const auto mod =
        run_training(ring_run(AgentKind::kDqnModified, seed, 300, workdir("learn_b_m" + tag)));
    const double o = window_mean(orig.rows, 250, 50);
    const double m = window_mean(mod.rows, 250, 50);
    wins += m >= o;
    detail += fmt("s%.0f mod %.2f vs orig %.2f ", double(seed), m, o);
  }
  return {wins >= 2, detail + fmt("(mod >= orig on %.0f/3, need 2)", wins)};
}

Outcome learning_c() {
  ExperimentConfig o = ring_run(AgentKind::kDqnOriginal, 4, 60, workdir("beta0_o"));
  ExperimentConfig m = ring_run(AgentKind::kDqnModified, 4, 60, workdir("beta0_m"));
  m.priority.beta = 0.0;
  for (int e = 0; e < 60; ++e) {
    o.trace_episodes.push_back(e);
    m.trace_episodes.push_back(e);
  }
  const auto so = run_training(o);
  const auto sm = run_training(m);
  long steps = 0;
  bool same = so.trace_paths.size() == sm.trace_paths.size();
  for (std::size_t i = 0; same && i < so.trace_paths.size(); ++i) {
    const Trace a = read_trace(so.trace_paths[i]);
    const Trace b = read_trace(sm.trace_paths[i]);
    same &= a.events == b.events;
    steps += static_cast<long>(a.events.size());
  }
  same &= read_file(so.final_model_path) == read_file(sm.final_model_path);
  return {same, fmt("%.0f steps over 60 episodes, action streams ", double(steps)) +
                    (same ? "identical (exact)" : "differ")};
}

Outcome epsilon_schedule() {
  DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, 1);
  long bad = 0;
  const long n = 300000;
  for (long i = 1; i <= n; ++i) {
    const double e = agent.decay_epsilon();
    if (e != std::max(0.001, 0.99 * std::pow(0.99995, static_cast<double>(i))) || e < 0.001) ++bad;
  }
  return {bad == 0 && agent.epsilon() == 0.001,
          fmt("%.0f decays, %.0f mismatches vs closed form (exact), floor %.3f", double(n),
              double(bad), agent.epsilon())};
}

Outcome serialization() {
  std::mt19937_64 gen(8);
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Mlp net = init_mlp(seed);
    OptimizerState opt(OptimizerSettings{}, net);
    TrainTarget b(4, 7, 3);
    for (double& v : b.inputs) v = std::uniform_real_distribution<double>(0, 1)(gen);
    b.mask = std::vector<std::uint8_t>(12, 1);
    train_on_batch(net, opt, b);
    const Mlp back = load_model(save_model(net));
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      ok &= back.layers[k].weights == net.layers[k].weights;
      ok &= back.layers[k].biases == net.layers[k].biases;
      ok &= back.layers[k].in_dim == net.layers[k].in_dim;
      ok &= back.layers[k].activation == net.layers[k].activation;
    }
  }
  int tracks = 0;
  for (const TrackSpec& t : {gen_ring_track(RingParams{}), gen_ring_track(100, 100, 40, 25, 4),
                             gen_corridor_track(200, 21), gen_corridor_track(30, 3)}) {
    ok &= parse_trk(serialize_trk(t), t.name) == t;
    ++tracks;
  }
  ExperimentConfig c = ring_run(AgentKind::kDqnOriginal, 2, 40, workdir("checkpoints"));
  c.checkpoint_every = 10;
  const auto s = run_training(c);
  int loaded = 0;
  EvalOptions eo;
  eo.episodes = 2;
  const TrackSpec track = load_track(c.track);
  for (const auto& p : s.checkpoint_paths) {
    const EvalStats st = run_eval(p, track, eo);
    loaded += st.episodes == 2;
  }
  ok &= loaded == static_cast<int>(s.checkpoint_paths.size()) && loaded == 5;
  return {ok, fmt("5 MLPv1 and %.0f TRK1 round-trips equal; %.0f/%.0f checkpoints load and evaluate",
                  tracks, loaded, double(s.checkpoint_paths.size()))};
}

}  // namespace

int main() {
  report("architecture", architecture);
  report("reward-accounting", reward_accounting);
  report("bellman-tabular", bellman_tabular);
  report("gradients", gradients);
  report("ray-oracle", ray_oracle);
  report("determinism", determinism);
  report("learning-a", learning_a);
  report("learning-b", learning_b);
  report("learning-c-beta0", learning_c);
  report("epsilon-schedule", epsilon_schedule);
  report("serialization", serialization);
  std::printf("%s: %d criteria failed\n", g_failures ? "FAIL" : "PASS", g_failures);
  return g_failures ? 1 : 0;
}
