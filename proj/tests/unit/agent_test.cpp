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

#include "drive/agent.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "drive/env.hpp"
#include "oracles.hpp"

namespace drive {
namespace {

Transition tagged(int tag) {
  Transition t;
  t.state = Observation(7, 0.5);
  t.next_state = Observation(7, 0.5);
  t.reward = tag;
  return t;
}

Transition random_transition(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Transition t;
  t.state.resize(7);
  t.next_state.resize(7);
  for (double& v : t.state) v = u(gen);
  for (double& v : t.next_state) v = u(gen);
  t.action = action_from_index(static_cast<int>(gen() % 3));
  t.done = u(gen) < 0.1;
  t.reward = t.done ? -20 : 5;
  return t;
}

// Network whose output is the constant q regardless of input.
Mlp constant_net(const std::vector<double>& q) {
  Mlp net = init_mlp(1);
  for (auto& l : net.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
  net.layers.back().biases = q;
  return net;
}

double binomial_5sigma(double p, int n) { return 5.0 * std::sqrt(p * (1 - p) / n); }

bool same_params(const Mlp& a, const Mlp& b) {
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weights != b.layers[k].weights) return false;
    if (a.layers[k].biases != b.layers[k].biases) return false;
  }
  return true;
}

Hyperparams small_hp() {
  Hyperparams hp;
  hp.min_replay = 32;
  hp.batch_size = 16;
  hp.capacity = 200;
  hp.target_sync_every = 10;
  return hp;
}

TEST(ReplayBuffer, Fifo) {
  ReplayBuffer buf(3, 0);
  for (int i = 1; i <= 4; ++i) buf.push(tagged(i));
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.at(0).reward, 2);
  EXPECT_EQ(buf.at(1).reward, 3);
  EXPECT_EQ(buf.at(2).reward, 4);

  ReplayBuffer one(10, 0);
  one.push(tagged(1));
  EXPECT_EQ(one.size(), 1u);

  ReplayBuffer same(5, 0);
  for (int i = 0; i < 5; ++i) same.push(tagged(7));
  EXPECT_EQ(same.size(), 5u);
}

TEST(ReplayBuffer, SampleDistinct) {
  ReplayBuffer buf(3000, 4);
  for (int i = 0; i < 500; ++i) buf.push(tagged(i));
  const auto s = buf.sample(128);
  ASSERT_EQ(s.size(), 128u);
  std::set<int> tags;
  for (const auto* t : s) tags.insert(t->reward);
  EXPECT_EQ(tags.size(), 128u);
}

TEST(ReplayBuffer, SampleWholeBufferIsPermutation) {
  ReplayBuffer buf(50, 5);
  for (int i = 0; i < 80; ++i) buf.push(tagged(i));
  const auto s = buf.sample(50);
  std::set<int> tags;
  for (const auto* t : s) tags.insert(t->reward);
  EXPECT_EQ(tags.size(), 50u);
  EXPECT_EQ(*tags.begin(), 30);
  EXPECT_EQ(*tags.rbegin(), 79);
}

TEST(ReplayBuffer, UniformFrequencies) {
  ReplayBuffer buf(10, 6);
  for (int i = 0; i < 10; ++i) buf.push(tagged(i));
  std::vector<int> counts(10, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[buf.sample(1)[0]->reward]++;
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.1, binomial_5sigma(0.1, n));
}

TEST(ReplayBuffer, NotEnoughSamples) {
  ReplayBuffer buf(10, 0);
  buf.push(tagged(1));
  try {
    buf.sample(2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotEnoughSamples);
  }
}

TEST(ReplayBuffer, SeededSamplingIsDeterministic) {
  ReplayBuffer a(100, 77);
  ReplayBuffer b(100, 77);
  for (int i = 0; i < 100; ++i) {
    a.push(tagged(i));
    b.push(tagged(i));
  }
  for (int r = 0; r < 10; ++r) {
    const auto sa = a.sample(20);
    const auto sb = b.sample(20);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(sa[i]->reward, sb[i]->reward);
  }
}

TEST(Epsilon, Examples) {
  DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, 1);
  EXPECT_EQ(agent.epsilon(), 0.99);
  EXPECT_DOUBLE_EQ(agent.decay_epsilon(), 0.9899505);

  Hyperparams hp;
  EXPECT_EQ(epsilon_after(hp, 10'000'000), 0.001);
}

TEST(Epsilon, ClosedFormAndFloor) {
  DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, 1);
  for (int n = 1; n <= 200000; ++n) {
    const double e = agent.decay_epsilon();
    ASSERT_EQ(e, std::max(0.001, 0.99 * std::pow(0.99995, n))) << n;
    ASSERT_GE(e, 0.001);
    ASSERT_LE(e, 0.99);
  }
  EXPECT_EQ(agent.epsilon(), 0.001);
}

TEST(SelectAction, UniformWhenEpsilonIsOne) {
  Hyperparams hp;
  hp.epsilon_start = 1.0;
  DqnAgent agent(hp, AgentMode::kOriginal, {}, {}, 3);
  const Observation s(7, 0.5);
  std::vector<int> counts(3, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    const ActionChoice c = agent.select_action(s);
    ASSERT_TRUE(c.explored);
    counts[action_index(c.action)]++;
  }
  for (int c : counts) EXPECT_NEAR(c / double(n), 1.0 / 3, binomial_5sigma(1.0 / 3, n));
}

TEST(SelectAction, GreedyArgmax) {
  DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, 3, constant_net({1.0, 2.0, 0.5}));
  agent.set_epsilon(0.0);
  const ActionChoice c = agent.select_action(Observation(7, 0.5));
  EXPECT_EQ(c.action, Action::kRight);
  EXPECT_FALSE(c.explored);
  EXPECT_EQ(c.q, c.boosted_q);
}

TEST(SelectAction, ModifiedBreaksTieTowardOpenSide) {
  DqnAgent agent(Hyperparams{}, AgentMode::kModified, {}, {}, 3, constant_net({1.0, 1.0, 1.0}));
  agent.set_epsilon(0.0);
  const Observation s{0.8, 0.8, 0.8, 0.6, 0.5, 0.5, 0.5};
  EXPECT_EQ(agent.select_action(s).action, Action::kLeft);
  const Observation mirrored{0.5, 0.5, 0.5, 0.6, 0.8, 0.8, 0.8};
  EXPECT_EQ(agent.select_action(mirrored).action, Action::kRight);
  EXPECT_EQ(agent.select_action(Observation(7, 0.5)).action, Action::kNoop);
}

TEST(SelectAction, ExplorationFrequency) {
  for (double e : {0.1, 0.5, 0.9}) {
    DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, 12);
    agent.set_epsilon(e);
    const int n = 30000;
    int explored = 0;
    for (int i = 0; i < n; ++i) explored += agent.select_action(Observation(7, 0.3)).explored;
    EXPECT_NEAR(explored / double(n), e, binomial_5sigma(e, n)) << e;
  }
}

TEST(PriorityBoost, Examples) {
  const PriorityConfig cfg;
  const std::vector<double> q{1.0, 3.0, 2.0};
  const auto sym = priority_boost(q, Observation(7, 0.4), cfg);
  EXPECT_EQ(sym, (std::vector<double>{1.0, 3.0, 2.0 + 0.25 * (2.0 + 1e-9)}));

  const Observation lr{0.9, 0.9, 0.9, 0.5, 0.2, 0.2, 0.2};
  const std::vector<double> zero{0, 0, 0};
  const auto b = priority_boost(zero, lr, cfg);
  EXPECT_EQ(b, (std::vector<double>{0.25 * 1e-9, 0, 0}));
  EXPECT_EQ(argmax_action(b), Action::kLeft);
  EXPECT_EQ(zero, (std::vector<double>{0, 0, 0}));

  PriorityConfig off = cfg;
  off.beta = 0.0;
  EXPECT_EQ(priority_boost(q, lr, off), q);
}

TEST(PriorityBoost, ThresholdIsStrict) {
  PriorityConfig cfg;
  cfg.tau = 0.25;
  const Observation s{0.75, 0.75, 0.75, 0.0, 0.5, 0.5, 0.5};  // L - R == tau
  const auto b = priority_boost(std::vector<double>{0, 1, 0}, s, cfg);
  EXPECT_GT(b[2], 0.0);
  EXPECT_EQ(b[0], 0.0);
}

TEST(PriorityBoost, Validation) {
  PriorityConfig p;
  p.left_sensors = {0, 1, 3};
  EXPECT_THROW(validate(p, 7), Error);
  p.left_sensors = {0, 4};
  EXPECT_THROW(validate(p, 7), Error);
  p = PriorityConfig{};
  p.beta = -1;
  EXPECT_THROW(validate(p, 7), Error);
  EXPECT_NO_THROW(validate(PriorityConfig{}, 7));
}

TEST(AgentProperties, GreedyChoiceIsShiftInvariant) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::vector<double> q{10 * u(gen) - 5, 10 * u(gen) - 5, 10 * u(gen) - 5};
    Observation s(7);
    for (double& v : s) v = u(gen);
    const double c = 100 * u(gen) - 50;
    const std::vector<double> qc{q[0] + c, q[1] + c, q[2] + c};
    EXPECT_EQ(argmax_action(q), argmax_action(qc));
    EXPECT_EQ(argmax_action(priority_boost(q, s, {})), argmax_action(priority_boost(qc, s, {})));
  }
}

TEST(Bellman, Examples) {
  const std::vector<double> next{1.0, 10.0, 3.0};
  EXPECT_DOUBLE_EQ(bellman_target(5, false, false, next, 0.97), 14.7);
  EXPECT_EQ(bellman_target(-20, true, false, next, 0.97), -20.0);
  EXPECT_DOUBLE_EQ(bellman_target(5, true, true, next, 0.97), 14.7);
  EXPECT_EQ(bellman_target(5, false, false, next, 0.97), 5.0 + 0.97 * 10.0);
}

TEST(TrainStep, SkippedBelowMinReplay) {
  std::mt19937_64 gen(1);
  DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, 5);
  for (int i = 0; i < 499; ++i) agent.push(random_transition(gen));
  EXPECT_FALSE(agent.train_step().has_value());
  EXPECT_EQ(agent.train_steps(), 0);
  agent.push(random_transition(gen));
  EXPECT_TRUE(agent.train_step().has_value());
  EXPECT_EQ(agent.train_steps(), 1);
}

TEST(TrainStep, MatchesHandBuiltMinibatchUpdate) {
  std::mt19937_64 gen(2);
  const std::uint64_t seed = 21;
  DqnAgent agent(Hyperparams{}, AgentMode::kOriginal, {}, {}, seed);
  ReplayBuffer mirror(3000, derive_seed(seed, 1));
  for (int i = 0; i < 500; ++i) {
    const Transition t = random_transition(gen);
    agent.push(t);
    mirror.push(t);
  }
  Mlp net = agent.main_net();
  const Mlp target_net = agent.target_net();
  OptimizerState opt(OptimizerSettings{}, net);

  const auto batch = mirror.sample(128);
  ASSERT_EQ(batch.size(), 128u);
  TrainTarget tt(128, 7, 3);
  for (int b = 0; b < 128; ++b) {
    const Transition& t = *batch[b];
    std::copy(t.state.begin(), t.state.end(), tt.inputs.begin() + b * 7);
    const auto nq = oracle::mlp_forward(target_net, t.next_state);
    const double y = t.done ? t.reward : t.reward + 0.97 * std::max({nq[0], nq[1], nq[2]});
    tt.targets[b * 3 + action_index(t.action)] = y;
    tt.mask[b * 3 + action_index(t.action)] = 1;
  }
  EXPECT_EQ(tt.masked_count(), 128u);
  const double want = train_on_batch(net, opt, tt);
  const auto got = agent.train_step();
  ASSERT_TRUE(got.has_value());
  EXPECT_NEAR(*got, want, 1e-9 * std::max(1.0, want));
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    for (std::size_t j = 0; j < net.layers[k].weights.size(); ++j) {
      ASSERT_NEAR(agent.main_net().layers[k].weights[j], net.layers[k].weights[j], 1e-12);
    }
  }
}

TEST(TrainStep, TargetSyncSchedule) {
  std::mt19937_64 gen(3);
  DqnAgent agent(small_hp(), AgentMode::kOriginal, {}, {}, 8);
  for (int i = 0; i < 100; ++i) agent.push(random_transition(gen));
  for (int step = 1; step <= 30; ++step) {
    ASSERT_TRUE(agent.train_step().has_value());
    if (step % 10 == 0) {
      EXPECT_TRUE(same_params(agent.main_net(), agent.target_net())) << step;
    } else {
      EXPECT_FALSE(same_params(agent.main_net(), agent.target_net())) << step;
    }
  }
}

TEST(TrainStep, DefaultSyncAfterHundredSteps) {
  std::mt19937_64 gen(4);
  Hyperparams hp;
  hp.min_replay = 128;
  DqnAgent agent(hp, AgentMode::kOriginal, {}, {}, 9);
  for (int i = 0; i < 200; ++i) agent.push(random_transition(gen));
  for (int i = 0; i < 99; ++i) agent.train_step();
  EXPECT_FALSE(same_params(agent.main_net(), agent.target_net()));
  agent.train_step();
  EXPECT_TRUE(same_params(agent.main_net(), agent.target_net()));
  const Observation x(7, 0.25);
  EXPECT_EQ(forward(agent.main_net(), x), forward(agent.target_net(), x));
  agent.train_step();
  EXPECT_FALSE(same_params(agent.main_net(), agent.target_net()));
}

TEST(Tabular, Examples) {
  TabularQ q;
  q.alpha = 0.5;
  q.gamma = 0.9;
  q.table[{1, 0}] = 2.0;
  const std::vector<int> actions{0, 1};
  EXPECT_DOUBLE_EQ(tabular_update(q, 0, 0, 1.0, 1, actions), 1.4);
  EXPECT_DOUBLE_EQ(q.value(0, 0), 1.4);
  EXPECT_EQ(q.value(3, 1), 0.0);

  TabularQ full;
  full.alpha = 1.0;
  full.gamma = 0.9;
  full.table[{0, 0}] = 123.0;
  full.table[{1, 1}] = 2.0;
  EXPECT_EQ(tabular_update(full, 0, 0, 1.0, 1, actions), 1.0 + 0.9 * 2.0);
}

double tabular_error_after_sweeps(const oracle::Mdp& m, double alpha, double gamma,
                                  int max_updates, int* used) {
  const auto qstar = oracle::value_iteration(m, gamma);
  TabularQ q;
  q.alpha = alpha;
  q.gamma = gamma;
  std::vector<int> actions(static_cast<std::size_t>(m.n_actions));
  std::iota(actions.begin(), actions.end(), 0);
  const std::vector<int> none;
  auto error = [&] {
    double e = 0;
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a)
        e = std::max(e, std::abs(q.value(s, a) - qstar[s * m.n_actions + a]));
    return e;
  };
  int n = 0;
  while (n < max_updates && error() >= 1e-6) {
    for (int s = m.n_states - 1; s >= 0; --s) {
      if (m.terminal[s]) continue;
      for (int a = 0; a < m.n_actions; ++a) {
        const int j = s * m.n_actions + a;
        const int s2 = m.next[j];
        tabular_update(q, s, a, m.reward[j], s2, m.terminal[s2] ? none : actions);
        ++n;
      }
    }
  }
  *used = n;
  return error();
}

TEST(Tabular, ConvergesOnToyMdps) {
  for (const auto& m : {oracle::chain_mdp(), oracle::cycle_mdp()}) {
    for (double alpha : {1.0, 0.5}) {
      int used = 0;
      EXPECT_LT(tabular_error_after_sweeps(m, alpha, 0.9, 10000, &used), 1e-6);
      EXPECT_LE(used, 10000);
    }
  }
}

TEST(Vanilla, EquivalentToDegenerateDqn) {
  Hyperparams hp;
  hp.capacity = 1;
  hp.min_replay = 1;
  hp.batch_size = 1;
  hp.target_sync_every = 1;
  OptimizerSettings opt;
  DqnAgent dqn(hp, AgentMode::kOriginal, {}, opt, 31);
  VanillaAgent vanilla(hp, opt, 31);
  ASSERT_TRUE(same_params(dqn.main_net(), vanilla.net()));
  std::mt19937_64 gen(4);
  for (int i = 0; i < 200; ++i) {
    const Transition t = random_transition(gen);
    dqn.push(t);
    const double a = *dqn.train_step();
    const double b = vanilla.act_and_learn(t);
    ASSERT_EQ(a, b) << i;
    ASSERT_TRUE(same_params(dqn.main_net(), vanilla.net())) << i;
  }
  EXPECT_EQ(vanilla.train_steps(), 200);
}

TEST(Vanilla, CrashTargetDoesNotBootstrap) {
  Hyperparams hp;
  OptimizerSettings sgd;
  sgd.kind = OptimizerKind::kSgd;
  sgd.learning_rate = 0.01;
  const Mlp start = constant_net({3.0, 7.0, 1.0});
  VanillaAgent agent(hp, sgd, 1, start);
  Transition t = tagged(-20);
  t.action = Action::kRight;
  t.done = true;
  // Loss (7 - (-20))^2 on the acted output only.
  EXPECT_EQ(agent.act_and_learn(t), 27.0 * 27.0);
  const auto& b = agent.net().layers.back().biases;
  EXPECT_EQ(b[0], 3.0);
  EXPECT_EQ(b[2], 1.0);
  EXPECT_DOUBLE_EQ(b[1], 7.0 - 0.01 * 2 * 27.0);
}

TEST(AgentProperties, ZeroBetaReproducesOriginal) {
  Hyperparams hp = small_hp();
  PriorityConfig zero;
  zero.beta = 0.0;
  DqnAgent original(hp, AgentMode::kOriginal, zero, {}, 77);
  DqnAgent modified(hp, AgentMode::kModified, zero, {}, 77);
  const TrackSpec track = gen_ring_track(RingParams{});
  const EnvConfig cfg;
  int steps = 0;
  for (int ep = 0; ep < 20; ++ep) {
    auto [state, r] = reset(track, cfg, static_cast<std::uint64_t>(ep));
    while (!r.terminal) {
      const ActionChoice a = original.select_action(r.observation);
      const ActionChoice b = modified.select_action(r.observation);
      ASSERT_EQ(a.action, b.action);
      ASSERT_EQ(a.explored, b.explored);
      auto [next, r2] = step(state, a.action, track, cfg);
      const Transition t{r.observation, a.action, r2.reward, r2.observation, r2.terminal,
                         r2.truncated};
      original.push(t);
      modified.push(t);
      EXPECT_EQ(original.train_step(), modified.train_step());
      original.decay_epsilon();
      modified.decay_epsilon();
      state = next;
      r = r2;
      ++steps;
    }
  }
  EXPECT_GT(steps, 100);
  EXPECT_TRUE(same_params(original.main_net(), modified.main_net()));
}

TEST(Hyperparams, Validation) {
  Hyperparams hp;
  hp.batch_size = 600;
  try {
    validate(hp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
  }
  hp = Hyperparams{};
  hp.gamma = 1.0;
  EXPECT_THROW(validate(hp), Error);
  hp = Hyperparams{};
  hp.epsilon_min = 0.0;
  EXPECT_THROW(validate(hp), Error);
  EXPECT_NO_THROW(validate(Hyperparams{}));
}

}  // namespace
}  // namespace drive
