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

#ifndef DRIVE_AGENT_HPP_
#define DRIVE_AGENT_HPP_

// Learning core: replay buffer, epsilon-greedy selection with the optional
// side-priority boost, the DQN update with a periodically synced target
// network, an online no-replay baseline, and a tabular Q-learning reference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drive/env.hpp"
#include "drive/error.hpp"
#include "drive/nn.hpp"
#include "drive/rng.hpp"

namespace drive {

using Observation = std::vector<double>;

struct Transition {
  Observation state;
  Action action = Action::kNoop;
  int reward = 0;
  Observation next_state;
  bool done = false;       // episode ended on this transition
  bool truncated = false;  // ended by the step limit rather than a crash

  friend bool operator==(const Transition&, const Transition&) = default;
};

// Fixed-capacity FIFO ring; a full buffer evicts its oldest entry on push.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 3000, std::uint64_t seed = 0)
      : capacity_(capacity), rng_(seed) {
    if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "replay capacity must be >= 1");
    entries_.reserve(capacity_);
  }

  void push(Transition t) {
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(t));
    } else {
      entries_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const {
    return entries_[(head_ + i) % entries_.size()];
  }

  // k distinct entries, uniformly without replacement (partial Fisher-Yates
  // over logical indices).
  std::vector<const Transition*> sample(std::size_t k) {
    if (k > entries_.size()) {
      throw Error(ErrorCode::NotEnoughSamples,
                  "requested " + std::to_string(k) + " of " +
                      std::to_string(entries_.size()) + " transitions");
    }
    scratch_.resize(entries_.size());
    std::iota(scratch_.begin(), scratch_.end(), std::size_t{0});
    std::vector<const Transition*> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng_.below(scratch_.size() - i);
      std::swap(scratch_[i], scratch_[j]);
      out.push_back(&at(scratch_[i]));
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> entries_;
  std::size_t head_ = 0;
  Rng rng_;
  std::vector<std::size_t> scratch_;
};

struct Hyperparams {
  double epsilon_start = 0.99;
  double epsilon_min = 0.001;
  double epsilon_decay = 0.99995;  // multiplicative, once per env step
  double gamma = 0.97;
  int capacity = 3000;
  int min_replay = 500;            // buffer fill required before training
  int batch_size = 128;
  int target_sync_every = 100;     // training steps between hard copies
  int episodes = 1000;
  bool bootstrap_truncated = true;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

inline void validate(const Hyperparams& hp) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(hp.epsilon_min > 0.0)) fail("hp.epsilon_min must be > 0");
  if (!(hp.epsilon_min <= hp.epsilon_start)) fail("hp.epsilon_min must be <= hp.epsilon_start");
  if (!(hp.epsilon_start <= 1.0)) fail("hp.epsilon_start must be <= 1");
  if (!(hp.epsilon_decay > 0.0 && hp.epsilon_decay <= 1.0)) fail("hp.epsilon_decay must be in (0, 1]");
  if (!(hp.gamma > 0.0 && hp.gamma < 1.0)) fail("hp.gamma must be in (0, 1)");
  if (hp.capacity < 1) fail("hp.capacity must be >= 1");
  if (hp.batch_size < 1) fail("hp.batch_size must be >= 1");
  if (hp.min_replay > hp.capacity) fail("hp.min_replay must be <= hp.capacity");
  if (hp.batch_size > hp.min_replay) fail("hp.batch_size must be <= hp.min_replay");
  if (hp.target_sync_every < 1) fail("hp.target_sync_every must be >= 1");
  if (hp.episodes < 0) fail("hp.episodes must be >= 0");
}

struct PriorityConfig {
  double beta = 0.25;  // boost, in units of the Q-value spread
  double tau = 0.05;   // minimum left/right sensor difference
  std::vector<int> left_sensors{0, 1, 2};
  std::vector<int> right_sensors{4, 5, 6};

  friend bool operator==(const PriorityConfig&, const PriorityConfig&) = default;
};

inline void validate(const PriorityConfig& p, int n_sensors) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(p.beta >= 0.0)) fail("priority.beta must be >= 0");
  if (!(p.tau >= 0.0)) fail("priority.tau must be >= 0");
  if (p.left_sensors.empty() || p.right_sensors.empty()) fail("priority sensor sets must be non-empty");
  const int center = n_sensors / 2;
  for (const auto* set : {&p.left_sensors, &p.right_sensors}) {
    for (int k : *set) {
      if (k < 0 || k >= n_sensors) fail("priority sensor index out of range");
      if (k == center) fail("priority sensor sets must exclude the center sensor");
    }
  }
  for (int k : p.left_sensors) {
    if (std::find(p.right_sensors.begin(), p.right_sensors.end(), k) !=
        p.right_sensors.end()) {
      fail("priority.left_sensors and priority.right_sensors must be disjoint");
    }
  }
}

inline double mean_over(std::span<const double> state, const std::vector<int>& idx) {
  double s = 0.0;
  for (int k : idx) s += state[static_cast<std::size_t>(k)];
  return s / static_cast<double>(idx.size());
}

// Adds beta * (max q - min q + 1e-9) to LEFT when the left sensors see more
// open space than the right by more than tau, to RIGHT in the mirrored case,
// and to NOOP otherwise. The spread term makes the boost shift-invariant.
inline std::vector<double> priority_boost(std::span<const double> q,
                                          std::span<const double> state,
                                          const PriorityConfig& cfg) {
  std::vector<double> out(q.begin(), q.end());
  const double left = mean_over(state, cfg.left_sensors);
  const double right = mean_over(state, cfg.right_sensors);
  const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
  const double boost = cfg.beta * ((*hi - *lo) + 1e-9);
  if (left - right > cfg.tau) {
    out[action_index(Action::kLeft)] += boost;
  } else if (right - left > cfg.tau) {
    out[action_index(Action::kRight)] += boost;
  } else {
    out[action_index(Action::kNoop)] += boost;
  }
  return out;
}

// Ties go to the lowest index (LEFT < RIGHT < NOOP).
inline Action argmax_action(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < q.size(); ++j) {
    if (q[j] > q[best]) best = j;
  }
  return static_cast<Action>(best);
}

// reward + gamma * max(next_q), except for a terminal transition that was
// not a truncation, which does not bootstrap.
inline double bellman_target(double reward, bool done, bool truncated,
                             std::span<const double> next_q, double gamma) {
  if (done && !truncated) return reward;
  return reward + gamma * *std::max_element(next_q.begin(), next_q.end());
}

enum class AgentMode { kOriginal, kModified };

struct ActionChoice {
  Action action = Action::kNoop;
  bool explored = false;
  std::vector<double> q;
  std::vector<double> boosted_q;  // equals q in ORIGINAL mode
};

// Epsilon-greedy selection. The uniform draw and the random action are the
// only RNG consumers, so both modes consume the stream identically.
inline ActionChoice select_epsilon_greedy(const Mlp& net,
                                          std::span<const double> state,
                                          double epsilon, AgentMode mode,
                                          const PriorityConfig& priority,
                                          Rng& rng) {
  ActionChoice c;
  c.q = forward(net, state);
  c.boosted_q = mode == AgentMode::kModified ? priority_boost(c.q, state, priority) : c.q;
  if (rng.uniform01() < epsilon) {
    c.explored = true;
    c.action = static_cast<Action>(rng.below(kNumActions));
  } else {
    c.action = argmax_action(c.boosted_q);
  }
  return c;
}

// Epsilon after n per-step decays, evaluated in closed form so long runs do
// not accumulate rounding from repeated multiplication.
inline double epsilon_after(const Hyperparams& hp, std::int64_t n) {
  return std::max(hp.epsilon_min,
                  hp.epsilon_start * std::pow(hp.epsilon_decay, static_cast<double>(n)));
}

class DqnAgent {
 public:
  DqnAgent(const Hyperparams& hp, AgentMode mode, const PriorityConfig& priority,
           const OptimizerSettings& opt, std::uint64_t seed)
      : DqnAgent(hp, mode, priority, opt, seed, init_mlp(derive_seed(seed, 0))) {}

  DqnAgent(const Hyperparams& hp, AgentMode mode, const PriorityConfig& priority,
           const OptimizerSettings& opt, std::uint64_t seed, Mlp initial_net)
      : hp_(hp),
        mode_(mode),
        priority_(priority),
        main_net_(std::move(initial_net)),
        target_net_(main_net_),
        optimizer_(opt, main_net_),
        buffer_(static_cast<std::size_t>(hp.capacity), derive_seed(seed, 1)),
        rng_(derive_seed(seed, 2)),
        epsilon_(hp.epsilon_start) {
    validate(hp_);
    if (mode_ == AgentMode::kModified) validate(priority_, main_net_.input_dim());
  }

  ActionChoice select_action(std::span<const double> state) {
    return select_epsilon_greedy(main_net_, state, epsilon_, mode_, priority_, rng_);
  }

  void push(Transition t) { buffer_.push(std::move(t)); }

  // Returns nullopt (skipped) until the buffer holds min_replay transitions.
  std::optional<double> train_step() {
    if (buffer_.size() < static_cast<std::size_t>(hp_.min_replay)) return std::nullopt;
    const auto batch = buffer_.sample(static_cast<std::size_t>(hp_.batch_size));
    const int n = static_cast<int>(batch.size());
    const int in_dim = main_net_.input_dim();
    const int out_dim = main_net_.output_dim();

    std::vector<double> next_inputs(static_cast<std::size_t>(n) * in_dim);
    TrainTarget target(n, in_dim, out_dim);
    for (int b = 0; b < n; ++b) {
      const Transition& t = *batch[static_cast<std::size_t>(b)];
      std::copy(t.state.begin(), t.state.end(),
                target.inputs.begin() + static_cast<std::ptrdiff_t>(b) * in_dim);
      std::copy(t.next_state.begin(), t.next_state.end(),
                next_inputs.begin() + static_cast<std::ptrdiff_t>(b) * in_dim);
    }
    const std::vector<double> next_q = forward_batch(target_net_, next_inputs, n);
    for (int b = 0; b < n; ++b) {
      const Transition& t = *batch[static_cast<std::size_t>(b)];
      const std::span<const double> row(next_q.data() + static_cast<std::size_t>(b) * out_dim,
                                        static_cast<std::size_t>(out_dim));
      const std::size_t slot = static_cast<std::size_t>(b) * out_dim + action_index(t.action);
      target.targets[slot] = bellman_target(t.reward, t.done,
                                            t.truncated && hp_.bootstrap_truncated,
                                            row, hp_.gamma);
      target.mask[slot] = 1;
    }
    const double loss = train_on_batch(main_net_, optimizer_, target);
    ++train_steps_;
    if (train_steps_ % hp_.target_sync_every == 0) clone_weights(main_net_, target_net_);
    return loss;
  }

  double decay_epsilon() { return epsilon_ = epsilon_after(hp_, ++decays_); }

  double epsilon() const { return epsilon_; }
  void set_epsilon(double e) { epsilon_ = e; }
  std::int64_t train_steps() const { return train_steps_; }
  AgentMode mode() const { return mode_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const PriorityConfig& priority() const { return priority_; }
  const Mlp& main_net() const { return main_net_; }
  const Mlp& target_net() const { return target_net_; }
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  Hyperparams hp_;
  AgentMode mode_;
  PriorityConfig priority_;
  Mlp main_net_;
  Mlp target_net_;
  OptimizerState optimizer_;
  ReplayBuffer buffer_;
  Rng rng_;
  double epsilon_;
  std::int64_t decays_ = 0;
  std::int64_t train_steps_ = 0;
};

// Online baseline: same network and epsilon-greedy policy, no replay buffer
// and no target network. Every transition produces one single-sample update
// whose bootstrap value comes from the network being trained.
class VanillaAgent {
 public:
  VanillaAgent(const Hyperparams& hp, const OptimizerSettings& opt, std::uint64_t seed)
      : VanillaAgent(hp, opt, seed, init_mlp(derive_seed(seed, 0))) {}

  VanillaAgent(const Hyperparams& hp, const OptimizerSettings& opt, std::uint64_t seed,
               Mlp initial_net)
      : hp_(hp),
        net_(std::move(initial_net)),
        optimizer_(opt, net_),
        rng_(derive_seed(seed, 2)),
        epsilon_(hp.epsilon_start) {
    validate(hp_);
  }

  ActionChoice select_action(std::span<const double> state) {
    return select_epsilon_greedy(net_, state, epsilon_, AgentMode::kOriginal, {}, rng_);
  }

  double act_and_learn(const Transition& t) {
    const int in_dim = net_.input_dim();
    const int out_dim = net_.output_dim();
    const std::vector<double> next_q = forward(net_, t.next_state);
    TrainTarget target(1, in_dim, out_dim);
    std::copy(t.state.begin(), t.state.end(), target.inputs.begin());
    const auto slot = static_cast<std::size_t>(action_index(t.action));
    target.targets[slot] = bellman_target(t.reward, t.done,
                                          t.truncated && hp_.bootstrap_truncated,
                                          next_q, hp_.gamma);
    target.mask[slot] = 1;
    ++train_steps_;
    return train_on_batch(net_, optimizer_, target);
  }

  double decay_epsilon() { return epsilon_ = epsilon_after(hp_, ++decays_); }

  double epsilon() const { return epsilon_; }
  void set_epsilon(double e) { epsilon_ = e; }
  std::int64_t train_steps() const { return train_steps_; }
  const Mlp& net() const { return net_; }

 private:
  Hyperparams hp_;
  Mlp net_;
  OptimizerState optimizer_;
  Rng rng_;
  double epsilon_;
  std::int64_t decays_ = 0;
  std::int64_t train_steps_ = 0;
};

// Tabular Q-learning over integer state and action ids; absent entries
// read as 0.
struct TabularQ {
  std::map<std::pair<int, int>, double> table;
  double alpha = 0.5;
  double gamma = 0.9;

  double value(int s, int a) const {
    const auto it = table.find({s, a});
    return it == table.end() ? 0.0 : it->second;
  }
};

// A = r + gamma * max_a' Q(s', a');  Q(s, a) += alpha * (A - Q(s, a)).
inline double tabular_update(TabularQ& q, int s, int a, double r, int s_next,
                             std::span<const int> actions) {
  double best = actions.empty() ? 0.0 : q.value(s_next, actions[0]);
  for (int b : actions) best = std::max(best, q.value(s_next, b));
  const double target = r + q.gamma * best;
  const double old = q.value(s, a);
  const double updated = q.alpha == 1.0 ? target : old + q.alpha * (target - old);
  q.table[{s, a}] = updated;
  return updated;
}

}  // namespace drive

#endif  // DRIVE_AGENT_HPP_
