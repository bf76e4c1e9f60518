#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cae/approx.hpp"
#include "cae/env.hpp"
#include "cae/model.hpp"
#include "cae/policy.hpp"
#include "cae/replay.hpp"

namespace cae {

struct TrainConfig {
  Variant variant = Variant::c;
  int n_explore = 15;
  int n_gd = 300;
  int n_train = 64;
  int n_copy = 10;
  int batch_size = 256;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::sgd;
  int lr_drop_episode = 0;  // 0 disables the drop
  double lr_drop_factor = 0.1;
  double epsilon = 0.1;
  bool epsilon_decay = false;
  double kappa = 3.0;
  int h_max = 50;
  double gamma = 0.99;  // Q discount
  double alpha = 0.9;   // behavior policy safety threshold
  bool distance_floor = false;
  bool tabular = true;
  std::vector<std::size_t> hidden{60, 40};
  RelabelMode relabel = RelabelMode::reachability;
  bool clip = false;
  int checkpoint_interval = 0;  // goal-directed episodes between snapshots; 0 = final only
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  need(c.n_explore >= 0, "n_explore must be >= 0");
  need(c.n_gd >= 0, "n_gd must be >= 0");
  need(c.n_train >= 1, "n_train must be >= 1");
  need(c.n_copy >= 1, "n_copy must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.lr > 0.0 && std::isfinite(c.lr), "lr must be positive");
  need(c.lr_drop_episode >= 0, "lr_drop_episode must be >= 0");
  need(c.lr_drop_factor > 0.0, "lr_drop_factor must be positive");
  need(c.epsilon >= 0.0 && c.epsilon <= 1.0, "epsilon must lie in [0, 1]");
  need(c.kappa >= 0.0, "kappa must be >= 0");
  need(c.h_max >= 1, "h_max must be >= 1");
  need(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma must lie in [0, 1]");
  need(c.variant != Variant::q || c.gamma < 1.0, "Q-learning needs gamma < 1");
  need(c.alpha > 0.0 && c.alpha <= 1.0, "alpha must lie in (0, 1]");
  need(c.checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
  for (auto h : c.hidden) need(h >= 1, "hidden layer sizes must be >= 1");
  need(c.optimizer != OptimizerKind::average || c.tabular, "the averaging optimizer needs the tabular backend");
}

inline Conditioning conditioning_for(const TrainConfig& c) {
  Conditioning cond;
  cond.variant = c.variant;
  cond.h_max = c.h_max;
  return cond;
}

/// One line of the training metrics stream.
struct EpisodeRecord {
  int episode = 0;
  bool success = false;
  int length = 0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
  bool offline = false;
};

inline nlohmann::json to_json(const EpisodeRecord& r) {
  return {{"episode", r.episode},
          {"success", r.success},
          {"length", r.length},
          {"mean_loss", r.mean_loss},
          {"epsilon", r.epsilon},
          {"offline", r.offline}};
}

struct TrainReport {
  std::vector<EpisodeRecord> records;
  std::uint64_t batches = 0;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform actions until a terminal state or the length cap; no goal.
template <Environment E>
Episode<E> exploration_rollout(const E& env, Rng& rng, std::uint64_t index) {
  Episode<E> ep;
  ep.index = index;
  auto s = env.initial_state(rng, Phase::train);
  ep.states.push_back(s);
  while (static_cast<int>(ep.length()) < env.max_episode_length() && !env.is_terminal(s)) {
    const ActionId a{rng.below(env.action_count())};
    s = env.step(s, a, rng).next;
    ep.actions.push_back(a);
    ep.states.push_back(s);
  }
  ep.terminal = env.is_terminal(s);
  return ep;
}

/// Runs `policy(s, g, rng)` from s0 until the goal, a terminal state or
/// the length cap.
template <Environment E, class P>
Episode<E> behavior_rollout(const E& env, const P& policy, const typename E::Goal& g, typename E::State s0, Rng& rng,
                            std::uint64_t index = 0) {
  Episode<E> ep;
  ep.index = index;
  ep.goal = g;
  auto s = s0;
  ep.states.push_back(s);
  while (static_cast<int>(ep.length()) < env.max_episode_length() && !env.goal_check(s, g) && !env.is_terminal(s)) {
    const ActionId a = policy(s, g, rng);
    s = env.step(s, a, rng).next;
    ep.actions.push_back(a);
    ep.states.push_back(s);
  }
  ep.success = env.goal_check(s, g);
  ep.terminal = !ep.success && env.is_terminal(s);
  return ep;
}

template <Environment E>
struct TrainHooks {
  std::function<void(const EpisodeRecord&)> on_episode;
  /// (goal-directed episodes completed, approximator, gradient steps)
  std::function<void(int, const AccessFn&, std::uint64_t)> on_checkpoint;
  /// Offline mode: train on these episodes, collect nothing.
  const ReplayBuffer<E>* replay_in = nullptr;
};

template <Environment E>
struct TrainResult {
  std::unique_ptr<AccessFn> fn;
  Conditioning cond;
  TrainReport report;
  ReplayBuffer<E> buffer;
};

/// The training loop: N_explore random episodes, then N_GD goal-directed
/// episodes each followed by N_train gradient steps, refreshing the target
/// every N_copy steps. Every random draw comes from a stream split off the
/// seed, so equal seeds give bit-identical parameters.
template <Environment E>
TrainResult<E> train(const E& env, const TrainConfig& cfg, const TrainHooks<E>& hooks = {},
                     std::unique_ptr<AccessFn> init = nullptr) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Rng root(cfg.seed);
  Rng init_rng = root.split(1), explore_rng = root.split(2), goal_rng = root.split(3), act_rng = root.split(4),
      batch_rng = root.split(5);

  TrainResult<E> out;
  out.cond = conditioning_for(cfg);
  const Conditioning& cond = out.cond;
  out.fn = init ? std::move(init) : make_approximator(env, cond, cfg.tabular, cfg.hidden, init_rng);
  if (out.fn->heads() != env.action_count()) throw std::invalid_argument("train: approximator head count mismatch");
  AccessFn& fn = *out.fn;
  auto* table = dynamic_cast<TabularFn*>(out.fn.get());
  if (cfg.optimizer == OptimizerKind::average && table == nullptr)
    throw std::invalid_argument("train: the averaging optimizer needs a tabular approximator");

  const bool offline = hooks.replay_in != nullptr;
  if (offline) {
    out.buffer = *hooks.replay_in;
  } else {
    for (int i = 0; i < cfg.n_explore; ++i) out.buffer.append(exploration_rollout(env, explore_rng, out.buffer.size()));
  }

  const RelabelConfig relabel{cfg.relabel, cfg.clip};
  const TargetOptions topt{cfg.variant, cfg.gamma, cfg.clip};
  const Loss loss = cfg.variant == Variant::q ? Loss::squared : Loss::bce;
  const EpsilonSchedule eps{cfg.epsilon, cfg.epsilon_decay};
  HorizonSelectorConfig selector = default_selector(cond, cfg.alpha);
  selector.distance_floor = cfg.distance_floor;

  auto cond_of = [&](int h, Rng& rng) -> std::pair<std::size_t, double> {
    switch (cfg.variant) {
      case Variant::c:
      case Variant::a: return {static_cast<std::size_t>(h), cond.value(static_cast<std::size_t>(h))};
      case Variant::d:
        if (cfg.tabular) {
          const std::size_t k = rng.below(cond.gamma_grid.size());
          return {k, cond.gamma_grid[k]};
        }
        return {0, rng.uniform()};
      case Variant::q: return {0, 0.0};
    }
    return {0, 0.0};
  };

  OptimState opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.lr;
  std::unique_ptr<TargetParams> target;
  Gradient grad;
  QueryBatch qb(env.feature_size());
  std::vector<std::size_t> acts;
  std::uint64_t nb = 0;

  for (int n = 0; n < cfg.n_gd; ++n) {
    EpisodeRecord rec;
    rec.episode = n;
    rec.offline = offline;
    rec.epsilon = eps.at(n);
    if (!offline) {
      const auto g = env.sample_goal(goal_rng);
      const auto s0 = env.initial_state(act_rng, Phase::train);
      const LearnedValues<E> values(env, fn, cond, cfg.clip);
      const auto behavior = epsilon_greedy(horizon_free_policy(env, values, selector), rec.epsilon, env.action_count());
      auto ep = behavior_rollout(env, behavior, g, s0, act_rng, out.buffer.size());
      rec.success = ep.success;
      rec.length = static_cast<int>(ep.length());
      out.buffer.append(std::move(ep));
    }
    if (cfg.lr_drop_episode > 0 && n >= cfg.lr_drop_episode) opt.lr = cfg.lr * cfg.lr_drop_factor;
    const HScheduleConfig hs{cfg.kappa, n, cfg.n_gd, cfg.h_max};
    double loss_sum = 0.0;
    int steps = 0;
    if (out.buffer.sampleable()) {
      for (int j = 0; j < cfg.n_train; ++j) {
        if (nb % static_cast<std::uint64_t>(cfg.n_copy) == 0) target = std::make_unique<TargetParams>(fn);
        const auto batch = out.buffer.sample_batch(env, static_cast<std::size_t>(cfg.batch_size), hs, relabel,
                                                   batch_rng, cond_of);
        const auto y = make_targets(env, batch, target->fn(), cond, topt);
        qb.clear();
        acts.clear();
        for (const auto& x : batch) {
          add_query(qb, env, x.s, x.g, x.k, x.cond);
          acts.push_back(x.a.index);
        }
        double mean = 0.0;
        try {
          if (cfg.optimizer == OptimizerKind::average) {
            mean = average_step(*table, qb, acts, y, loss, opt).mean_loss;
          } else {
            mean = backward(fn, qb, acts, y, loss, grad).mean_loss;
            apply_update(fn, grad, opt);
          }
        } catch (const NonFiniteGradient& e) {
          throw TrainingDiverged("train: non-finite loss at episode " + std::to_string(n) + ", batch " +
                                 std::to_string(nb) + " (" + e.what() + ")");
        }
        loss_sum += mean;
        ++steps;
        ++nb;
      }
    }
    rec.mean_loss = steps > 0 ? loss_sum / steps : 0.0;
    if (!std::isfinite(rec.mean_loss))
      throw TrainingDiverged("train: mean loss is not finite at episode " + std::to_string(n));
    out.report.records.push_back(rec);
    if (hooks.on_episode) hooks.on_episode(rec);
    if (hooks.on_checkpoint && cfg.checkpoint_interval > 0 && (n + 1) % cfg.checkpoint_interval == 0 &&
        n + 1 < cfg.n_gd)
      hooks.on_checkpoint(n + 1, fn, nb);
  }
  out.report.batches = nb;
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace cae
