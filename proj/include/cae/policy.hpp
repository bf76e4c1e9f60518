#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cae/env.hpp"
#include "cae/model.hpp"
#include "cae/oracle.hpp"

namespace cae {

/// Argmax over actions at conditioning index k; ties go to the lowest index.
template <ValueSource V>
ActionId greedy_action(const V& values, const typename V::State& s, const typename V::Goal& g, std::size_t k) {
  const auto v = values(s, g, k);
  return ActionId{argmax_lowest(v)};
}

/// Safety threshold and the viable conditioning indices (horizons for C/A,
/// gamma-grid points for D). With `distance_floor`, indices below the
/// metric distance d(s, g) are skipped, as in the maze setting.
struct HorizonSelectorConfig {
  double alpha = 0.9;
  std::vector<std::size_t> horizons;
  bool distance_floor = false;
};

inline std::vector<std::size_t> horizon_range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> h(hi >= lo ? hi - lo + 1 : 0);
  std::iota(h.begin(), h.end(), lo);
  return h;
}

inline void validate(const HorizonSelectorConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw std::invalid_argument("policy: alpha must lie in (0, 1]");
  if (cfg.horizons.empty()) throw std::invalid_argument("policy: empty horizon set");
  if (!std::is_sorted(cfg.horizons.begin(), cfg.horizons.end()) ||
      std::adjacent_find(cfg.horizons.begin(), cfg.horizons.end()) != cfg.horizons.end())
    throw std::invalid_argument("policy: horizon set must be strictly ascending");
}

/// Default selector for a variant: H = {1..h_max} for C/A, every grid point
/// for D, the single index for Q.
inline HorizonSelectorConfig default_selector(const Conditioning& cond, double alpha = 0.9) {
  HorizonSelectorConfig cfg;
  cfg.alpha = alpha;
  switch (cond.variant) {
    case Variant::c:
    case Variant::a: cfg.horizons = horizon_range(1, static_cast<std::size_t>(cond.h_max)); break;
    case Variant::d: cfg.horizons = horizon_range(0, cond.gamma_grid.size() - 1); break;
    case Variant::q: cfg.horizons = {0}; break;
  }
  return cfg;
}

/// h_alpha: with M = max over H and a, the smallest h in H whose best
/// action value reaches alpha * M. `floor` drops indices below it unless
/// that would empty H.
template <ValueSource V>
std::size_t select_horizon(const V& values, const typename V::State& s, const typename V::Goal& g,
                           const HorizonSelectorConfig& cfg, double floor = 0.0) {
  validate(cfg);
  auto first = cfg.horizons.begin();
  if (floor > 0.0) {
    first = std::lower_bound(cfg.horizons.begin(), cfg.horizons.end(), floor,
                             [](std::size_t h, double f) { return static_cast<double>(h) < f; });
    if (first == cfg.horizons.end()) first = cfg.horizons.end() - 1;
  }
  const std::span<const std::size_t> hs(&*first, static_cast<std::size_t>(cfg.horizons.end() - first));
  const Eigen::MatrixXd v = values.values(s, g, hs);
  const Eigen::VectorXd best = v.colwise().maxCoeff();
  const double m = best.maxCoeff();
  for (std::size_t j = 0; j < hs.size(); ++j)
    if (best[static_cast<Eigen::Index>(j)] >= cfg.alpha * m) return hs[j];
  return hs.back();
}

/// Horizon-independent policy: greedy at h_alpha(s, g).
template <Environment E, ValueSource V>
class HorizonFreePolicy {
 public:
  HorizonFreePolicy(const E& env, V values, HorizonSelectorConfig cfg)
      : env_(&env), values_(std::move(values)), cfg_(std::move(cfg)) {
    validate(cfg_);
  }

  std::size_t horizon(const typename E::State& s, const typename E::Goal& g) const {
    const double floor = cfg_.distance_floor ? std::ceil(env_->distance(s, g)) : 0.0;
    return select_horizon(values_, s, g, cfg_, floor);
  }

  ActionId operator()(const typename E::State& s, const typename E::Goal& g) const {
    return greedy_action(values_, s, g, horizon(s, g));
  }

  const V& values() const { return values_; }
  const HorizonSelectorConfig& config() const { return cfg_; }

 private:
  const E* env_;
  V values_;
  HorizonSelectorConfig cfg_;
};

template <Environment E, ValueSource V>
HorizonFreePolicy<E, V> horizon_free_policy(const E& env, V values, HorizonSelectorConfig cfg) {
  return HorizonFreePolicy<E, V>(env, std::move(values), std::move(cfg));
}

/// epsilon(n) = base, or base / (1 + n / 1000) when decaying.
struct EpsilonSchedule {
  double base = 0.1;
  bool decay = false;

  double at(int n_gd) const { return decay ? base / (1.0 + n_gd / 1000.0) : base; }
};

/// With probability epsilon a uniform action, otherwise the wrapped policy.
/// One uniform draw per decision, plus one index draw when exploring.
template <class P>
class EpsilonGreedy {
 public:
  EpsilonGreedy(P base, double epsilon, std::size_t actions) : base_(std::move(base)), eps_(epsilon), n_(actions) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("policy: epsilon outside [0, 1]");
    if (actions == 0) throw std::invalid_argument("policy: no actions");
  }

  template <class S, class G>
  ActionId operator()(const S& s, const G& g, Rng& rng) const {
    if (rng.uniform() < eps_) return ActionId{rng.below(n_)};
    return base_(s, g);
  }

  double epsilon() const { return eps_; }

 private:
  P base_;
  double eps_;
  std::size_t n_;
};

template <class P>
EpsilonGreedy<P> epsilon_greedy(P base, double epsilon, std::size_t actions) {
  return EpsilonGreedy<P>(std::move(base), epsilon, actions);
}

template <class S>
struct Trajectory {
  std::vector<S> states;
  std::vector<ActionId> actions;
  std::vector<int> horizons;  // horizon in force when each action was chosen
};

/// Noise-free rendering: greedy action at h, h-1, ... and the single most
/// probable next state (first listed on ties, i.e. the intended move).
/// Stops at the goal, a terminal state or h = 0.
template <Enumerable E, ValueSource V>
Trajectory<typename E::State> most_likely_trajectory(const E& env, const V& values, typename E::State s,
                                                     const typename E::Goal& g, int h) {
  Trajectory<typename E::State> tr;
  tr.states.push_back(s);
  while (h > 0 && !env.goal_check(s, g) && !env.is_terminal(s)) {
    const ActionId a = greedy_action(values, s, g, static_cast<std::size_t>(h));
    const auto outcomes = env.transitions(s, a);
    std::size_t pick = 0;
    for (std::size_t i = 1; i < outcomes.size(); ++i)
      if (outcomes[i].probability > outcomes[pick].probability) pick = i;
    s = outcomes[pick].next;
    tr.actions.push_back(a);
    tr.horizons.push_back(h);
    tr.states.push_back(s);
    --h;
  }
  return tr;
}

/// Horizon-aware greedy policy from any value source, as a PolicySpec.
template <Enumerable E, ValueSource V>
PolicySpec greedy_policy_spec(const E& env, const V& values, int h_max) {
  PolicySpec pi(env.state_count(), env.goal_count(), h_max, env.action_count());
  for (std::size_t gi = 0; gi < env.goal_count(); ++gi)
    for (std::size_t si = 0; si < env.state_count(); ++si) {
      const auto ks = horizon_range(0, static_cast<std::size_t>(h_max));
      const Eigen::MatrixXd v = values.values(env.state_at(si), env.goal_at(gi), ks);
      for (int h = 0; h <= h_max; ++h) {
        const auto col = v.col(h);
        pi.set_action(si, gi, h, ActionId{argmax_lowest({col.data(), static_cast<std::size_t>(col.size())})});
      }
    }
  return pi;
}

/// A horizon-independent policy written out for every h.
template <Enumerable E, class P>
PolicySpec stationary_policy_spec(const E& env, const P& policy, int h_max) {
  PolicySpec pi(env.state_count(), env.goal_count(), h_max, env.action_count());
  for (std::size_t gi = 0; gi < env.goal_count(); ++gi)
    for (std::size_t si = 0; si < env.state_count(); ++si) {
      const auto s = env.state_at(si);
      const ActionId a = env.is_terminal(s) ? ActionId{0} : policy(s, env.goal_at(gi));
      for (int h = 0; h <= h_max; ++h) pi.set_action(si, gi, h, a);
    }
  return pi;
}

}  // namespace cae
