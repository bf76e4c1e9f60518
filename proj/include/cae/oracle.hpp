#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "cae/finite_mdp.hpp"
#include "cae/variant.hpp"

namespace cae {

/// Dense exact value table indexed by (state, action, goal, k), where k is
/// the horizon for C/A, the gamma-grid position for D and always 0 for Q.
/// Storage is goal-major so that each goal slice is contiguous.
class ExactTable {
 public:
  ExactTable(Variant variant, std::size_t states, std::size_t actions, std::size_t goals, std::size_t depth,
             bool deterministic)
      : variant_(variant),
        states_(states),
        actions_(actions),
        goals_(goals),
        depth_(depth),
        deterministic_(deterministic),
        values_(states * actions * goals * depth, 0.0) {}

  Variant variant() const { return variant_; }
  std::size_t states() const { return states_; }
  std::size_t actions() const { return actions_; }
  std::size_t goals() const { return goals_; }
  std::size_t depth() const { return depth_; }
  bool deterministic() const { return deterministic_; }
  /// Largest horizon stored (C/A tables).
  int h_max() const { return static_cast<int>(depth_) - 1; }

  double operator()(std::size_t s, std::size_t a, std::size_t g, std::size_t k) const {
    return values_[index(s, a, g, k)];
  }
  double& at(std::size_t s, std::size_t a, std::size_t g, std::size_t k) { return values_[index(s, a, g, k)]; }

  std::span<const double> actions_at(std::size_t s, std::size_t g, std::size_t k) const {
    return {values_.data() + index(s, 0, g, k), actions_};
  }
  double max_action(std::size_t s, std::size_t g, std::size_t k) const {
    const auto v = actions_at(s, g, k);
    return *std::max_element(v.begin(), v.end());
  }

  std::span<const double> values() const { return values_; }

  std::vector<double> gammas;            // D: grid; Q: single discount
  std::vector<std::uint8_t> converged;   // D/Q: per k, value iteration met tolerance
  std::vector<int> iterations;           // D/Q: per k, sweeps used

 private:
  std::size_t index(std::size_t s, std::size_t a, std::size_t g, std::size_t k) const {
    return ((g * depth_ + k) * states_ + s) * actions_ + a;
  }

  Variant variant_;
  std::size_t states_, actions_, goals_, depth_;
  bool deterministic_;
  std::vector<double> values_;
};

/// Horizon-aware stochastic policy over an enumerable MDP,
/// (state, goal, horizon) -> distribution over actions. Unset entries are
/// reported when an evaluation needs them.
class PolicySpec {
 public:
  PolicySpec(std::size_t states, std::size_t goals, int h_max, std::size_t actions)
      : states_(states),
        goals_(goals),
        depth_(static_cast<std::size_t>(h_max) + 1),
        actions_(actions),
        probs_(states * goals * depth_ * actions, std::numeric_limits<double>::quiet_NaN()) {}

  std::size_t actions() const { return actions_; }
  int h_max() const { return static_cast<int>(depth_) - 1; }

  void set(std::size_t s, std::size_t g, int h, std::span<const double> dist) {
    if (dist.size() != actions_) throw std::invalid_argument("policy: distribution has wrong arity");
    double total = 0.0;
    for (double p : dist) {
      if (!(p >= 0.0)) throw std::invalid_argument("policy: negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("policy: distribution does not sum to 1");
    std::copy(dist.begin(), dist.end(), probs_.begin() + static_cast<std::ptrdiff_t>(offset(s, g, h)));
  }

  void set_action(std::size_t s, std::size_t g, int h, ActionId a) {
    std::vector<double> d(actions_, 0.0);
    d.at(a.index) = 1.0;
    set(s, g, h, d);
  }

  bool has(std::size_t s, std::size_t g, int h) const {
    return h >= 0 && h <= h_max() && !std::isnan(probs_[offset(s, g, h)]);
  }

  std::span<const double> distribution(std::size_t s, std::size_t g, int h) const {
    if (!has(s, g, h))
      throw std::out_of_range("policy: no distribution for (s=" + std::to_string(s) + ", g=" + std::to_string(g) +
                              ", h=" + std::to_string(h) + ")");
    return {probs_.data() + offset(s, g, h), actions_};
  }

 private:
  std::size_t offset(std::size_t s, std::size_t g, int h) const {
    return ((g * depth_ + static_cast<std::size_t>(h)) * states_ + s) * actions_;
  }

  std::size_t states_, goals_, depth_, actions_;
  std::vector<double> probs_;
};

/// Lowest index among maximal entries.
inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

namespace detail {

inline void for_each_goal(std::size_t goals, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || goals < 2) {
    for (std::size_t g = 0; g < goals; ++g) fn(g);
    return;
  }
  std::vector<std::thread> pool;
  const auto n = static_cast<std::size_t>(threads);
  for (std::size_t t = 0; t < n; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t g = t; g < goals; g += n) fn(g);
    });
  for (auto& th : pool) th.join();
}

/// Expected continuation sum_{s'} p(s'|s,a) next[s'].
inline double expect(const FiniteMdp& m, std::size_t s, std::size_t a, std::span<const double> next) {
  double v = 0.0;
  for (const auto& arc : m.row(s, a)) v += arc.probability * next[arc.next];
  return v;
}

inline void check_horizon(int h_max) {
  if (h_max < 0) throw std::invalid_argument("oracle: h_max must be non-negative");
}

}  // namespace detail

struct OracleOptions {
  int threads = 1;
};

/// Optimal cumulative accessibility by backward induction over h:
/// C*(s,a,g,h) = G(s,g) if G(s,g)=1 or h=0, else E_{s'}[max_a' C*(s',a',g,h-1)].
/// Terminal non-goal states keep value 0.
inline ExactTable compute_c_star(const FiniteMdp& m, int h_max, OracleOptions opt = {}) {
  detail::check_horizon(h_max);
  m.check_normalized();
  ExactTable t(Variant::c, m.states, m.actions, m.goals, static_cast<std::size_t>(h_max) + 1, m.deterministic);
  detail::for_each_goal(m.goals, opt.threads, [&](std::size_t g) {
    std::vector<double> best(m.states);
    for (std::size_t s = 0; s < m.states; ++s) {
      const double base = m.goal_hit(s, g) ? 1.0 : 0.0;
      for (std::size_t a = 0; a < m.actions; ++a) t.at(s, a, g, 0) = base;
      best[s] = base;
    }
    for (int h = 1; h <= h_max; ++h) {
      const auto k = static_cast<std::size_t>(h);
      for (std::size_t s = 0; s < m.states; ++s)
        for (std::size_t a = 0; a < m.actions; ++a) {
          double v;
          if (m.goal_hit(s, g)) v = 1.0;
          else if (m.is_terminal(s)) v = 0.0;
          else v = detail::expect(m, s, a, best);
          t.at(s, a, g, k) = v;
        }
      for (std::size_t s = 0; s < m.states; ++s) best[s] = t.max_action(s, g, k);
    }
  });
  return t;
}

/// C^pi for a fixed horizon-aware policy: the max over a' is replaced by the
/// expectation under pi(.|s',g,h-1). Entries are only demanded where the
/// continuation value depends on the action.
inline ExactTable compute_c_pi(const FiniteMdp& m, const PolicySpec& pi, int h_max) {
  detail::check_horizon(h_max);
  m.check_normalized();
  if (pi.actions() != m.actions) throw std::invalid_argument("oracle: policy arity mismatch");
  if (h_max > 0 && pi.h_max() < h_max - 1) throw std::invalid_argument("oracle: policy horizon too short");
  ExactTable t(Variant::c, m.states, m.actions, m.goals, static_cast<std::size_t>(h_max) + 1, m.deterministic);
  std::vector<std::uint8_t> entered(m.states, 0);
  for (const auto& arc : m.arcs)
    if (arc.probability > 0.0) entered[arc.next] = 1;
  for (std::size_t g = 0; g < m.goals; ++g) {
    std::vector<double> follow(m.states);
    for (std::size_t s = 0; s < m.states; ++s) {
      const double base = m.goal_hit(s, g) ? 1.0 : 0.0;
      for (std::size_t a = 0; a < m.actions; ++a) t.at(s, a, g, 0) = base;
      follow[s] = base;
    }
    for (int h = 1; h <= h_max; ++h) {
      const auto k = static_cast<std::size_t>(h);
      for (std::size_t s = 0; s < m.states; ++s)
        for (std::size_t a = 0; a < m.actions; ++a) {
          double v;
          if (m.goal_hit(s, g)) v = 1.0;
          else if (m.is_terminal(s)) v = 0.0;
          else v = detail::expect(m, s, a, follow);
          t.at(s, a, g, k) = v;
        }
      if (h == h_max) break;
      for (std::size_t s = 0; s < m.states; ++s) {
        if (m.goal_hit(s, g) || m.is_terminal(s) || !entered[s]) {
          follow[s] = t(s, 0, g, k);
          continue;
        }
        const auto dist = pi.distribution(s, g, h);
        double v = 0.0;
        for (std::size_t a = 0; a < m.actions; ++a) v += dist[a] * t(s, a, g, k);
        follow[s] = v;
      }
    }
  }
  return t;
}

/// Optimal probability of being at the goal after exactly h steps. Goal
/// states are not absorbing; terminal states are a non-goal sink once the
/// episode has ended (h >= 1).
inline ExactTable compute_a_star(const FiniteMdp& m, int h_max, OracleOptions opt = {}) {
  detail::check_horizon(h_max);
  m.check_normalized();
  ExactTable t(Variant::a, m.states, m.actions, m.goals, static_cast<std::size_t>(h_max) + 1, m.deterministic);
  detail::for_each_goal(m.goals, opt.threads, [&](std::size_t g) {
    std::vector<double> best(m.states);
    for (std::size_t s = 0; s < m.states; ++s) {
      const double base = m.goal_hit(s, g) ? 1.0 : 0.0;
      for (std::size_t a = 0; a < m.actions; ++a) t.at(s, a, g, 0) = base;
      best[s] = base;
    }
    for (int h = 1; h <= h_max; ++h) {
      const auto k = static_cast<std::size_t>(h);
      for (std::size_t s = 0; s < m.states; ++s)
        for (std::size_t a = 0; a < m.actions; ++a)
          t.at(s, a, g, k) = m.is_terminal(s) ? 0.0 : detail::expect(m, s, a, best);
      for (std::size_t s = 0; s < m.states; ++s) best[s] = t.max_action(s, g, k);
    }
  });
  return t;
}

inline std::vector<double> default_gamma_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

/// Discounted accessibility D*(s,a,g,gamma) = E[gamma^(T-1)], T the first
/// positive goal-hitting time, solved per gamma by value iteration from 0.
/// Each grid point records whether the residual reached `tol` within
/// 10 * max_episode_length sweeps.
inline ExactTable compute_d_star(const FiniteMdp& m, std::vector<double> gammas = default_gamma_grid(),
                                 double tol = 1e-10) {
  m.check_normalized();
  for (double gm : gammas)
    if (!(gm >= 0.0 && gm <= 1.0)) throw std::invalid_argument("oracle: gamma outside [0, 1]");
  ExactTable t(Variant::d, m.states, m.actions, m.goals, gammas.size(), m.deterministic);
  t.converged.assign(gammas.size(), 1);
  t.iterations.assign(gammas.size(), 0);
  const int cap = 10 * m.max_episode_length;
  std::vector<double> best(m.states), fresh(m.states * m.actions);
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    const double gamma = gammas[k];
    for (std::size_t g = 0; g < m.goals; ++g) {
      std::fill(best.begin(), best.end(), 0.0);
      bool done = false;
      int it = 0;
      while (!done && it < cap) {
        ++it;
        double residual = 0.0;
        for (std::size_t s = 0; s < m.states; ++s)
          for (std::size_t a = 0; a < m.actions; ++a) {
            double v = 0.0;
            if (!m.is_terminal(s))
              for (const auto& arc : m.row(s, a)) {
                const bool reached = m.goal_hit(arc.next, g);
                const double cont = (reached || m.is_terminal(arc.next)) ? 0.0 : gamma * best[arc.next];
                v += arc.probability * ((reached ? 1.0 : 0.0) + cont);
              }
            residual = std::max(residual, std::abs(v - t(s, a, g, k)));
            fresh[s * m.actions + a] = v;
          }
        for (std::size_t s = 0; s < m.states; ++s) {
          for (std::size_t a = 0; a < m.actions; ++a) t.at(s, a, g, k) = fresh[s * m.actions + a];
          best[s] = t.max_action(s, g, k);
        }
        done = residual <= tol;
      }
      if (!done) t.converged[k] = 0;
      t.iterations[k] = std::max(t.iterations[k], it);
    }
  }
  t.gammas = std::move(gammas);
  return t;
}

/// Goal-reaching Q*: Q*(s,a,g) = 1 when G(s,g)=1 (absorbing), 0 at terminal
/// non-goal states, otherwise gamma * E_{s'}[max_a' Q*(s',a',g)]. A goal k
/// optimal steps away is therefore worth gamma^k.
inline ExactTable compute_q_star(const FiniteMdp& m, double gamma, double tol = 1e-10, int max_sweeps = 100000) {
  m.check_normalized();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("oracle: Q* requires gamma in [0, 1)");
  ExactTable t(Variant::q, m.states, m.actions, m.goals, 1, m.deterministic);
  t.gammas = {gamma};
  t.converged = {1};
  t.iterations = {0};
  std::vector<double> best(m.states), fresh(m.states * m.actions);
  for (std::size_t g = 0; g < m.goals; ++g) {
    for (std::size_t s = 0; s < m.states; ++s) best[s] = m.goal_hit(s, g) ? 1.0 : 0.0;
    bool done = false;
    int it = 0;
    while (!done && it < max_sweeps) {
      ++it;
      double residual = 0.0;
      for (std::size_t s = 0; s < m.states; ++s)
        for (std::size_t a = 0; a < m.actions; ++a) {
          double v;
          if (m.goal_hit(s, g)) v = 1.0;
          else if (m.is_terminal(s)) v = 0.0;
          else v = gamma * detail::expect(m, s, a, best);
          residual = std::max(residual, std::abs(v - t(s, a, g, 0)));
          fresh[s * m.actions + a] = v;
        }
      for (std::size_t s = 0; s < m.states; ++s) {
        for (std::size_t a = 0; a < m.actions; ++a) t.at(s, a, g, 0) = fresh[s * m.actions + a];
        best[s] = t.max_action(s, g, 0);
      }
      done = residual <= tol;
    }
    if (!done) t.converged[0] = 0;
    t.iterations[0] = std::max(t.iterations[0], it);
  }
  return t;
}

/// Deterministic greedy policy from a C or A table, ties to the lowest index.
inline PolicySpec greedy_policy(const ExactTable& table) {
  if (!horizon_indexed(table.variant())) throw std::invalid_argument("greedy_policy: needs a horizon-indexed table");
  PolicySpec pi(table.states(), table.goals(), table.h_max(), table.actions());
  for (std::size_t g = 0; g < table.goals(); ++g)
    for (int h = 0; h <= table.h_max(); ++h)
      for (std::size_t s = 0; s < table.states(); ++s)
        pi.set_action(s, g, h, ActionId{argmax_lowest(table.actions_at(s, g, static_cast<std::size_t>(h)))});
  return pi;
}

inline PolicySpec uniform_policy(const FiniteMdp& m, int h_max) {
  PolicySpec pi(m.states, m.goals, h_max, m.actions);
  const std::vector<double> d(m.actions, 1.0 / static_cast<double>(m.actions));
  for (std::size_t g = 0; g < m.goals; ++g)
    for (int h = 0; h <= h_max; ++h)
      for (std::size_t s = 0; s < m.states; ++s) pi.set(s, g, h, d);
  return pi;
}

/// Probability that pi, started at s0 with horizon h, hits g within h
/// steps. Forward propagation of the surviving state distribution.
inline double policy_success_prob(const FiniteMdp& m, const PolicySpec& pi, std::size_t s0, std::size_t g, int h) {
  if (s0 >= m.states || g >= m.goals) throw std::out_of_range("policy_success_prob: index out of range");
  if (h < 0) throw std::invalid_argument("policy_success_prob: negative horizon");
  if (m.goal_hit(s0, g)) return 1.0;
  if (m.is_terminal(s0)) return 0.0;
  std::vector<double> mass(m.states, 0.0), next(m.states, 0.0);
  mass[s0] = 1.0;
  double success = 0.0;
  for (int remaining = h; remaining >= 1; --remaining) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < m.states; ++s) {
      if (mass[s] == 0.0) continue;
      const auto dist = pi.distribution(s, g, remaining);
      for (std::size_t a = 0; a < m.actions; ++a) {
        if (dist[a] == 0.0) continue;
        for (const auto& arc : m.row(s, a)) {
          const double w = mass[s] * dist[a] * arc.probability;
          if (m.goal_hit(arc.next, g)) success += w;
          else if (!m.is_terminal(arc.next)) next[arc.next] += w;
        }
      }
    }
    std::swap(mass, next);
  }
  return success;
}

/// Smallest h with max_a C*(s,a,g,h) = 1, if any within the table.
inline std::optional<int> min_horizon(const ExactTable& c_star, std::size_t s, std::size_t g) {
  if (c_star.variant() != Variant::c) throw std::invalid_argument("min_horizon: needs a C table");
  if (!c_star.deterministic()) throw ContractViolation("min_horizon: table built from a stochastic environment");
  for (int h = 0; h <= c_star.h_max(); ++h)
    if (c_star.max_action(s, g, static_cast<std::size_t>(h)) >= 1.0 - 1e-12) return h;
  return std::nullopt;
}

/// Largest decrease C(h) - C(h+1) over all entries (0 when monotone).
inline double max_monotonicity_violation(const ExactTable& t) {
  double worst = 0.0;
  for (std::size_t g = 0; g < t.goals(); ++g)
    for (std::size_t k = 0; k + 1 < t.depth(); ++k)
      for (std::size_t s = 0; s < t.states(); ++s)
        for (std::size_t a = 0; a < t.actions(); ++a) worst = std::max(worst, t(s, a, g, k) - t(s, a, g, k + 1));
  return worst;
}

}  // namespace cae
