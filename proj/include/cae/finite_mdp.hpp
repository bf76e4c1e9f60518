#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cae/env.hpp"

namespace cae {

/// Dense, index-based copy of an enumerable environment: the transition
/// kernel in CSR form, terminal flags and the goal-check matrix.
struct FiniteMdp {
  struct Arc {
    std::uint32_t next;
    double probability;
  };

  std::size_t states = 0;
  std::size_t actions = 0;
  std::size_t goals = 0;
  int max_episode_length = 1;
  bool deterministic = true;
  std::vector<std::size_t> row_begin;  // (s * actions + a) -> first arc; size states*actions+1
  std::vector<Arc> arcs;
  std::vector<std::uint8_t> terminal;  // per state
  std::vector<std::uint8_t> hit;       // states x goals, G(s, g)

  std::span<const Arc> row(std::size_t s, std::size_t a) const {
    const std::size_t r = s * actions + a;
    return {arcs.data() + row_begin[r], row_begin[r + 1] - row_begin[r]};
  }
  bool goal_hit(std::size_t s, std::size_t g) const { return hit[s * goals + g] != 0; }
  bool is_terminal(std::size_t s) const { return terminal[s] != 0; }

  /// Throws unless every row sums to one within `tol`.
  void check_normalized(double tol = 1e-12) const {
    for (std::size_t s = 0; s < states; ++s)
      for (std::size_t a = 0; a < actions; ++a) {
        double total = 0.0;
        for (const auto& arc : row(s, a)) {
          if (arc.probability < 0.0) throw std::invalid_argument("mdp: negative transition probability");
          total += arc.probability;
        }
        if (std::abs(total - 1.0) > tol)
          throw std::invalid_argument("mdp: kernel row (" + std::to_string(s) + ", " + std::to_string(a) +
                                      ") sums to " + std::to_string(total));
      }
  }
};

template <class S>
struct KernelEntry {
  S state;
  ActionId action;
  S next;
  double probability;
};

/// Every (s, a, s', p) with p > 0, in state-index then action order.
template <Enumerable E>
std::vector<KernelEntry<typename E::State>> enumerate_kernel(const E& env) {
  std::vector<KernelEntry<typename E::State>> out;
  for (std::size_t i = 0; i < env.state_count(); ++i) {
    const auto s = env.state_at(i);
    for (std::size_t a = 0; a < env.action_count(); ++a)
      for (const auto& o : env.transitions(s, ActionId{a})) out.push_back({s, ActionId{a}, o.next, o.probability});
  }
  return out;
}

template <Enumerable E>
FiniteMdp make_finite_mdp(const E& env) {
  FiniteMdp m;
  m.states = env.state_count();
  m.actions = env.action_count();
  m.goals = env.goal_count();
  m.max_episode_length = env.max_episode_length();
  m.row_begin.reserve(m.states * m.actions + 1);
  m.terminal.resize(m.states);
  m.hit.resize(m.states * m.goals);
  for (std::size_t s = 0; s < m.states; ++s) {
    const auto state = env.state_at(s);
    m.terminal[s] = env.is_terminal(state);
    for (std::size_t g = 0; g < m.goals; ++g) m.hit[s * m.goals + g] = env.goal_check(state, env.goal_at(g));
    for (std::size_t a = 0; a < m.actions; ++a) {
      m.row_begin.push_back(m.arcs.size());
      const auto outcomes = env.transitions(state, ActionId{a});
      if (outcomes.size() > 1) m.deterministic = false;
      for (const auto& o : outcomes)
        m.arcs.push_back({static_cast<std::uint32_t>(env.state_index(o.next)), o.probability});
    }
  }
  m.row_begin.push_back(m.arcs.size());
  m.check_normalized();
  return m;
}

}  // namespace cae
