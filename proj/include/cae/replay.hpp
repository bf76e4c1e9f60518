#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cae/approx.hpp"
#include "cae/env.hpp"
#include "cae/model.hpp"

namespace cae {

/// One rollout: states s_0..s_T and actions a_0..a_{T-1}, so transition t
/// is (states[t], actions[t], states[t+1]). `terminal` marks an episode
/// that ended in a terminal non-goal state.
template <Environment E>
struct Episode {
  using State = typename E::State;
  using Goal = typename E::Goal;

  std::vector<State> states;
  std::vector<ActionId> actions;
  std::optional<Goal> goal;
  bool terminal = false;
  bool success = false;
  std::uint64_t index = 0;

  std::size_t length() const { return actions.size(); }
  bool operator==(const Episode&) const = default;
};

template <Environment E>
nlohmann::json episode_json(const Episode<E>& ep) {
  nlohmann::json j;
  j["index"] = ep.index;
  j["states"] = ep.states;
  std::vector<std::uint32_t> acts;
  for (auto a : ep.actions) acts.push_back(a.index);
  j["actions"] = acts;
  j["goal"] = ep.goal ? nlohmann::json(*ep.goal) : nlohmann::json(nullptr);
  j["terminal"] = ep.terminal;
  j["success"] = ep.success;
  return j;
}

template <Environment E>
Episode<E> episode_from_json(const nlohmann::json& j) {
  Episode<E> ep;
  ep.index = j.at("index").get<std::uint64_t>();
  ep.states = j.at("states").get<std::vector<typename E::State>>();
  for (auto a : j.at("actions").get<std::vector<std::uint32_t>>()) ep.actions.emplace_back(a);
  if (!j.at("goal").is_null()) ep.goal = j.at("goal").get<typename E::Goal>();
  ep.terminal = j.at("terminal").get<bool>();
  ep.success = j.at("success").get<bool>();
  if (ep.states.size() != ep.actions.size() + 1) throw std::invalid_argument("episode: states/actions length mismatch");
  return ep;
}

/// Reachability-guided horizon schedule, P(h) proportional to
/// h^(-kappa * n / N) on {1..h_max}.
struct HScheduleConfig {
  double kappa = 3.0;
  int n_gd = 0;
  int total_gd = 1;
  int h_max = 50;

  double exponent() const {
    if (total_gd <= 0) return 0.0;
    return kappa * static_cast<double>(n_gd) / static_cast<double>(total_gd);
  }
};

inline void validate(const HScheduleConfig& c) {
  if (!(c.kappa >= 0.0)) throw std::invalid_argument("h schedule: kappa must be non-negative");
  if (c.h_max < 1) throw std::invalid_argument("h schedule: h_max must be at least 1");
  if (c.n_gd < 0 || c.n_gd > c.total_gd) throw std::invalid_argument("h schedule: n_gd outside [0, N_gd]");
}

/// Unnormalized weights, index h-1.
inline std::vector<double> h_weights(const HScheduleConfig& c) {
  validate(c);
  std::vector<double> w(static_cast<std::size_t>(c.h_max));
  const double e = c.exponent();
  for (int h = 1; h <= c.h_max; ++h) w[static_cast<std::size_t>(h - 1)] = std::pow(static_cast<double>(h), -e);
  return w;
}

inline std::vector<double> h_probabilities(const HScheduleConfig& c) {
  auto w = h_weights(c);
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

enum class RelabelMode { future, reachability };

struct RelabelConfig {
  RelabelMode mode = RelabelMode::future;
  bool clip = false;  // y = 0 when d(s', g) > h - 1
};

/// A relabeled training tuple. `k` is the conditioning index (horizon for
/// C/A, gamma-grid point for tabular D, 0 otherwise) and `cond` the scalar
/// fed to networks. `h` is drawn from the schedule for every variant; it
/// bounds the reachability goal draw even when the variant ignores it.
template <Environment E>
struct TrainSample {
  typename E::State s;
  ActionId a;
  typename E::State next;
  typename E::Goal g;
  int h = 1;
  std::size_t k = 0;
  double cond = 0.0;
  bool hit_s = false;
  bool hit_next = false;
  bool next_terminal = false;
};

/// Unbounded episode store; sampling only visits episodes with at least
/// one transition.
template <Environment E>
class ReplayBuffer {
 public:
  void append(Episode<E> ep) {
    if (ep.states.size() != ep.actions.size() + 1) throw std::invalid_argument("replay: malformed episode");
    if (ep.length() > 0) nonempty_.push_back(episodes_.size());
    transitions_ += ep.length();
    episodes_.push_back(std::move(ep));
  }

  std::size_t size() const { return episodes_.size(); }
  std::size_t transitions() const { return transitions_; }
  bool sampleable() const { return !nonempty_.empty(); }
  const Episode<E>& operator[](std::size_t i) const { return episodes_.at(i); }
  const std::vector<Episode<E>>& episodes() const { return episodes_; }

  /// Uniform episode, uniform transition, h from the schedule, goal from
  /// the relabeler. `cond_of(h, rng)` fills the variant's conditioning.
  template <class CondFn>
  std::vector<TrainSample<E>> sample_batch(const E& env, std::size_t n, const HScheduleConfig& hs,
                                           const RelabelConfig& relabel, Rng& rng, CondFn&& cond_of) const {
    if (!sampleable()) throw std::logic_error("replay: no transitions to sample");
    const auto hw = h_weights(hs);
    std::vector<TrainSample<E>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ep = episodes_[nonempty_[rng.below(nonempty_.size())]];
      const std::size_t t = rng.below(ep.length());
      const int h = static_cast<int>(rng.categorical(hw)) + 1;
      TrainSample<E> x;
      x.s = ep.states[t];
      x.a = ep.actions[t];
      x.next = ep.states[t + 1];
      x.next_terminal = ep.terminal && t + 1 == ep.length();
      x.h = h;
      x.g = relabel_goal(env, ep, t, h, relabel, rng);
      x.hit_s = env.goal_check(x.s, x.g);
      x.hit_next = env.goal_check(x.next, x.g);
      const auto [k, c] = cond_of(h, rng);
      x.k = k;
      x.cond = c;
      out.push_back(std::move(x));
    }
    return out;
  }

  /// Future: uniform over goals achieved at s_{t+1}..s_T. Reachability:
  /// uniform over {g : d(s_t, g) <= h}.
  static typename E::Goal relabel_goal(const E& env, const Episode<E>& ep, std::size_t t, int h,
                                       const RelabelConfig& relabel, Rng& rng) {
    if (relabel.mode == RelabelMode::reachability)
      return env.sample_goal_within(ep.states[t], static_cast<double>(h), rng);
    if (ep.length() == 1 && ep.terminal && ep.goal) return *ep.goal;
    const std::size_t later = ep.states.size() - (t + 1);
    return env.achieved_goal(ep.states[t + 1 + rng.below(later)]);
  }

 private:
  std::vector<Episode<E>> episodes_;
  std::vector<std::size_t> nonempty_;
  std::size_t transitions_ = 0;
};

template <Environment E>
void write_episodes(std::ostream& out, const ReplayBuffer<E>& buffer) {
  for (const auto& ep : buffer.episodes()) out << episode_json(ep).dump() << '\n';
}

template <Environment E>
ReplayBuffer<E> read_episodes(std::istream& in) {
  ReplayBuffer<E> buffer;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      buffer.append(episode_from_json<E>(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("episode log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return buffer;
}

/// Options that shape bootstrap targets.
struct TargetOptions {
  Variant variant = Variant::c;
  double gamma = 0.99;  // Q only; D carries gamma per sample in `cond`
  bool clip = false;
};

/// Single-sample bootstrap targets under the frozen target network:
///   C: 1 if G(s,g); else 1 if G(s',g); 0 if s' is a hole; else max_a' C'(s',a',g,h-1)
///   A: G(s',g) if h = 1; 0 if s' is a hole; else max_a' A'(s',a',g,h-1)
///   D: G(s',g) + gamma (1 - G(s',g)) max_a' D'(s',a',g,gamma), 0 continuation at holes
///   Q: 1 if G(s,g); else gamma * (1 if G(s',g); 0 if hole; else max_a' Q'(s',a',g))
template <Environment E>
std::vector<double> make_targets(const E& env, const std::vector<TrainSample<E>>& batch, const AccessFn& target,
                                 const Conditioning& cond, const TargetOptions& opt) {
  std::vector<double> y(batch.size(), 0.0);
  std::vector<std::size_t> pending;
  QueryBatch q(env.feature_size());
  q.reserve(batch.size());
  auto defer = [&](std::size_t i, std::size_t k, double c) {
    pending.push_back(i);
    add_query(q, env, batch[i].next, batch[i].g, k, c);
  };
  auto beyond = [&](const TrainSample<E>& x, int steps) {
    return opt.clip && env.distance(x.next, x.g) > static_cast<double>(steps);
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& x = batch[i];
    switch (opt.variant) {
      case Variant::c:
        if (x.hit_s || x.hit_next) y[i] = 1.0;
        else if (x.next_terminal || x.h <= 1 || beyond(x, x.h - 1)) y[i] = 0.0;
        else defer(i, x.k - 1, cond.value(x.k - 1));
        break;
      case Variant::a:
        if (x.h <= 1) y[i] = x.hit_next ? 1.0 : 0.0;
        else if (x.next_terminal || beyond(x, x.h - 1)) y[i] = 0.0;
        else defer(i, x.k - 1, cond.value(x.k - 1));
        break;
      case Variant::d:
        if (x.hit_next) y[i] = 1.0;
        else if (x.next_terminal || x.cond == 0.0) y[i] = 0.0;
        else defer(i, x.k, x.cond);
        break;
      case Variant::q:
        if (x.hit_s) y[i] = 1.0;
        else if (x.hit_next) y[i] = opt.gamma;
        else if (x.next_terminal) y[i] = 0.0;
        else defer(i, 0, 0.0);
        break;
    }
  }
  if (!pending.empty()) {
    Eigen::MatrixXd p;
    target.probabilities(q, p);
    for (std::size_t j = 0; j < pending.size(); ++j) {
      const double best = p.col(static_cast<Eigen::Index>(j)).maxCoeff();
      const auto& x = batch[pending[j]];
      switch (opt.variant) {
        case Variant::c:
        case Variant::a: y[pending[j]] = best; break;
        case Variant::d: y[pending[j]] = x.cond * best; break;
        case Variant::q: y[pending[j]] = opt.gamma * best; break;
      }
    }
  }
  return y;
}

}  // namespace cae
