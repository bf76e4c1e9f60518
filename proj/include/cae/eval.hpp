#pragma once

#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cae/dubins.hpp"
#include "cae/env.hpp"
#include "cae/grid_world.hpp"
#include "cae/model.hpp"
#include "cae/oracle.hpp"
#include "cae/policy.hpp"

namespace cae {

template <class G>
struct TaggedGoal {
  G goal;
  std::string tag;
};

/// Rollout statistics for one goal. Sums are kept so that aggregates are
/// exact trial-weighted means.
struct GoalRecord {
  nlohmann::json goal;
  std::string tag;
  int successes = 0;
  int trials = 0;
  double length_sum = 0.0;    // over successful trials
  double distance_sum = 0.0;  // final distance, over all trials

  double success_rate() const { return trials > 0 ? 100.0 * successes / trials : 0.0; }
  std::optional<double> mean_length() const {
    if (successes == 0) return std::nullopt;
    return length_sum / successes;
  }
  double mean_final_distance() const { return trials > 0 ? distance_sum / trials : 0.0; }
};

struct StratumSummary {
  std::string tag;
  int goals = 0;
  int successes = 0;
  int trials = 0;
  double length_sum = 0.0;
  double distance_sum = 0.0;

  void add(const GoalRecord& r) {
    ++goals;
    successes += r.successes;
    trials += r.trials;
    length_sum += r.length_sum;
    distance_sum += r.distance_sum;
  }
  double success_rate() const { return trials > 0 ? 100.0 * successes / trials : 0.0; }
  std::optional<double> mean_length() const {
    if (successes == 0) return std::nullopt;
    return length_sum / successes;
  }
  double mean_final_distance() const { return trials > 0 ? distance_sum / trials : 0.0; }
};

namespace detail {

inline nlohmann::json optional_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

template <class R>
nlohmann::json summary_json(const R& r) {
  return {{"successes", r.successes},
          {"trials", r.trials},
          {"success_rate", r.success_rate()},
          {"mean_length", optional_json(r.mean_length())},
          {"mean_final_distance", r.mean_final_distance()}};
}

}  // namespace detail

struct EvalReport {
  std::vector<GoalRecord> goals;
  std::vector<StratumSummary> strata;  // in order of first appearance
  StratumSummary overall{"all"};
  int trials_per_goal = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["trials_per_goal"] = trials_per_goal;
    j["seed"] = seed;
    j["goals"] = nlohmann::json::array();
    for (const auto& g : goals) {
      auto row = detail::summary_json(g);
      row["goal"] = g.goal;
      row["tag"] = g.tag;
      j["goals"].push_back(row);
    }
    j["strata"] = nlohmann::json::object();
    for (const auto& s : strata) j["strata"][s.tag] = detail::summary_json(s);
    j["overall"] = detail::summary_json(overall);
    return j;
  }

  /// One row per goal followed by one per stratum and the overall row; an
  /// empty mean_length cell means no successful trial.
  void write_csv(std::ostream& out) const {
    out << "scope,tag,goal,successes,trials,success_rate,mean_length,mean_final_distance\n";
    auto row = [&](const std::string& scope, const std::string& tag, const std::string& goal, const auto& r) {
      out << scope << ',' << tag << ",\"" << goal << "\"," << r.successes << ',' << r.trials << ','
          << format_number(r.success_rate()) << ',';
      if (auto m = r.mean_length()) out << format_number(*m);
      out << ',' << format_number(r.mean_final_distance()) << '\n';
    };
    for (const auto& g : goals) row("goal", g.tag, g.goal.dump(), g);
    for (const auto& s : strata) row("stratum", s.tag, "", s);
    row("overall", "all", "", overall);
  }

  static std::string format_number(double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
  }
};

/// Builds per-stratum and overall aggregates from the goal records.
inline void aggregate(EvalReport& report) {
  report.strata.clear();
  report.overall = StratumSummary{"all"};
  std::map<std::string, std::size_t> where;
  for (const auto& g : report.goals) {
    auto it = where.find(g.tag);
    if (it == where.end()) {
      it = where.emplace(g.tag, report.strata.size()).first;
      report.strata.push_back(StratumSummary{g.tag});
    }
    report.strata[it->second].add(g);
    report.overall.add(g);
  }
}

/// Evaluation policy: (state, goal, steps taken so far, rng) -> action.
/// Must be safe to call concurrently.
template <Environment E>
using EvalPolicy = std::function<ActionId(const typename E::State&, const typename E::Goal&, int, Rng&)>;

/// `trials` rollouts per goal from the test start distribution, each capped
/// at max_episode_length steps. Goal i draws from stream i + 1 of the seed,
/// so the report does not depend on the thread count.
template <Environment E>
EvalReport evaluate(const E& env, const EvalPolicy<E>& policy, const std::vector<TaggedGoal<typename E::Goal>>& goals,
                    int trials, std::uint64_t seed, int threads = 1) {
  if (trials < 1) throw std::invalid_argument("evaluate: trials must be >= 1");
  EvalReport report;
  report.trials_per_goal = trials;
  report.seed = seed;
  report.goals.resize(goals.size());
  const Rng root(seed);
  std::exception_ptr failure;
  std::mutex failure_lock;
  detail::for_each_goal(goals.size(), threads, [&](std::size_t i) {
    try {
      Rng rng = root.split(i + 1);
      const auto& g = goals[i].goal;
      GoalRecord rec;
      nlohmann::json gj;
      to_json(gj, g);
      rec.goal = gj;
      rec.tag = goals[i].tag;
      rec.trials = trials;
      for (int trial = 0; trial < trials; ++trial) {
        auto s = env.initial_state(rng, Phase::test);
        int t = 0;
        bool hit = env.goal_check(s, g);
        while (!hit && t < env.max_episode_length() && !env.is_terminal(s)) {
          s = env.step(s, policy(s, g, t, rng), rng).next;
          ++t;
          hit = env.goal_check(s, g);
        }
        if (hit) {
          ++rec.successes;
          rec.length_sum += t;
        }
        rec.distance_sum += env.distance(s, g);
      }
      report.goals[i] = std::move(rec);
    } catch (...) {
      std::lock_guard lock(failure_lock);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  aggregate(report);
  return report;
}

/// Horizon-free greedy policy as an evaluation policy.
template <Environment E, ValueSource V>
EvalPolicy<E> horizon_free_eval_policy(const E& env, V values, HorizonSelectorConfig cfg) {
  auto pol = std::make_shared<HorizonFreePolicy<E, V>>(env, std::move(values), std::move(cfg));
  return [pol](const typename E::State& s, const typename E::Goal& g, int, Rng&) { return (*pol)(s, g); };
}

/// Horizon-aware greedy policy started at h0 and counting down; once the
/// horizon is spent it keeps acting at h = 1.
template <Environment E, ValueSource V>
EvalPolicy<E> countdown_eval_policy(V values, int h0) {
  if (h0 < 1) throw std::invalid_argument("countdown policy: h0 must be >= 1");
  auto v = std::make_shared<V>(std::move(values));
  return [v, h0](const typename E::State& s, const typename E::Goal& g, int t, Rng&) {
    return greedy_action(*v, s, g, static_cast<std::size_t>(std::max(1, h0 - t)));
  };
}

struct SeedStatistic {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single seed
  int n = 0;
};

inline SeedStatistic seed_statistic(const std::vector<double>& xs) {
  SeedStatistic out;
  out.n = static_cast<int>(xs.size());
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

/// Success rate mean and spread across seeds, overall and per stratum.
inline nlohmann::json across_seeds(const std::vector<EvalReport>& reports) {
  std::map<std::string, std::vector<double>> rates;
  std::vector<std::string> order;
  for (const auto& r : reports) {
    for (const auto& s : r.strata) {
      if (!rates.contains(s.tag)) order.push_back(s.tag);
      rates[s.tag].push_back(s.success_rate());
    }
    rates["*overall"].push_back(r.overall.success_rate());
  }
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const std::string& key, const std::vector<double>& xs) {
    const auto st = seed_statistic(xs);
    j[key] = {{"mean", st.mean}, {"std", st.std}, {"seeds", st.n}};
  };
  for (const auto& tag : order) put(tag, rates[tag]);
  put("overall", rates["*overall"]);
  return j;
}

// ---------------------------------------------------------------------------
// Heatmaps

/// max_a V(s, a, g, k) over a rows x cols goal lattice; cells whose goal
/// is absent (walls) hold NaN. Row r, column c is the goal goal_of(r, c).
template <ValueSource V>
Eigen::MatrixXd heatmap(const V& values, const typename V::State& s, std::size_t k, int rows, int cols,
                        const std::function<std::optional<typename V::Goal>(int, int)>& goal_of) {
  Eigen::MatrixXd out(rows, cols);
  const std::size_t ks[1] = {k};
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto g = goal_of(r, c);
      out(r, c) = g ? values.values(s, *g, ks).maxCoeff() : std::numeric_limits<double>::quiet_NaN();
    }
  return out;
}

/// Row r is y = r, column c is x = c.
template <ValueSource V>
Eigen::MatrixXd grid_heatmap(const GridWorld& env, const V& values, Cell s, std::size_t k) {
  const auto& l = env.layout();
  return heatmap(values, s, k, l.height, l.width, [&](int r, int c) -> std::optional<Cell> {
    const Cell g{c, r};
    if (!env.valid(g)) return std::nullopt;
    return g;
  });
}

/// resolution x resolution goal cell centres over the arena.
template <ValueSource V>
Eigen::MatrixXd dubins_heatmap(const DubinsCar& env, const V& values, const DubinsState& s, std::size_t k,
                               int resolution) {
  if (resolution < 1) throw std::invalid_argument("heatmap: resolution must be >= 1");
  const double cell = env.layout().size / resolution;
  return heatmap(values, s, k, resolution, resolution, [&](int r, int c) -> std::optional<Point> {
    return Point{(c + 0.5) * cell, (r + 0.5) * cell};
  });
}

/// Writes the matrix with the highest row first, so the text reads like
/// the map; NaN cells are left empty.
inline void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = m.rows() - 1; r >= 0; --r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      if (!std::isnan(m(r, c))) out << EvalReport::format_number(m(r, c));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Trajectories

inline std::vector<std::string> state_columns(const Cell&) { return {"x", "y"}; }
inline std::vector<std::string> state_columns(const DubinsState&) { return {"x", "y", "heading"}; }
inline std::vector<double> state_fields(const Cell& c) { return {static_cast<double>(c.x), static_cast<double>(c.y)}; }
inline std::vector<double> state_fields(const DubinsState& s) { return {s.x, s.y, s.heading}; }

/// t, state fields, action taken at t (empty on the final row).
template <class S>
void write_trajectory_csv(std::ostream& out, const std::vector<S>& states, const std::vector<ActionId>& actions) {
  out << 't';
  for (const auto& c : state_columns(S{})) out << ',' << c;
  out << ",action\n";
  for (std::size_t t = 0; t < states.size(); ++t) {
    out << t;
    for (double v : state_fields(states[t])) out << ',' << EvalReport::format_number(v);
    out << ',';
    if (t < actions.size()) out << actions[t].index;
    out << '\n';
  }
}

/// Greedy rollout without noise for rendering: the policy is queried with
/// the real step function, which for stochastic environments samples.
template <Environment E>
std::pair<std::vector<typename E::State>, std::vector<ActionId>> rollout_path(const E& env, const EvalPolicy<E>& policy,
                                                                             const typename E::Goal& g,
                                                                             std::uint64_t seed) {
  Rng rng(seed);
  auto s = env.initial_state(rng, Phase::test);
  std::vector<typename E::State> states{s};
  std::vector<ActionId> actions;
  int t = 0;
  while (!env.goal_check(s, g) && t < env.max_episode_length() && !env.is_terminal(s)) {
    const ActionId a = policy(s, g, t, rng);
    s = env.step(s, a, rng).next;
    actions.push_back(a);
    states.push_back(s);
    ++t;
  }
  return {states, actions};
}

}  // namespace cae
