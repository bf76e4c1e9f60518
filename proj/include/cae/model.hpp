#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cae/approx.hpp"
#include "cae/env.hpp"
#include "cae/oracle.hpp"
#include "cae/variant.hpp"

namespace cae {

/// How a variant's conditioning axis is laid out. Index k selects a horizon
/// (C, A), a gamma-grid point (D) or nothing (Q).
struct Conditioning {
  Variant variant = Variant::c;
  int h_max = 50;
  std::vector<double> gamma_grid = default_gamma_grid();

  std::size_t depth() const {
    switch (variant) {
      case Variant::c:
      case Variant::a: return static_cast<std::size_t>(h_max) + 1;
      case Variant::d: return gamma_grid.size();
      case Variant::q: return 1;
    }
    return 1;
  }

  /// Scalar appended to network inputs for index k.
  double value(std::size_t k) const {
    switch (variant) {
      case Variant::c:
      case Variant::a: return static_cast<double>(k) / static_cast<double>(h_max);
      case Variant::d: return gamma_grid.at(k);
      case Variant::q: return 0.0;
    }
    return 0.0;
  }

  nlohmann::json to_json() const {
    return {{"variant", std::string(to_string(variant))}, {"h_max", h_max}, {"gamma_grid", gamma_grid}};
  }
};

template <Environment E>
void add_query(QueryBatch& batch, const E& env, const typename E::State& s, const typename E::Goal& g,
               std::size_t k, double cond) {
  std::size_t si = 0, gi = 0;
  if constexpr (Enumerable<E>) {
    si = env.state_index(s);
    gi = env.goal_index(g);
  }
  auto f = batch.add_uninitialized(si, gi, k, cond);
  env.encode(s, g, f);
}

/// Input description stored alongside checkpoints.
template <Environment E>
nlohmann::json encoding_json(const E& env, const Conditioning& cond) {
  return {{"env", env.spec().name},
          {"spec_hash", spec_hash(env.spec())},
          {"features", env.feature_size()},
          {"conditioning", cond.to_json()}};
}

/// Fresh approximator sized for an environment and conditioning layout.
template <Environment E>
std::unique_ptr<AccessFn> make_approximator(const E& env, const Conditioning& cond, bool tabular,
                                            const std::vector<std::size_t>& hidden, Rng& rng) {
  if (tabular) {
    if constexpr (Enumerable<E>) {
      return std::make_unique<TabularFn>(env.state_count(), env.action_count(), env.goal_count(), cond.depth());
    } else {
      throw std::invalid_argument("tabular approximator needs an enumerable environment");
    }
  }
  std::vector<std::size_t> sizes{env.feature_size() + 1};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(env.action_count());
  auto net = std::make_unique<MlpFn>(sizes);
  net->initialize(rng);
  return net;
}

/// Read path of a learned accessibility function. Entries fixed by the
/// recursion's base cases are returned exactly; with `clip` set, entries
/// whose goal lies beyond the metric reach of the horizon read as 0.
template <Environment E>
class LearnedValues {
 public:
  using State = typename E::State;
  using Goal = typename E::Goal;

  LearnedValues(const E& env, const AccessFn& fn, Conditioning cond, bool clip = false)
      : env_(&env), fn_(&fn), cond_(std::move(cond)), clip_(clip) {
    if (fn.heads() != env.action_count()) throw std::invalid_argument("LearnedValues: head count mismatch");
  }

  const Conditioning& conditioning() const { return cond_; }
  std::size_t actions() const { return env_->action_count(); }
  std::size_t depth() const { return cond_.depth(); }

  /// Value for index k fixed without consulting the approximator, if any.
  std::optional<double> fixed(const State& s, const Goal& g, std::size_t k) const {
    const bool hit = env_->goal_check(s, g);
    switch (cond_.variant) {
      case Variant::c:
        if (hit) return 1.0;
        if (env_->is_terminal(s) || k == 0) return 0.0;
        if (clip_ && env_->distance(s, g) > static_cast<double>(k)) return 0.0;
        return std::nullopt;
      case Variant::a:
        if (k == 0) return hit ? 1.0 : 0.0;
        if (env_->is_terminal(s)) return 0.0;
        if (clip_ && env_->distance(s, g) > static_cast<double>(k)) return 0.0;
        return std::nullopt;
      case Variant::d:
        if (env_->is_terminal(s)) return 0.0;
        return std::nullopt;
      case Variant::q:
        if (hit) return 1.0;
        if (env_->is_terminal(s)) return 0.0;
        return std::nullopt;
    }
    return std::nullopt;
  }

  /// Per-action values at conditioning indices ks; column j holds ks[j].
  Eigen::MatrixXd values(const State& s, const Goal& g, std::span<const std::size_t> ks) const {
    const auto na = static_cast<Eigen::Index>(actions());
    Eigen::MatrixXd out(na, static_cast<Eigen::Index>(ks.size()));
    QueryBatch batch(env_->feature_size());
    std::vector<Eigen::Index> column;
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (ks[j] >= depth()) throw std::out_of_range("LearnedValues: conditioning index beyond the table");
      if (auto v = fixed(s, g, ks[j])) {
        out.col(static_cast<Eigen::Index>(j)).setConstant(*v);
      } else {
        add_query(batch, *env_, s, g, ks[j], cond_.value(ks[j]));
        column.push_back(static_cast<Eigen::Index>(j));
      }
    }
    if (batch.size() > 0) {
      Eigen::MatrixXd p;
      fn_->probabilities(batch, p);
      for (std::size_t i = 0; i < column.size(); ++i) out.col(column[i]) = p.col(static_cast<Eigen::Index>(i));
    }
    return out;
  }

  std::vector<double> operator()(const State& s, const Goal& g, std::size_t k) const {
    const std::size_t ks[1] = {k};
    const Eigen::MatrixXd v = values(s, g, ks);
    return {v.data(), v.data() + v.size()};
  }

 private:
  const E* env_;
  const AccessFn* fn_;
  Conditioning cond_;
  bool clip_;
};

/// The same read interface over an exact table.
template <Enumerable E>
class OracleValues {
 public:
  using State = typename E::State;
  using Goal = typename E::Goal;

  OracleValues(const E& env, const ExactTable& table) : env_(&env), table_(&table) {}

  std::size_t actions() const { return table_->actions(); }
  std::size_t depth() const { return table_->depth(); }
  const ExactTable& table() const { return *table_; }

  Eigen::MatrixXd values(const State& s, const Goal& g, std::span<const std::size_t> ks) const {
    const std::size_t si = env_->state_index(s), gi = env_->goal_index(g);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(actions()), static_cast<Eigen::Index>(ks.size()));
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (ks[j] >= depth()) throw std::out_of_range("OracleValues: conditioning index beyond the table");
      const auto v = table_->actions_at(si, gi, ks[j]);
      for (std::size_t a = 0; a < v.size(); ++a)
        out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) = v[a];
    }
    return out;
  }

  std::vector<double> operator()(const State& s, const Goal& g, std::size_t k) const {
    const auto v = table_->actions_at(env_->state_index(s), env_->goal_index(g), k);
    return {v.begin(), v.end()};
  }

 private:
  const E* env_;
  const ExactTable* table_;
};

// clang-format off
template <class V>
concept ValueSource = requires(const V& v, const typename V::State& s, const typename V::Goal& g, std::size_t k,
                               std::span<const std::size_t> ks) {
  { v.actions() } -> std::convertible_to<std::size_t>;
  { v.depth() } -> std::convertible_to<std::size_t>;
  { v.values(s, g, ks) } -> std::convertible_to<Eigen::MatrixXd>;
  { v(s, g, k) } -> std::convertible_to<std::vector<double>>;
};
// clang-format on

}  // namespace cae
