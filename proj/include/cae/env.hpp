#pragma once

#include <compare>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cae/rng.hpp"

namespace cae {

/// Index into an environment's finite action list.
struct ActionId {
  std::uint32_t index = 0;

  constexpr ActionId() = default;
  constexpr explicit ActionId(std::size_t i) : index(static_cast<std::uint32_t>(i)) {}
  constexpr auto operator<=>(const ActionId&) const = default;
};

/// Thrown when a caller breaks an operation's precondition (stepping a
/// terminal state, querying min_horizon on a stochastic table, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Start-state distribution selector.
enum class Phase { train, test };

template <class S>
struct StepResult {
  S next;
  bool terminal = false;
};

template <class S>
struct Outcome {
  S next;
  double probability = 0.0;
};

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Serializable description of an environment instance.
struct EnvSpec {
  std::string name;
  std::size_t action_count = 0;
  Bounds state_bounds;
  Bounds goal_bounds;
  int max_episode_length = 1;
  bool stochastic = false;
  std::optional<std::size_t> state_count;  // set for enumerable environments
  nlohmann::json layout;                   // holes, walls, start, ...
};

inline nlohmann::json to_json(const EnvSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["action_count"] = spec.action_count;
  j["state_bounds"] = {{"lower", spec.state_bounds.lower}, {"upper", spec.state_bounds.upper}};
  j["goal_bounds"] = {{"lower", spec.goal_bounds.lower}, {"upper", spec.goal_bounds.upper}};
  j["max_episode_length"] = spec.max_episode_length;
  j["stochastic"] = spec.stochastic;
  j["state_count"] = spec.state_count ? nlohmann::json(*spec.state_count) : nlohmann::json(nullptr);
  j["layout"] = spec.layout;
  return j;
}

/// 64-bit FNV-1a, used for reproducibility stamps.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline std::string spec_hash(const EnvSpec& spec) { return hex64(fnv1a(to_json(spec).dump())); }

// clang-format off
template <class E>
concept Environment = requires(const E& env, const typename E::State& s, const typename E::Goal& g,
                               ActionId a, Rng& rng, std::span<double> out) {
  typename E::State;
  typename E::Goal;
  { env.action_count() } -> std::convertible_to<std::size_t>;
  { env.goal_check(s, g) } -> std::same_as<bool>;
  { env.step(s, a, rng) } -> std::same_as<StepResult<typename E::State>>;
  { env.is_terminal(s) } -> std::same_as<bool>;
  { env.initial_state(rng, Phase::train) } -> std::same_as<typename E::State>;
  { env.sample_goal(rng) } -> std::same_as<typename E::Goal>;
  { env.sample_goal_within(s, 1.0, rng) } -> std::same_as<typename E::Goal>;
  { env.achieved_goal(s) } -> std::same_as<typename E::Goal>;
  { env.distance(s, g) } -> std::convertible_to<double>;
  { env.feature_size() } -> std::convertible_to<std::size_t>;
  env.encode(s, g, out);
  { env.spec() } -> std::convertible_to<EnvSpec>;
  { env.max_episode_length() } -> std::convertible_to<int>;
};

/// Environments with a finite state and goal set and an explicit kernel.
template <class E>
concept Enumerable = Environment<E> && requires(const E& env, const typename E::State& s,
                                                const typename E::Goal& g, ActionId a, std::size_t i) {
  { env.state_count() } -> std::convertible_to<std::size_t>;
  { env.goal_count() } -> std::convertible_to<std::size_t>;
  { env.state_index(s) } -> std::convertible_to<std::size_t>;
  { env.goal_index(g) } -> std::convertible_to<std::size_t>;
  { env.state_at(i) } -> std::same_as<typename E::State>;
  { env.goal_at(i) } -> std::same_as<typename E::Goal>;
  { env.transitions(s, a) } -> std::same_as<std::vector<Outcome<typename E::State>>>;
};
// clang-format on

}  // namespace cae
