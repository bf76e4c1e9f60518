#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cae/env.hpp"

namespace cae {

struct DubinsState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // degrees, [0, 360)
  auto operator<=>(const DubinsState&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  auto operator<=>(const Point&) const = default;
};

inline void to_json(nlohmann::json& j, const DubinsState& s) { j = nlohmann::json::array({s.x, s.y, s.heading}); }
inline void from_json(const nlohmann::json& j, DubinsState& s) {
  s.x = j.at(0).get<double>();
  s.y = j.at(1).get<double>();
  s.heading = j.at(2).get<double>();
}
inline void to_json(nlohmann::json& j, const Point& p) { j = nlohmann::json::array({p.x, p.y}); }
inline void from_json(const nlohmann::json& j, Point& p) {
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
}

/// Wall segment.
struct Segment {
  Point a;
  Point b;
};

inline double normalize_heading(double deg) {
  double h = std::fmod(deg, 360.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h = 0.0;
  return h;
}

/// Proper or touching intersection of segments p1p2 and q1q2.
inline bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  auto orient = [](Point a, Point b, Point c) {
    const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return (v > 1e-12) - (v < -1e-12);
  };
  auto on_segment = [](Point a, Point b, Point c) {
    return std::min(a.x, b.x) - 1e-12 <= c.x && c.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= c.y && c.y <= std::max(a.y, b.y) + 1e-12;
  };
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

struct DubinsLayout {
  std::string name = "dubins";
  double size = 15.0;
  double turn_deg = 10.0;
  double goal_radius = 0.5;
  std::vector<Segment> walls;
  DubinsState start{1.0, 14.0, 0.0};
  int max_episode_length = 100;
};

/// Dubins' car on [0, size]^2. Seven actions: index = 3 * direction + turn
/// with turn in {left, straight, right} and direction in {forward,
/// reverse}; index 6 is the no-op. Heading updates before the unit move;
/// a move that would leave the arena or cross a wall keeps the position.
class DubinsCar {
 public:
  using State = DubinsState;
  using Goal = Point;

  static constexpr std::size_t kNoOp = 6;

  explicit DubinsCar(DubinsLayout layout) : layout_(std::move(layout)) {
    if (layout_.max_episode_length < 1) throw std::invalid_argument("dubins: max_episode_length < 1");
    if (!(layout_.turn_deg > 0.0)) throw std::invalid_argument("dubins: turn angle must be positive");
    layout_.start.heading = normalize_heading(layout_.start.heading);
  }

  const DubinsLayout& layout() const { return layout_; }
  const std::string& name() const { return layout_.name; }
  std::size_t action_count() const { return 7; }
  int max_episode_length() const { return layout_.max_episode_length; }
  bool stochastic() const { return false; }

  static double turn_sign(ActionId a) { return a.index == kNoOp ? 0.0 : 1.0 - static_cast<double>(a.index % 3); }
  static double direction(ActionId a) { return a.index == kNoOp ? 0.0 : (a.index < 3 ? 1.0 : -1.0); }

  bool goal_check(const State& s, const Goal& g) const {
    return std::max(std::abs(s.x - g.x), std::abs(s.y - g.y)) <= layout_.goal_radius;
  }
  double distance(const State& s, const Goal& g) const {
    return std::max(std::abs(s.x - g.x), std::abs(s.y - g.y));
  }
  Goal achieved_goal(const State& s) const { return {s.x, s.y}; }
  bool is_terminal(const State&) const { return false; }

  bool blocked(Point from, Point to) const {
    if (to.x < 0.0 || to.y < 0.0 || to.x > layout_.size || to.y > layout_.size) return true;
    return std::any_of(layout_.walls.begin(), layout_.walls.end(),
                       [&](const Segment& w) { return segments_intersect(from, to, w.a, w.b); });
  }

  State apply(const State& s, ActionId a) const {
    if (a.index >= action_count()) throw std::out_of_range("dubins: action index out of range");
    if (a.index == kNoOp) return s;
    State next = s;
    next.heading = normalize_heading(s.heading + turn_sign(a) * layout_.turn_deg);
    const double rad = next.heading * std::numbers::pi / 180.0;
    const Point to{s.x + direction(a) * std::cos(rad), s.y + direction(a) * std::sin(rad)};
    if (!blocked({s.x, s.y}, to)) {
      next.x = to.x;
      next.y = to.y;
    }
    return next;
  }

  StepResult<State> step(const State& s, ActionId a, Rng&) const { return {apply(s, a), false}; }

  State initial_state(Rng&, Phase) const { return layout_.start; }

  Goal sample_goal(Rng& rng) const { return {rng.uniform(0.0, layout_.size), rng.uniform(0.0, layout_.size)}; }

  /// Uniform over the L-infinity ball of the given radius, clipped to the arena.
  Goal sample_goal_within(const State& s, double radius, Rng& rng) const {
    const double x0 = std::max(0.0, s.x - radius), x1 = std::min(layout_.size, s.x + radius);
    const double y0 = std::max(0.0, s.y - radius), y1 = std::min(layout_.size, s.y + radius);
    return {rng.uniform(x0, x1), rng.uniform(y0, y1)};
  }

  std::size_t feature_size() const { return 6; }

  void encode(const State& s, const Goal& g, std::span<double> out) const {
    const double rad = s.heading * std::numbers::pi / 180.0;
    out[0] = s.x / layout_.size;
    out[1] = s.y / layout_.size;
    out[2] = std::cos(rad);
    out[3] = std::sin(rad);
    out[4] = g.x / layout_.size;
    out[5] = g.y / layout_.size;
  }

  EnvSpec spec() const {
    EnvSpec spec;
    spec.name = layout_.name;
    spec.action_count = action_count();
    spec.state_bounds = {{0.0, 0.0, 0.0}, {layout_.size, layout_.size, 360.0}};
    spec.goal_bounds = {{0.0, 0.0}, {layout_.size, layout_.size}};
    spec.max_episode_length = layout_.max_episode_length;
    spec.stochastic = false;
    nlohmann::json walls = nlohmann::json::array();
    for (const auto& w : layout_.walls) walls.push_back({w.a.x, w.a.y, w.b.x, w.b.y});
    spec.layout = {{"kind", "dubins"},
                   {"size", layout_.size},
                   {"turn_deg", layout_.turn_deg},
                   {"goal_radius", layout_.goal_radius},
                   {"walls", walls},
                   {"start", {layout_.start.x, layout_.start.y, layout_.start.heading}}};
    return spec;
  }

 private:
  DubinsLayout layout_;
};

/// Enumerable approximation of a Dubins' car: positions snapped to a
/// 0.5-unit lattice and headings to multiples of the turn angle. Only used
/// for qualitative cross-checks; the snapping distorts short moves.
class DubinsLattice {
 public:
  using State = DubinsState;
  using Goal = Point;

  explicit DubinsLattice(DubinsCar car, double spacing = 0.5) : car_(std::move(car)), spacing_(spacing) {
    side_ = static_cast<std::size_t>(std::lround(car_.layout().size / spacing_)) + 1;
    headings_ = static_cast<std::size_t>(std::lround(360.0 / car_.layout().turn_deg));
  }

  const DubinsCar& car() const { return car_; }
  std::size_t action_count() const { return car_.action_count(); }
  int max_episode_length() const { return car_.max_episode_length(); }
  bool stochastic() const { return false; }

  State snap(const State& s) const {
    const double hs = car_.layout().turn_deg;
    return {std::clamp(std::round(s.x / spacing_), 0.0, side_ - 1.0) * spacing_,
            std::clamp(std::round(s.y / spacing_), 0.0, side_ - 1.0) * spacing_,
            normalize_heading(std::round(s.heading / hs) * hs)};
  }

  bool goal_check(const State& s, const Goal& g) const { return car_.goal_check(s, g); }
  double distance(const State& s, const Goal& g) const { return car_.distance(s, g); }
  Goal achieved_goal(const State& s) const { return {s.x, s.y}; }
  bool is_terminal(const State&) const { return false; }

  std::size_t state_count() const { return side_ * side_ * headings_; }
  std::size_t goal_count() const { return side_ * side_; }
  std::size_t state_index(const State& s) const {
    const State q = snap(s);
    const auto ix = static_cast<std::size_t>(std::lround(q.x / spacing_));
    const auto iy = static_cast<std::size_t>(std::lround(q.y / spacing_));
    const auto ih = static_cast<std::size_t>(std::lround(q.heading / car_.layout().turn_deg)) % headings_;
    return (iy * side_ + ix) * headings_ + ih;
  }
  std::size_t goal_index(const Goal& g) const {
    const auto ix = static_cast<std::size_t>(std::clamp(std::round(g.x / spacing_), 0.0, side_ - 1.0));
    const auto iy = static_cast<std::size_t>(std::clamp(std::round(g.y / spacing_), 0.0, side_ - 1.0));
    return iy * side_ + ix;
  }
  State state_at(std::size_t i) const {
    const std::size_t ih = i % headings_, cell = i / headings_;
    return {static_cast<double>(cell % side_) * spacing_, static_cast<double>(cell / side_) * spacing_,
            static_cast<double>(ih) * car_.layout().turn_deg};
  }
  Goal goal_at(std::size_t i) const {
    return {static_cast<double>(i % side_) * spacing_, static_cast<double>(i / side_) * spacing_};
  }

  std::vector<Outcome<State>> transitions(const State& s, ActionId a) const {
    return {{snap(car_.apply(snap(s), a)), 1.0}};
  }
  StepResult<State> step(const State& s, ActionId a, Rng&) const { return {transitions(s, a)[0].next, false}; }
  State initial_state(Rng& rng, Phase p) const { return snap(car_.initial_state(rng, p)); }
  Goal sample_goal(Rng& rng) const { return goal_at(rng.below(goal_count())); }
  Goal sample_goal_within(const State& s, double radius, Rng& rng) const {
    const Goal g = car_.sample_goal_within(s, radius, rng);
    return goal_at(goal_index(g));
  }
  std::size_t feature_size() const { return car_.feature_size(); }
  void encode(const State& s, const Goal& g, std::span<double> out) const { car_.encode(s, g, out); }
  EnvSpec spec() const {
    EnvSpec spec = car_.spec();
    spec.name += "-lattice";
    spec.state_count = state_count();
    spec.layout["lattice_spacing"] = spacing_;
    return spec;
  }

 private:
  DubinsCar car_;
  double spacing_;
  std::size_t side_ = 0;
  std::size_t headings_ = 0;
};

/// Default arena: two walls forming a partial corridor; start in the
/// upper-left corner facing east.
inline DubinsLayout dubins_layout() {
  DubinsLayout l;
  l.name = "dubins";
  l.walls = {{{5.0, 15.0}, {5.0, 6.0}}, {{10.0, 0.0}, {10.0, 9.0}}};
  return l;
}

/// Reduced-budget arena used by the compare command.
inline DubinsLayout dubins_small_layout() {
  DubinsLayout l = dubins_layout();
  l.name = "dubins-small";
  l.max_episode_length = 100;
  return l;
}

/// Wall-free arena with 5 degree turns for reachability heatmaps.
inline DubinsLayout dubins_open5_layout() {
  DubinsLayout l;
  l.name = "dubins-open5";
  l.turn_deg = 5.0;
  l.start = {7.5, 7.5, 0.0};
  return l;
}

}  // namespace cae
