#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdlib>
#include <string>
#include <vector>

#include "cae/env.hpp"

namespace cae {

struct Cell {
  int x = 0;
  int y = 0;
  constexpr auto operator<=>(const Cell&) const = default;
};

inline nlohmann::json to_json(const Cell& c) { return nlohmann::json::array({c.x, c.y}); }
inline void to_json(nlohmann::json& j, const Cell& c) { j = nlohmann::json::array({c.x, c.y}); }
inline void from_json(const nlohmann::json& j, Cell& c) {
  c.x = j.at(0).get<int>();
  c.y = j.at(1).get<int>();
}

inline int l1_distance(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

enum class Boundary { clamp, reflect };
enum class MoveSet { cardinal, line };
enum class StartMode { uniform, point };

/// Everything needed to instantiate a grid environment. Cells listed in
/// `walls` are not states; cells in `holes` are terminal states.
struct GridLayout {
  std::string name = "grid";
  int width = 1;
  int height = 1;
  std::vector<Cell> holes;
  std::vector<Cell> walls;
  double slip = 0.0;  // probability of each perpendicular slip
  Boundary boundary = Boundary::clamp;
  MoveSet moves = MoveSet::cardinal;
  int max_episode_length = 50;
  StartMode train_start = StartMode::point;
  Cell start;
};

/// Finite grid world covering frozen lake, mini maze, line-world,
/// checkerboard and the open deterministic grid.
///
/// Cardinal action order is up (+y), right (+x), down (-y), left (-x);
/// the line move set has left (-1) and right (+1).
class GridWorld {
 public:
  using State = Cell;
  using Goal = Cell;

  explicit GridWorld(GridLayout layout) : layout_(std::move(layout)) {
    if (layout_.width < 1 || layout_.height < 1) throw std::invalid_argument("grid: empty grid");
    if (layout_.max_episode_length < 1) throw std::invalid_argument("grid: max_episode_length < 1");
    if (layout_.slip < 0.0 || 2.0 * layout_.slip > 1.0) throw std::invalid_argument("grid: slip out of range");
    if (layout_.moves == MoveSet::line && layout_.height != 1)
      throw std::invalid_argument("grid: line move set requires height 1");
    if (layout_.moves == MoveSet::line && layout_.slip != 0.0)
      throw std::invalid_argument("grid: line move set is deterministic");
    const auto cells = static_cast<std::size_t>(layout_.width * layout_.height);
    kind_.assign(cells, Kind::free);
    for (Cell w : layout_.walls) kind_.at(flat(checked(w))) = Kind::wall;
    for (Cell h : layout_.holes) {
      if (kind_.at(flat(checked(h))) == Kind::wall) throw std::invalid_argument("grid: hole on a wall");
      kind_[flat(h)] = Kind::hole;
    }
    index_.assign(cells, npos);
    for (int y = 0; y < layout_.height; ++y)
      for (int x = 0; x < layout_.width; ++x)
        if (kind_[flat({x, y})] != Kind::wall) {
          index_[flat({x, y})] = states_.size();
          states_.push_back({x, y});
        }
    if (!valid(layout_.start) || is_terminal(layout_.start))
      throw std::invalid_argument("grid: start must be a free non-terminal cell");
    for (Cell c : states_)
      if (kind_[flat(c)] == Kind::free) start_pool_.push_back(c);
    build_distance_order();
  }

  const GridLayout& layout() const { return layout_; }
  const std::string& name() const { return layout_.name; }

  std::size_t action_count() const { return layout_.moves == MoveSet::line ? 2 : 4; }
  int max_episode_length() const { return layout_.max_episode_length; }
  bool stochastic() const { return layout_.slip > 0.0; }

  bool valid(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < layout_.width && c.y < layout_.height && kind_[flat(c)] != Kind::wall;
  }
  bool is_hole(Cell c) const { return valid(c) && kind_[flat(c)] == Kind::hole; }
  bool is_terminal(const State& s) const { return is_hole(s); }

  bool goal_check(const State& s, const Goal& g) const { return s == g; }
  Goal achieved_goal(const State& s) const { return s; }
  double distance(const State& s, const Goal& g) const { return l1_distance(s, g); }

  std::size_t state_count() const { return states_.size(); }
  std::size_t goal_count() const { return states_.size(); }
  std::size_t state_index(const State& s) const {
    if (!valid(s)) throw std::out_of_range("grid: cell outside the state set");
    return index_[flat(s)];
  }
  std::size_t goal_index(const Goal& g) const { return state_index(g); }
  State state_at(std::size_t i) const { return states_.at(i); }
  Goal goal_at(std::size_t i) const { return states_.at(i); }
  const std::vector<Cell>& cells() const { return states_; }

  /// Outcome distribution of taking `a` in `s`; outcomes that land on the
  /// same cell are merged, in order intended, first slip, second slip.
  std::vector<Outcome<State>> transitions(const State& s, ActionId a) const {
    check_action(a);
    std::vector<Outcome<State>> out;
    if (is_terminal(s)) {
      out.push_back({s, 1.0});
      return out;
    }
    auto add = [&out](Cell c, double p) {
      if (p <= 0.0) return;
      for (auto& o : out)
        if (o.next == c) {
          o.probability += p;
          return;
        }
      out.push_back({c, p});
    };
    if (layout_.moves == MoveSet::line) {
      add(move(s, a.index == 0 ? kLeft : kRight), 1.0);
      return out;
    }
    const int dir = static_cast<int>(a.index);
    add(move(s, dir), 1.0 - 2.0 * layout_.slip);
    add(move(s, (dir + 1) % 4), layout_.slip);
    add(move(s, (dir + 3) % 4), layout_.slip);
    return out;
  }

  StepResult<State> step(const State& s, ActionId a, Rng& rng) const {
    if (is_terminal(s)) throw ContractViolation("grid: step from a terminal state");
    const auto outcomes = transitions(s, a);
    std::size_t pick = 0;
    if (outcomes.size() > 1) {
      std::array<double, 3> w{};
      for (std::size_t i = 0; i < outcomes.size(); ++i) w[i] = outcomes[i].probability;
      pick = rng.categorical(std::span<const double>(w.data(), outcomes.size()));
    }
    const Cell next = outcomes[pick].next;
    return {next, is_terminal(next)};
  }

  State initial_state(Rng& rng, Phase phase) const {
    if (phase == Phase::test || layout_.train_start == StartMode::point) return layout_.start;
    return start_pool_[rng.below(start_pool_.size())];
  }

  Goal sample_goal(Rng& rng) const { return states_[rng.below(states_.size())]; }

  /// Uniform over goals g with distance(s, g) <= radius. Falls back to the
  /// state's own cell when nothing else qualifies (radius < 0).
  Goal sample_goal_within(const State& s, double radius, Rng& rng) const {
    const auto& order = by_distance_[state_index(s)];
    const auto limit = std::upper_bound(order.begin(), order.end(), radius,
                                        [](double r, const Ranked& e) { return r < e.distance; });
    const auto n = static_cast<std::size_t>(limit - order.begin());
    if (n == 0) return s;
    return states_[order[rng.below(n)].goal];
  }

  std::size_t goals_within(const State& s, double radius) const {
    const auto& order = by_distance_[state_index(s)];
    return static_cast<std::size_t>(std::upper_bound(order.begin(), order.end(), radius,
                                                     [](double r, const Ranked& e) { return r < e.distance; }) -
                                    order.begin());
  }

  std::size_t feature_size() const { return 2 * cell_count(); }

  /// One-hot state followed by one-hot goal.
  void encode(const State& s, const Goal& g, std::span<double> out) const {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(feature_size()), 0.0);
    out[flat(s)] = 1.0;
    out[cell_count() + flat(g)] = 1.0;
  }

  EnvSpec spec() const {
    EnvSpec spec;
    spec.name = layout_.name;
    spec.action_count = action_count();
    spec.state_bounds = {{0.0, 0.0}, {layout_.width - 1.0, layout_.height - 1.0}};
    spec.goal_bounds = spec.state_bounds;
    spec.max_episode_length = layout_.max_episode_length;
    spec.stochastic = stochastic();
    spec.state_count = state_count();
    nlohmann::json holes = nlohmann::json::array(), walls = nlohmann::json::array();
    for (Cell c : layout_.holes) holes.push_back(to_json(c));
    for (Cell c : layout_.walls) walls.push_back(to_json(c));
    spec.layout = {{"kind", "grid"},
                   {"width", layout_.width},
                   {"height", layout_.height},
                   {"holes", holes},
                   {"walls", walls},
                   {"slip", layout_.slip},
                   {"boundary", layout_.boundary == Boundary::clamp ? "clamp" : "reflect"},
                   {"moves", layout_.moves == MoveSet::cardinal ? "cardinal" : "line"},
                   {"train_start", layout_.train_start == StartMode::uniform ? "uniform" : "point"},
                   {"start", to_json(layout_.start)}};
    return spec;
  }

  /// Arrow glyph direction for rendering, (dx, dy).
  std::array<int, 2> action_delta(ActionId a) const {
    if (layout_.moves == MoveSet::line) return a.index == 0 ? std::array{-1, 0} : std::array{1, 0};
    return {kDx[a.index], kDy[a.index]};
  }

 private:
  enum class Kind : unsigned char { free, hole, wall };
  struct Ranked {
    double distance;
    std::size_t goal;
  };

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  static constexpr int kDx[4] = {0, 1, 0, -1};
  static constexpr int kDy[4] = {1, 0, -1, 0};
  static constexpr int kRight = 1;
  static constexpr int kLeft = 3;

  std::size_t cell_count() const { return static_cast<std::size_t>(layout_.width * layout_.height); }
  std::size_t flat(Cell c) const { return static_cast<std::size_t>(c.y * layout_.width + c.x); }

  Cell checked(Cell c) const {
    if (c.x < 0 || c.y < 0 || c.x >= layout_.width || c.y >= layout_.height)
      throw std::invalid_argument("grid: layout cell out of bounds");
    return c;
  }

  void check_action(ActionId a) const {
    if (a.index >= action_count()) throw std::out_of_range("grid: action index out of range");
  }

  bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < layout_.width && c.y < layout_.height; }

  Cell move(Cell from, int dir) const {
    Cell to{from.x + kDx[dir], from.y + kDy[dir]};
    if (!inside(to)) {
      if (layout_.boundary == Boundary::clamp) return from;
      to = {from.x - kDx[dir], from.y - kDy[dir]};
      if (!inside(to)) return from;
    }
    return kind_[flat(to)] == Kind::wall ? from : to;
  }

  void build_distance_order() {
    by_distance_.resize(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
      auto& order = by_distance_[i];
      for (std::size_t j = 0; j < states_.size(); ++j)
        order.push_back({static_cast<double>(l1_distance(states_[i], states_[j])), j});
      std::stable_sort(order.begin(), order.end(),
                       [](const Ranked& a, const Ranked& b) { return a.distance < b.distance; });
    }
  }

  GridLayout layout_;
  std::vector<Kind> kind_;
  std::vector<std::size_t> index_;
  std::vector<Cell> states_;
  std::vector<Cell> start_pool_;
  std::vector<std::vector<Ranked>> by_distance_;
};

// Stock layouts. Matching key=value files live in configs/.

/// 5 wide, 7 tall; two 3x1 holes flank the direct upward corridor x=1.
inline GridLayout frozen_lake_layout() {
  GridLayout l;
  l.name = "frozen-lake";
  l.width = 5;
  l.height = 7;
  l.holes = {{0, 2}, {0, 3}, {0, 4}, {2, 2}, {2, 3}, {2, 4}};
  l.slip = 0.1;
  l.max_episode_length = 50;
  l.train_start = StartMode::uniform;
  l.start = {1, 0};
  return l;
}

/// Goal used for the speed/reliability demonstration: six cells straight
/// up from the test start.
inline constexpr Cell kFrozenLakeDemoGoal{1, 6};

inline GridLayout line_world_layout() {
  GridLayout l;
  l.name = "line-world";
  l.width = 3;
  l.height = 1;
  l.moves = MoveSet::line;
  l.max_episode_length = 10;
  l.start = {0, 0};
  return l;
}

/// Reflecting boundary: every move changes the cell colour.
inline GridLayout checkerboard_layout(int n = 5) {
  GridLayout l;
  l.name = "checkerboard";
  l.width = n;
  l.height = n;
  l.boundary = Boundary::reflect;
  l.max_episode_length = 50;
  l.start = {0, 0};
  return l;
}

inline GridLayout open_grid_layout(int width = 7, int height = 7) {
  GridLayout l;
  l.name = "open-grid";
  l.width = width;
  l.height = height;
  l.max_episode_length = 50;
  l.train_start = StartMode::uniform;
  l.start = {1, 1};
  return l;
}

/// 10x10 serpentine maze: three wall rows with alternating gaps.
inline GridLayout mini_maze_layout() {
  GridLayout l;
  l.name = "mini-maze";
  l.width = 10;
  l.height = 10;
  for (int x = 0; x <= 7; ++x) l.walls.push_back({x, 2});
  for (int x = 2; x <= 9; ++x) l.walls.push_back({x, 5});
  for (int x = 0; x <= 7; ++x) l.walls.push_back({x, 8});
  l.max_episode_length = 200;
  l.start = {0, 0};
  return l;
}

}  // namespace cae
