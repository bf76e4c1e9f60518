#include <gtest/gtest.h>

#include "cae/finite_mdp.hpp"
#include "cae/grid_world.hpp"
#include "cae/oracle.hpp"

using namespace cae;

namespace {

// line-world indices coincide with positions; action 0 = -1, action 1 = +1
constexpr std::size_t kMinus = 0, kPlus = 1;

FiniteMdp line_mdp() { return make_finite_mdp(GridWorld(line_world_layout())); }

/// Exhaustive optimum over all action sequences of length <= h on a
/// deterministic MDP: 1 if some sequence starting with `a` hits g.
double brute_force_c(const FiniteMdp& m, std::size_t s, std::size_t a, std::size_t g, int h) {
  if (m.goal_hit(s, g)) return 1.0;
  if (h == 0 || m.is_terminal(s)) return 0.0;
  const auto next = m.row(s, a)[0].next;
  for (std::size_t b = 0; b < m.actions; ++b)
    if (brute_force_c(m, next, b, g, h - 1) == 1.0) return 1.0;
  return 0.0;
}

/// Perverse policy: at (s=1, g=2, h=2) step left, everywhere else right.
PolicySpec perverse_policy(const FiniteMdp& m, int h_max) {
  PolicySpec pi(m.states, m.goals, h_max, m.actions);
  for (std::size_t g = 0; g < m.goals; ++g)
    for (int h = 0; h <= h_max; ++h)
      for (std::size_t s = 0; s < m.states; ++s)
        pi.set_action(s, g, h, ActionId{(s == 1 && g == 2 && h == 2) ? kMinus : kPlus});
  return pi;
}

}  // namespace

TEST(CStar, LineWorldExamples) {
  const auto m = line_mdp();
  const auto c = compute_c_star(m, 5);
  EXPECT_EQ(c(0, kPlus, 2, 2), 1.0);
  EXPECT_EQ(c(0, kMinus, 2, 2), 0.0);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(c(s, a, g, 0), s == g ? 1.0 : 0.0);
}

TEST(CStar, MatchesBruteForceOnDeterministicGrids) {
  for (const auto& layout : {line_world_layout(), checkerboard_layout(4), open_grid_layout(4, 3)}) {
    const auto m = make_finite_mdp(GridWorld(layout));
    const int h_max = 6;
    const auto c = compute_c_star(m, h_max);
    for (std::size_t g = 0; g < m.goals; ++g)
      for (int h = 0; h <= h_max; ++h)
        for (std::size_t s = 0; s < m.states; ++s)
          for (std::size_t a = 0; a < m.actions; ++a)
            ASSERT_EQ(c(s, a, g, h), brute_force_c(m, s, a, g, h)) << layout.name;
  }
}

TEST(CStar, RejectsBadInput) {
  auto m = line_mdp();
  EXPECT_THROW(compute_c_star(m, -1), std::invalid_argument);
  m.arcs[0].probability = 0.5;
  EXPECT_THROW(compute_c_star(m, 3), std::invalid_argument);
}

TEST(CStar, HolesAreZero) {
  const GridWorld lake(frozen_lake_layout());
  const auto m = make_finite_mdp(lake);
  const auto c = compute_c_star(m, 20);
  const auto hole = lake.state_index({0, 3});
  const auto g = lake.goal_index({1, 6});
  for (int h = 0; h <= 20; ++h)
    for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(c(hole, a, g, h), 0.0);
}

TEST(CStar, MonotoneInHorizon) {
  for (const auto& [layout, h_max] :
       {std::pair{frozen_lake_layout(), 50}, {line_world_layout(), 10}, {checkerboard_layout(), 20}}) {
    const auto c = compute_c_star(make_finite_mdp(GridWorld(layout)), h_max);
    EXPECT_LE(max_monotonicity_violation(c), 1e-12) << layout.name;
    for (double v : c.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(CStar, DeterministicEntriesAreBinary) {
  const auto c = compute_c_star(make_finite_mdp(GridWorld(mini_maze_layout())), 30);
  for (double v : c.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(CStar, ParallelGoalSlicesMatchSerial) {
  const auto m = make_finite_mdp(GridWorld(frozen_lake_layout()));
  const auto a = compute_c_star(m, 15);
  const auto b = compute_c_star(m, 15, {.threads = 3});
  ASSERT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(CPi, PerverseCounterexample) {
  const auto m = line_mdp();
  const auto c = compute_c_pi(m, perverse_policy(m, 5), 5);
  EXPECT_EQ(c(0, kPlus, 2, 2), 1.0);
  EXPECT_EQ(c(0, kPlus, 2, 3), 0.0);
}

TEST(CPi, UniformPolicyHalf) {
  const auto m = line_mdp();
  const auto c = compute_c_pi(m, uniform_policy(m, 5), 5);
  EXPECT_DOUBLE_EQ(c(0, kPlus, 2, 2), 0.5);
}

TEST(CPi, GreedyFromCStarReproducesIt) {
  for (const auto& layout : {frozen_lake_layout(), line_world_layout(), checkerboard_layout()}) {
    const auto m = make_finite_mdp(GridWorld(layout));
    const auto c = compute_c_star(m, 25);
    const auto cp = compute_c_pi(m, greedy_policy(c), 25);
    for (std::size_t i = 0; i < c.values().size(); ++i) ASSERT_NEAR(cp.values()[i], c.values()[i], 1e-12);
  }
}

TEST(CPi, DominatedByCStar) {
  const auto m = make_finite_mdp(GridWorld(frozen_lake_layout()));
  const auto c = compute_c_star(m, 20);
  for (const auto& pi : {uniform_policy(m, 20), greedy_policy(compute_c_star(m, 20))}) {
    const auto cp = compute_c_pi(m, pi, 20);
    for (std::size_t i = 0; i < c.values().size(); ++i) ASSERT_LE(cp.values()[i], c.values()[i] + 1e-12);
  }
}

TEST(CPi, MissingEntryReported) {
  const auto m = line_mdp();
  PolicySpec pi(m.states, m.goals, 3, m.actions);
  EXPECT_THROW(compute_c_pi(m, pi, 3), std::out_of_range);
}

TEST(PolicySpec, RejectsUnnormalized) {
  PolicySpec pi(3, 3, 2, 2);
  const std::vector<double> bad{0.5, 0.6};
  EXPECT_THROW(pi.set(0, 0, 0, bad), std::invalid_argument);
  const std::vector<double> neg{-0.1, 1.1};
  EXPECT_THROW(pi.set(0, 0, 0, neg), std::invalid_argument);
}

TEST(AStar, CheckerboardParity) {
  const GridWorld board(checkerboard_layout());
  const auto m = make_finite_mdp(board);
  const auto a = compute_a_star(m, 4);
  const auto s = board.state_index({2, 2});
  const auto g = board.goal_index({3, 2});
  for (std::size_t act = 0; act < 4; ++act) EXPECT_EQ(a(s, act, g, 2), 0.0);
  EXPECT_EQ(a(s, 1, g, 1), 1.0);  // right
}

TEST(AStar, LineWorldClampedArrival) {
  const auto a = compute_a_star(line_mdp(), 5);
  EXPECT_EQ(a(0, kPlus, 2, 3), 1.0);
  EXPECT_EQ(a(0, kPlus, 2, 1), 0.0);
}

TEST(AStar, DominatedByCStarOnLineWorld) {
  const auto m = line_mdp();
  const auto a = compute_a_star(m, 10);
  const auto c = compute_c_star(m, 10);
  for (std::size_t i = 0; i < c.values().size(); ++i) EXPECT_GE(c.values()[i], a.values()[i] - 1e-12);
}

TEST(DStar, LineWorldEqualsGamma) {
  const std::vector<double> grid{0.0, 0.5, 0.9, 1.0};
  const auto d = compute_d_star(line_mdp(), grid);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(d(0, kPlus, 2, k), grid[k], 1e-10);
  for (auto ok : d.converged) EXPECT_TRUE(ok);
}

TEST(DStar, GammaZeroIsOneStepArrival) {
  const auto m = make_finite_mdp(GridWorld(frozen_lake_layout()));
  const auto d = compute_d_star(m, {0.0});
  for (std::size_t g = 0; g < m.goals; ++g)
    for (std::size_t s = 0; s < m.states; ++s)
      for (std::size_t a = 0; a < m.actions; ++a) {
        double one = 0.0;
        if (!m.is_terminal(s))
          for (const auto& arc : m.row(s, a)) one += m.goal_hit(arc.next, g) ? arc.probability : 0.0;
        ASSERT_NEAR(d(s, a, g, 0), one, 1e-12);
      }
}

TEST(DStar, MonotoneInGamma) {
  for (const auto& layout : {frozen_lake_layout(), line_world_layout(), checkerboard_layout(), mini_maze_layout()}) {
    const auto d = compute_d_star(make_finite_mdp(GridWorld(layout)));
    for (std::size_t g = 0; g < d.goals(); ++g)
      for (std::size_t k = 0; k + 1 < d.depth(); ++k)
        for (std::size_t s = 0; s < d.states(); ++s)
          for (std::size_t a = 0; a < d.actions(); ++a) ASSERT_GE(d(s, a, g, k + 1), d(s, a, g, k) - 1e-12);
  }
}

TEST(DStar, RejectsGammaOutsideUnitInterval) {
  EXPECT_THROW(compute_d_star(line_mdp(), {1.5}), std::invalid_argument);
}

TEST(DStar, NonConvergenceIsFlagged) {
  auto m = make_finite_mdp(GridWorld(frozen_lake_layout()));
  m.max_episode_length = 1;  // caps value iteration at 10 sweeps
  const auto d = compute_d_star(m, {0.0, 1.0});
  EXPECT_TRUE(d.converged[0]);
  EXPECT_FALSE(d.converged[1]);
}

TEST(QStar, FigureOneGap) {
  const GridWorld grid(open_grid_layout());
  const auto m = make_finite_mdp(grid);
  const auto q = compute_q_star(m, 0.99);
  const auto s = grid.state_index({1, 1});
  const auto g = grid.goal_index({4, 3});
  EXPECT_NEAR(q(s, 0, g, 0), std::pow(0.99, 5), 1e-10);  // up: on a shortest path
  EXPECT_NEAR(q(s, 3, g, 0), std::pow(0.99, 7), 1e-10);  // left: one step away, one back
}

TEST(QStar, UnreachableIsZeroAndGammaOneRejected) {
  auto layout = open_grid_layout(5, 1);
  layout.walls = {{2, 0}};
  layout.start = {0, 0};
  const GridWorld split(layout);
  const auto m = make_finite_mdp(split);
  const auto q = compute_q_star(m, 0.9);
  EXPECT_EQ(q(split.state_index({0, 0}), 1, split.goal_index({4, 0}), 0), 0.0);
  EXPECT_THROW(compute_q_star(m, 1.0), std::invalid_argument);
}

TEST(PolicySuccess, GreedyDeterministicIsCertain) {
  const GridWorld maze(mini_maze_layout());
  const auto m = make_finite_mdp(maze);
  const auto c = compute_c_star(m, 60);
  const auto pi = greedy_policy(c);
  const auto s0 = maze.state_index({0, 0});
  const auto g = maze.goal_index({0, 9});
  const auto h = min_horizon(c, s0, g);
  ASSERT_TRUE(h.has_value());
  EXPECT_EQ(policy_success_prob(m, pi, s0, g, *h), 1.0);
  EXPECT_EQ(policy_success_prob(m, pi, s0, g, *h - 1), 0.0);
}

TEST(PolicySuccess, EqualsCPiMarginal) {
  const GridWorld lake(frozen_lake_layout());
  const auto m = make_finite_mdp(lake);
  const auto pi = uniform_policy(m, 12);
  const auto cp = compute_c_pi(m, pi, 12);
  const auto s0 = lake.state_index({1, 0});
  const auto g = lake.goal_index({3, 5});
  for (int h = 1; h <= 12; ++h) {
    const auto dist = pi.distribution(s0, g, h);
    double marginal = 0.0;
    for (std::size_t a = 0; a < 4; ++a) marginal += dist[a] * cp(s0, a, g, h);
    EXPECT_NEAR(policy_success_prob(m, pi, s0, g, h), marginal, 1e-12);
  }
}

TEST(MinHorizon, Examples) {
  const auto m = line_mdp();
  const auto c = compute_c_star(m, 5);
  EXPECT_EQ(min_horizon(c, 0, 2), 2);
  EXPECT_EQ(min_horizon(c, 1, 1), 0);
  EXPECT_EQ(min_horizon(compute_c_star(m, 1), 0, 2), std::nullopt);
  const auto lake = compute_c_star(make_finite_mdp(GridWorld(frozen_lake_layout())), 5);
  EXPECT_THROW(min_horizon(lake, 0, 1), ContractViolation);
}
