#pragma once

// Stock run configurations. configs/<name>.cfg mirrors each one.

#include "cae/config.hpp"

namespace cae {

namespace detail {

inline RunConfig grid_preset(GridLayout layout) {
  RunConfig c;
  c.env.name = layout.name;
  c.env.kind = EnvKind::grid;
  c.env.grid = std::move(layout);
  return c;
}

inline RunConfig dubins_preset(DubinsLayout layout) {
  RunConfig c;
  c.env.name = layout.name;
  c.env.kind = EnvKind::dubins;
  c.env.dubins = std::move(layout);
  auto& t = c.train;
  t.tabular = false;
  t.optimizer = OptimizerKind::adam;
  t.hidden = {400, 300};
  t.n_gd = 4500;
  t.n_train = 80;
  t.clip = true;
  c.env.strata = {{"easy", {{2.5, 11.0}, {4.0, 13.5}, {1.5, 8.0}}, false},
                  {"medium", {{7.5, 12.0}, {7.5, 3.0}, {2.0, 2.0}}, false},
                  {"hard", {{12.5, 13.0}, {13.0, 5.0}, {13.0, 1.5}}, false}};
  return c;
}

inline RunConfig tabular_small(GridLayout layout, int h_max, int episodes) {
  RunConfig c = grid_preset(std::move(layout));
  auto& t = c.train;
  t.optimizer = OptimizerKind::average;
  t.lr = 1e-2;
  t.n_explore = 5;
  t.n_gd = episodes;
  t.n_train = 32;
  t.batch_size = 64;
  t.h_max = h_max;
  t.clip = true;
  c.env.strata = {{"all", {}, true}};
  return c;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"line-world", "frozen-lake", "frozen-lake-tabular", "checkerboard", "open-grid",
          "mini-maze",  "dubins",      "dubins-small",        "dubins-open5"};
}

inline std::optional<RunConfig> preset(const std::string& name) {
  using namespace detail;
  if (name == "line-world") return tabular_small(line_world_layout(), 10, 150);
  if (name == "checkerboard") return tabular_small(checkerboard_layout(), 20, 300);
  if (name == "open-grid") return tabular_small(open_grid_layout(), 20, 300);

  if (name == "frozen-lake" || name == "frozen-lake-tabular") {
    // 300 episodes of at most 50 steps, 64 steps of batch 256, 15 random
    // episodes, epsilon 0.1, target copy every 10, kappa 3, H = {1..50}
    RunConfig c = grid_preset(frozen_lake_layout());
    auto& t = c.train;
    t.clip = true;
    c.env.strata = {{"all", {}, true}};
    if (name == "frozen-lake") {
      t.tabular = false;
      t.optimizer = OptimizerKind::adam;
      t.hidden = {60, 40};
    } else {
      c.env.name = name;
      c.env.grid.name = name;
      t.optimizer = OptimizerKind::average;
      t.lr = 1e-2;
    }
    return c;
  }

  if (name == "mini-maze") {
    RunConfig c = grid_preset(mini_maze_layout());
    auto& t = c.train;
    t.tabular = false;
    t.optimizer = OptimizerKind::adam;
    t.hidden = {200, 100};
    t.n_gd = 3000;
    t.n_train = 32;
    t.epsilon = 0.5;
    t.epsilon_decay = true;
    t.lr_drop_episode = 2000;
    t.distance_floor = true;
    t.clip = true;
    c.env.strata = {{"easy", {{3, 0}, {6, 1}, {9, 0}, {9, 1}}, false},
                    {"medium", {{9, 3}, {5, 4}, {1, 3}, {0, 4}}, false},
                    {"hard", {{0, 6}, {5, 7}, {9, 9}, {4, 9}}, false}};
    return c;
  }

  if (name == "dubins") return dubins_preset(dubins_layout());
  if (name == "dubins-small") {
    RunConfig c = dubins_preset(dubins_small_layout());
    c.train.n_gd = 2000;
    c.train.hidden = {200, 100};
    return c;
  }
  if (name == "dubins-open5") {
    RunConfig c = dubins_preset(dubins_open5_layout());
    c.train.n_gd = 2000;
    c.train.hidden = {200, 100};
    c.env.strata = {{"easy", {{10.0, 7.5}, {7.5, 10.0}}, false},
                    {"medium", {{12.5, 12.5}, {2.5, 7.5}}, false},
                    {"hard", {{7.5, 8.5}, {1.0, 1.0}}, false}};
    return c;
  }
  return std::nullopt;
}

}  // namespace cae
