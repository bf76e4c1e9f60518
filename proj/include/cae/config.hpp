#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cae/dubins.hpp"
#include "cae/grid_world.hpp"
#include "cae/learner.hpp"

namespace cae {

/// Malformed file, unknown key or invalid value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { grid, dubins };

/// Named evaluation goals. A set flagged `every_goal` expands to the full
/// goal set of an enumerable environment.
struct GoalSet {
  std::string tag;
  std::vector<std::array<double, 2>> goals;
  bool every_goal = false;
};

inline const std::vector<std::string>& goal_tags() {
  static const std::vector<std::string> tags{"easy", "medium", "hard", "all"};
  return tags;
}

struct EnvConfig {
  std::string name = "grid";
  EnvKind kind = EnvKind::grid;
  GridLayout grid;
  DubinsLayout dubins;
  std::vector<GoalSet> strata;
};

struct EvalConfig {
  int trials = 100;
  int seeds = 1;
  int horizon = 0;  // 0: horizon-free policy; otherwise horizon-aware greedy counting down from it
};

struct RunConfig {
  EnvConfig env;
  TrainConfig train;
  EvalConfig eval;
};

/// Ordered key -> value view of a configuration.
using KeyValues = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Scalar formatting and parsing

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(trim(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

[[noreturn]] inline void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("config: " + key + " = '" + value + "': " + why);
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) bad(key, v, "expected a number");
  return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty()) bad(key, v, "expected an integer");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, v, "expected true or false");
}

inline std::string from_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& xs, const char* sep, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += fmt(xs[i]);
  }
  return out;
}

inline std::vector<std::vector<double>> tuples(const std::string& key, const std::string& v, std::size_t arity) {
  std::vector<std::vector<double>> out;
  if (v.empty()) return out;
  for (const auto& item : split(v, ';')) {
    const auto parts = split(item, ',');
    if (parts.size() != arity) bad(key, v, "expected " + std::to_string(arity) + " comma-separated numbers per item");
    std::vector<double> t;
    for (const auto& p : parts) t.push_back(to_double(key, p));
    out.push_back(std::move(t));
  }
  return out;
}

inline int integral(const std::string& key, const std::string& v, double x) {
  if (x != std::floor(x)) bad(key, v, "grid coordinates must be integers");
  return static_cast<int>(x);
}

inline std::vector<Cell> cells(const std::string& key, const std::string& v) {
  std::vector<Cell> out;
  for (const auto& t : tuples(key, v, 2)) out.push_back({integral(key, v, t[0]), integral(key, v, t[1])});
  return out;
}

inline std::string format_cells(const std::vector<Cell>& cs) {
  return join(cs, ";", [](Cell c) { return std::to_string(c.x) + "," + std::to_string(c.y); });
}

template <class E>
E pick(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (v == name) return e;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  bad(key, v, "expected one of " + allowed);
}

template <class E>
std::string name_of(E e, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, x] : options)
    if (x == e) return name;
  return "?";
}

inline constexpr std::initializer_list<std::pair<const char*, Boundary>> kBoundaries{{"clamp", Boundary::clamp},
                                                                                     {"reflect", Boundary::reflect}};
inline constexpr std::initializer_list<std::pair<const char*, MoveSet>> kMoves{{"cardinal", MoveSet::cardinal},
                                                                               {"line", MoveSet::line}};
inline constexpr std::initializer_list<std::pair<const char*, StartMode>> kStarts{{"uniform", StartMode::uniform},
                                                                                  {"point", StartMode::point}};
inline constexpr std::initializer_list<std::pair<const char*, OptimizerKind>> kOptimizers{
    {"sgd", OptimizerKind::sgd}, {"adam", OptimizerKind::adam}, {"average", OptimizerKind::average}};
inline constexpr std::initializer_list<std::pair<const char*, RelabelMode>> kRelabel{
    {"future", RelabelMode::future}, {"reachability", RelabelMode::reachability}};
inline constexpr std::initializer_list<std::pair<const char*, EnvKind>> kKinds{{"grid", EnvKind::grid},
                                                                               {"dubins", EnvKind::dubins}};

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization

inline KeyValues to_key_values(const RunConfig& c) {
  using namespace detail;
  KeyValues kv;
  const auto& e = c.env;
  kv["env.name"] = e.name;
  kv["env.kind"] = name_of(e.kind, kKinds);
  if (e.kind == EnvKind::grid) {
    const auto& g = e.grid;
    kv["env.width"] = std::to_string(g.width);
    kv["env.height"] = std::to_string(g.height);
    kv["env.holes"] = format_cells(g.holes);
    kv["env.walls"] = format_cells(g.walls);
    kv["env.slip"] = format_double(g.slip);
    kv["env.boundary"] = name_of(g.boundary, kBoundaries);
    kv["env.moves"] = name_of(g.moves, kMoves);
    kv["env.max_episode_length"] = std::to_string(g.max_episode_length);
    kv["env.train_start"] = name_of(g.train_start, kStarts);
    kv["env.start"] = format_cells({g.start});
  } else {
    const auto& d = e.dubins;
    kv["env.size"] = format_double(d.size);
    kv["env.turn_deg"] = format_double(d.turn_deg);
    kv["env.goal_radius"] = format_double(d.goal_radius);
    kv["env.segments"] = join(d.walls, ";", [](const Segment& s) {
      return format_double(s.a.x) + "," + format_double(s.a.y) + "," + format_double(s.b.x) + "," +
             format_double(s.b.y);
    });
    kv["env.start"] =
        format_double(d.start.x) + "," + format_double(d.start.y) + "," + format_double(d.start.heading);
    kv["env.max_episode_length"] = std::to_string(d.max_episode_length);
  }
  for (const auto& s : e.strata)
    kv["env.goals." + s.tag] =
        s.every_goal ? "*" : join(s.goals, ";", [](const std::array<double, 2>& p) {
          return format_double(p[0]) + "," + format_double(p[1]);
        });

  const auto& t = c.train;
  kv["train.variant"] = to_string(t.variant);
  kv["train.n_explore"] = std::to_string(t.n_explore);
  kv["train.n_gd"] = std::to_string(t.n_gd);
  kv["train.n_train"] = std::to_string(t.n_train);
  kv["train.n_copy"] = std::to_string(t.n_copy);
  kv["train.batch_size"] = std::to_string(t.batch_size);
  kv["train.lr"] = format_double(t.lr);
  kv["train.optimizer"] = name_of(t.optimizer, kOptimizers);
  kv["train.lr_drop_episode"] = std::to_string(t.lr_drop_episode);
  kv["train.lr_drop_factor"] = format_double(t.lr_drop_factor);
  kv["train.kappa"] = format_double(t.kappa);
  kv["train.h_max"] = std::to_string(t.h_max);
  kv["train.gamma"] = format_double(t.gamma);
  kv["train.backend"] = t.tabular ? "tabular" : "mlp";
  kv["train.hidden"] = join(t.hidden, ",", [](std::size_t h) { return std::to_string(h); });
  kv["train.relabel"] = name_of(t.relabel, kRelabel);
  kv["train.clip"] = from_bool(t.clip);
  kv["train.checkpoint_interval"] = std::to_string(t.checkpoint_interval);
  kv["train.seed"] = std::to_string(t.seed);
  kv["policy.alpha"] = format_double(t.alpha);
  kv["policy.distance_floor"] = from_bool(t.distance_floor);
  kv["policy.epsilon"] = format_double(t.epsilon);
  kv["policy.epsilon_decay"] = from_bool(t.epsilon_decay);
  kv["eval.trials"] = std::to_string(c.eval.trials);
  kv["eval.seeds"] = std::to_string(c.eval.seeds);
  kv["eval.horizon"] = std::to_string(c.eval.horizon);
  return kv;
}

inline std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : to_key_values(c)) out += k + " = " + v + "\n";
  return out;
}

/// Builds a configuration from a complete key set (as produced by
/// to_key_values). Every key must be consumed.
inline RunConfig from_key_values(const KeyValues& kv) {
  using namespace detail;
  std::map<std::string, bool> used;
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError("config: missing key " + k);
    used[k] = true;
    return it->second;
  };
  auto num = [&](const std::string& k) { return to_double(k, get(k)); };
  auto integer = [&](const std::string& k) { return static_cast<int>(to_int(k, get(k))); };
  auto flag = [&](const std::string& k) { return to_bool(k, get(k)); };

  RunConfig c;
  auto& e = c.env;
  e.name = get("env.name");
  if (e.name.empty()) throw ConfigError("config: env.name must not be empty");
  e.kind = pick("env.kind", get("env.kind"), kKinds);
  if (e.kind == EnvKind::grid) {
    auto& g = e.grid;
    g.name = e.name;
    g.width = integer("env.width");
    g.height = integer("env.height");
    g.holes = cells("env.holes", get("env.holes"));
    g.walls = cells("env.walls", get("env.walls"));
    g.slip = num("env.slip");
    g.boundary = pick("env.boundary", get("env.boundary"), kBoundaries);
    g.moves = pick("env.moves", get("env.moves"), kMoves);
    g.max_episode_length = integer("env.max_episode_length");
    g.train_start = pick("env.train_start", get("env.train_start"), kStarts);
    const auto start = cells("env.start", get("env.start"));
    if (start.size() != 1) bad("env.start", get("env.start"), "expected one cell");
    g.start = start[0];
  } else {
    auto& d = e.dubins;
    d.name = e.name;
    d.size = num("env.size");
    d.turn_deg = num("env.turn_deg");
    d.goal_radius = num("env.goal_radius");
    d.walls.clear();
    for (const auto& t : tuples("env.segments", get("env.segments"), 4)) d.walls.push_back({{t[0], t[1]}, {t[2], t[3]}});
    const auto start = tuples("env.start", get("env.start"), 3);
    if (start.size() != 1) bad("env.start", get("env.start"), "expected x,y,heading");
    d.start = {start[0][0], start[0][1], start[0][2]};
    d.max_episode_length = integer("env.max_episode_length");
  }
  for (const auto& tag : goal_tags()) {
    const auto key = "env.goals." + tag;
    if (!kv.contains(key)) continue;
    const auto& v = get(key);
    if (v.empty()) continue;
    GoalSet s;
    s.tag = tag;
    if (v == "*") {
      if (e.kind != EnvKind::grid) bad(key, v, "'*' needs an enumerable environment");
      s.every_goal = true;
    } else {
      for (const auto& t : tuples(key, v, 2)) {
        if (e.kind == EnvKind::grid) {
          integral(key, v, t[0]);
          integral(key, v, t[1]);
        }
        s.goals.push_back({t[0], t[1]});
      }
    }
    e.strata.push_back(std::move(s));
  }

  auto& t = c.train;
  try {
    t.variant = parse_variant(get("train.variant"));
  } catch (const std::invalid_argument&) {
    bad("train.variant", get("train.variant"), "expected c|a|d|q");
  }
  t.n_explore = integer("train.n_explore");
  t.n_gd = integer("train.n_gd");
  t.n_train = integer("train.n_train");
  t.n_copy = integer("train.n_copy");
  t.batch_size = integer("train.batch_size");
  t.lr = num("train.lr");
  t.optimizer = pick("train.optimizer", get("train.optimizer"), kOptimizers);
  t.lr_drop_episode = integer("train.lr_drop_episode");
  t.lr_drop_factor = num("train.lr_drop_factor");
  t.kappa = num("train.kappa");
  t.h_max = integer("train.h_max");
  t.gamma = num("train.gamma");
  t.tabular = pick("train.backend", get("train.backend"), {std::pair{"tabular", true}, std::pair{"mlp", false}});
  t.hidden.clear();
  for (const auto& h : split(get("train.hidden"), ',')) {
    if (h.empty()) continue;
    const auto v = to_int("train.hidden", h);
    if (v < 1) bad("train.hidden", get("train.hidden"), "layer sizes must be positive");
    t.hidden.push_back(static_cast<std::size_t>(v));
  }
  t.relabel = pick("train.relabel", get("train.relabel"), kRelabel);
  t.clip = flag("train.clip");
  t.checkpoint_interval = integer("train.checkpoint_interval");
  const auto seed = to_int("train.seed", get("train.seed"));
  if (seed < 0) bad("train.seed", get("train.seed"), "seed must be non-negative");
  t.seed = static_cast<std::uint64_t>(seed);
  t.alpha = num("policy.alpha");
  t.distance_floor = flag("policy.distance_floor");
  t.epsilon = num("policy.epsilon");
  t.epsilon_decay = flag("policy.epsilon_decay");
  c.eval.trials = integer("eval.trials");
  c.eval.seeds = integer("eval.seeds");
  c.eval.horizon = integer("eval.horizon");

  for (const auto& [k, v] : kv)
    if (!used.contains(k)) throw ConfigError("config: unknown key " + k);
  return c;
}

/// Checks that every value is admissible, including the environment.
inline void validate(const RunConfig& c) {
  try {
    validate(c.train);
    if (!c.train.tabular && c.train.hidden.empty()) throw std::invalid_argument("mlp backend needs hidden layers");
    if (c.env.kind == EnvKind::grid) {
      GridWorld probe(c.env.grid);
      for (const auto& s : c.env.strata)
        for (const auto& p : s.goals)
          if (!probe.valid({static_cast<int>(p[0]), static_cast<int>(p[1])}))
            throw std::invalid_argument("goal " + format_double(p[0]) + "," + format_double(p[1]) +
                                        " is not a cell of the grid");
    } else {
      DubinsCar probe(c.env.dubins);
      if (c.train.tabular) throw std::invalid_argument("the Dubins' car needs the mlp backend");
      for (const auto& s : c.env.strata)
        for (const auto& p : s.goals)
          if (p[0] < 0 || p[1] < 0 || p[0] > c.env.dubins.size || p[1] > c.env.dubins.size)
            throw std::invalid_argument("goal outside the arena");
    }
    if (c.eval.trials < 1) throw std::invalid_argument("eval.trials must be >= 1");
    if (c.eval.seeds < 1) throw std::invalid_argument("eval.seeds must be >= 1");
    if (c.eval.horizon < 0) throw std::invalid_argument("eval.horizon must be >= 0");
    if (c.eval.horizon > 0 && (c.train.variant == Variant::d || c.train.variant == Variant::q))
      throw std::invalid_argument("eval.horizon needs a horizon-indexed variant");
    if (c.eval.horizon > c.train.h_max) throw std::invalid_argument("eval.horizon exceeds train.h_max");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// Reads `key = value` lines; '#' starts a comment. Duplicate keys are
/// rejected.
inline std::vector<std::pair<std::string, std::string>> parse_lines(std::istream& in, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
    auto key = detail::trim(std::string_view(text).substr(0, eq));
    auto value = detail::trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key");
    if (seen.contains(key))
      throw ConfigError(origin + ":" + std::to_string(n) + ": duplicate key " + key + " (first on line " +
                        std::to_string(seen[key]) + ")");
    seen[key] = n;
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline std::optional<RunConfig> preset(const std::string& name);
inline std::vector<std::string> preset_names();

/// Starting point for a name that is not a preset.
inline RunConfig blank_config(const std::string& name, EnvKind kind) {
  RunConfig c;
  c.env.name = name;
  c.env.kind = kind;
  if (kind == EnvKind::dubins) {
    c.train.tabular = false;
    c.train.hidden = {200, 100};
  }
  return c;
}

/// Layers key/value overrides on top of a base configuration. The base is
/// the preset named by `env.name` when that key is overridden, else `base`.
/// Keys outside the resulting key set are rejected.
inline RunConfig apply_overrides(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& entries) {
  RunConfig start = base;
  std::optional<std::string> name, kind;
  for (const auto& [k, v] : entries) {
    if (k == "env.name") name = v;
    if (k == "env.kind") kind = v;
  }
  if (name && *name != base.env.name) {
    if (auto p = preset(*name)) {
      start = *p;
    } else {
      if (!kind) throw ConfigError("config: env.name '" + *name + "' is not a preset; set env.kind as well");
      start = blank_config(*name, detail::pick("env.kind", *kind, detail::kKinds));
    }
  } else if (kind && *kind != detail::name_of(base.env.kind, detail::kKinds)) {
    start = blank_config(base.env.name, detail::pick("env.kind", *kind, detail::kKinds));
  }
  KeyValues kv = to_key_values(start);
  for (const auto& [k, v] : entries) {
    const bool goal_key = k.rfind("env.goals.", 0) == 0 &&
                          std::find(goal_tags().begin(), goal_tags().end(), k.substr(10)) != goal_tags().end();
    if (!kv.contains(k) && !goal_key) throw ConfigError("config: unknown key " + k);
    kv[k] = v;
  }
  auto c = from_key_values(kv);
  validate(c);
  return c;
}

/// Parses a whole file. `env.name` is required and selects the base.
inline RunConfig load_config(std::istream& in, const std::string& origin = "config") {
  const auto entries = parse_lines(in, origin);
  std::optional<std::string> name;
  for (const auto& [k, v] : entries)
    if (k == "env.name") name = v;
  if (!name) throw ConfigError(origin + ": env.name is required");
  RunConfig base;
  if (auto p = preset(*name)) {
    base = *p;
  } else {
    base.env.name = "";  // force apply_overrides to resolve the name
  }
  return apply_overrides(base, entries);
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return load_config(in, path);
}

}  // namespace cae

#include "cae/presets.hpp"
