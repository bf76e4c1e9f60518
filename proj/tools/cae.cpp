// cae: train, evaluate, inspect and plot accessibility learners.

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cae/config.hpp"
#include "cae/dubins.hpp"
#include "cae/eval.hpp"
#include "cae/finite_mdp.hpp"
#include "cae/grid_world.hpp"
#include "cae/learner.hpp"
#include "cae/model.hpp"
#include "cae/oracle.hpp"
#include "cae/policy.hpp"
#include "cae/replay.hpp"
#include "cae/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cae;

namespace {

/// Bad flags, unreadable inputs, incompatible checkpoints: exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string env;
  std::string variant;
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  int threads = 1;
  std::optional<int> h_max;
  std::optional<double> alpha;
  std::string replay_in;
  std::string checkpoint;
  bool oracle = false;
  std::string variants = "c,a,d,q";
  std::vector<int> horizons;
  std::string goal;
};

// ---------------------------------------------------------------------------
// Files and the run manifest

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// <out>/<timestamp>-<seed>, with -2, -3, ... appended on collision.
fs::path make_run_dir(const std::string& out, std::uint64_t seed) {
  fs::create_directories(out);
  const std::string base = utc_stamp() + "-" + std::to_string(seed);
  for (int n = 1;; ++n) {
    fs::path p = fs::path(out) / (n == 1 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(p)) return p;
  }
}

class Run {
 public:
  Run(fs::path dir, std::string command, std::vector<std::string> argv, const RunConfig& cfg)
      : dir_(std::move(dir)), command_(std::move(command)), argv_(std::move(argv)), cfg_(cfg) {}

  const fs::path& dir() const { return dir_; }

  std::ofstream open(const std::string& rel) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    files_.push_back(rel);
    return out;
  }

  void write(const std::string& rel, const std::string& text) {
    auto out = open(rel);
    out << text;
  }

  void finish(const std::string& spec_hash, const json& extra = json::object()) {
    write("config.cfg", to_text(cfg_));
    json m;
    m["command"] = command_;
    m["command_line"] = argv_;
    m["config"] = to_text(cfg_);
    m["seed"] = cfg_.train.seed;
    m["version"] = CAE_VERSION;
    m["env_spec_hash"] = spec_hash;
    m["created"] = utc_stamp();
    m["files"] = json::array();
    for (const auto& rel : files_) {
      const fs::path p = dir_ / rel;
      m["files"].push_back({{"path", rel}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    for (auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << m.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest");
    std::cout << "run directory: " << dir_.string() << '\n';
  }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<std::string> argv_;
  RunConfig cfg_;
  std::vector<std::string> files_;
};

// ---------------------------------------------------------------------------
// Configuration resolution

std::vector<std::pair<std::string, std::string>> flag_overrides(const Options& o) {
  std::vector<std::pair<std::string, std::string>> kv;
  if (!o.variant.empty()) kv.emplace_back("train.variant", o.variant);
  if (o.h_max) kv.emplace_back("train.h_max", std::to_string(*o.h_max));
  if (o.alpha) kv.emplace_back("policy.alpha", format_double(*o.alpha));
  if (o.seed) kv.emplace_back("train.seed", std::to_string(*o.seed));
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    kv.emplace_back(detail::trim(std::string_view(s).substr(0, eq)), detail::trim(std::string_view(s).substr(eq + 1)));
  }
  return kv;
}

fs::path checkpoint_path(const std::string& arg) {
  fs::path p(arg);
  if (fs::is_directory(p)) p /= "checkpoint.json";
  if (!fs::exists(p)) throw UsageError("checkpoint not found: " + p.string());
  return p;
}

/// Base: --config file, else the config.cfg of the run holding --checkpoint,
/// else the --env preset. Flags and --set entries are layered on top.
RunConfig resolve_config(const Options& o, bool allow_run_config) {
  RunConfig base;
  if (!o.config.empty()) {
    base = load_config_file(o.config);
  } else if (allow_run_config && o.env.empty() && !o.checkpoint.empty()) {
    const fs::path cfg = checkpoint_path(o.checkpoint).parent_path() / "config.cfg";
    if (!fs::exists(cfg)) throw UsageError("no --env or --config given and " + cfg.string() + " does not exist");
    base = load_config_file(cfg.string());
  } else if (!o.env.empty()) {
    auto p = preset(o.env);
    if (!p) {
      std::string names;
      for (const auto& n : preset_names()) names += " " + n;
      throw UsageError("unknown environment '" + o.env + "'; presets:" + names);
    }
    base = *p;
  } else {
    throw UsageError("one of --env or --config is required");
  }
  if (!o.env.empty() && o.env != base.env.name)
    throw UsageError("--env " + o.env + " conflicts with the configuration's env.name " + base.env.name);
  return apply_overrides(base, flag_overrides(o));
}

template <class F>
decltype(auto) with_env(const RunConfig& cfg, F&& f) {
  if (cfg.env.kind == EnvKind::grid) {
    GridLayout l = cfg.env.grid;
    l.name = cfg.env.name;
    return f(GridWorld(std::move(l)));
  }
  DubinsLayout l = cfg.env.dubins;
  l.name = cfg.env.name;
  return f(DubinsCar(std::move(l)));
}

template <class E>
typename E::Goal goal_from(const std::array<double, 2>& p) {
  if constexpr (std::is_same_v<typename E::Goal, Cell>) {
    return Cell{static_cast<int>(p[0]), static_cast<int>(p[1])};
  } else {
    return Point{p[0], p[1]};
  }
}

template <class E>
std::vector<TaggedGoal<typename E::Goal>> eval_goals(const E& env, const RunConfig& cfg) {
  std::vector<TaggedGoal<typename E::Goal>> out;
  Rng unused(0);
  const auto start = env.initial_state(unused, Phase::test);
  for (const auto& set : cfg.env.strata) {
    if (set.every_goal) {
      if constexpr (Enumerable<E>) {
        for (std::size_t i = 0; i < env.goal_count(); ++i)
          if (!env.goal_check(start, env.goal_at(i))) out.push_back({env.goal_at(i), set.tag});
      } else {
        throw UsageError("env.goals." + set.tag + " = * needs an enumerable environment");
      }
    } else {
      for (const auto& p : set.goals) out.push_back({goal_from<E>(p), set.tag});
    }
  }
  if (out.empty()) throw UsageError("no evaluation goals configured (env.goals.*)");
  return out;
}

HorizonSelectorConfig selector_for(const RunConfig& cfg, const Conditioning& cond) {
  auto sel = default_selector(cond, cfg.train.alpha);
  sel.distance_floor = cfg.train.distance_floor;
  return sel;
}

TrainConfig train_config(const RunConfig& cfg) { return cfg.train; }

// ---------------------------------------------------------------------------
// Checkpoints

struct LoadedModel {
  Checkpoint ckpt;
  Conditioning cond;
  fs::path run_dir;
};


template <class E>
LoadedModel load_model(const E& env, const std::string& arg) {
  const fs::path p = checkpoint_path(arg);
  std::ifstream in(p);
  LoadedModel m;
  try {
    m.ckpt = checkpoint_from_json(json::parse(in));
    const auto& c = m.ckpt.encoding.at("conditioning");
    m.cond.variant = parse_variant(c.at("variant").get<std::string>());
    m.cond.h_max = c.at("h_max").get<int>();
    m.cond.gamma_grid = c.at("gamma_grid").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw UsageError("malformed checkpoint " + p.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError("malformed checkpoint " + p.string() + ": " + e.what());
  }
  if (m.ckpt.encoding != encoding_json(env, m.cond))
    throw UsageError("checkpoint " + p.string() + " was trained on a different environment or encoding");
  if (m.ckpt.fn->heads() != env.action_count()) throw UsageError("checkpoint head count does not match the env");
  m.run_dir = p.parent_path();
  return m;
}

// ---------------------------------------------------------------------------
// train

template <class E>
json write_checkpoint(Run& run, const std::string& rel, const E& env, const Conditioning& cond, const AccessFn& fn,
                      std::uint64_t seed, std::uint64_t step) {
  const auto j = checkpoint_json(std::string(to_string(cond.variant)), encoding_json(env, cond), fn, seed, step);
  run.write(rel, j.dump() + "\n");
  return j;
}

template <class E>
TrainResult<E> train_into(Run& run, const std::string& prefix, const E& env, const TrainConfig& tc,
                          const Options& o) {
  ReplayBuffer<E> offline;
  TrainHooks<E> hooks;
  if (!o.replay_in.empty()) {
    std::ifstream in(o.replay_in);
    if (!in) throw UsageError("cannot open --replay-in " + o.replay_in);
    try {
      offline = read_episodes<E>(in);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    hooks.replay_in = &offline;
  }
  auto metrics = run.open(prefix + "metrics.jsonl");
  hooks.on_episode = [&](const EpisodeRecord& r) { metrics << to_json(r).dump() << '\n'; };
  const Conditioning cond = conditioning_for(tc);
  hooks.on_checkpoint = [&](int n, const AccessFn& fn, std::uint64_t step) {
    write_checkpoint(run, prefix + "checkpoints/checkpoint-" + std::to_string(n) + ".json", env, cond, fn, tc.seed,
                     step);
  };
  auto result = train(env, tc, hooks);
  metrics.close();
  write_checkpoint(run, prefix + "checkpoint.json", env, result.cond, *result.fn, tc.seed, result.report.batches);
  {
    auto eps = run.open(prefix + "episodes.jsonl");
    write_episodes(eps, result.buffer);
  }
  return result;
}

int cmd_train(const Options& o, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(o, false);
  return with_env(cfg, [&](const auto& env) {
    Run run(make_run_dir(o.out, cfg.train.seed), "train", argv, cfg);
    const auto r = train_into(run, "", env, train_config(cfg), o);
    int successes = 0;
    for (const auto& rec : r.report.records) successes += rec.success ? 1 : 0;
    json summary{{"episodes", r.report.records.size()},
                 {"successes", successes},
                 {"gradient_steps", r.report.batches},
                 {"transitions", r.buffer.transitions()},
                 {"wall_seconds", r.report.wall_seconds}};
    run.write("train_summary.json", summary.dump(2) + "\n");
    std::cout << "trained " << r.report.records.size() << " goal-directed episodes, " << r.report.batches
              << " gradient steps, " << successes << " successes\n";
    run.finish(spec_hash(env.spec()));
    return 0;
  });
}

// ---------------------------------------------------------------------------
// eval

template <class E, class V>
EvalPolicy<E> eval_policy(const E& env, const RunConfig& cfg, V values, const Conditioning& cond) {
  if (cfg.eval.horizon > 0) {
    if (!horizon_indexed(cond.variant)) throw UsageError("eval.horizon needs a C or A model");
    if (cfg.eval.horizon > cond.h_max) throw UsageError("eval.horizon exceeds the model's h_max");
    return countdown_eval_policy<E>(std::move(values), cfg.eval.horizon);
  }
  return horizon_free_eval_policy(env, std::move(values), selector_for(cfg, cond));
}

std::uint64_t eval_seed(const RunConfig& cfg, int i) {
  return Rng(cfg.train.seed).split(1000 + static_cast<std::uint64_t>(i))();
}

template <class E>
json run_evaluation(Run& run, const std::string& prefix, const E& env, const RunConfig& cfg,
                    const EvalPolicy<E>& policy, int threads) {
  const auto goals = eval_goals(env, cfg);
  std::vector<EvalReport> reports;
  json j;
  j["seeds"] = json::array();
  for (int i = 0; i < cfg.eval.seeds; ++i) {
    reports.push_back(evaluate(env, policy, goals, cfg.eval.trials, eval_seed(cfg, i), threads));
    j["seeds"].push_back(reports.back().to_json());
    auto csv = run.open(prefix + "eval_" + std::to_string(i) + ".csv");
    reports.back().write_csv(csv);
  }
  j["across_seeds"] = across_seeds(reports);
  j["policy"] = cfg.eval.horizon > 0 ? "countdown from h=" + std::to_string(cfg.eval.horizon) : "horizon-free";
  run.write(prefix + "eval.json", j.dump(2) + "\n");
  return j;
}

void print_eval(const json& j) {
  for (auto& [tag, st] : j.at("across_seeds").items())
    std::cout << std::left << std::setw(10) << tag << " success " << std::fixed << std::setprecision(2)
              << st.at("mean").get<double>() << "% +- " << st.at("std").get<double>() << " over "
              << st.at("seeds").get<int>() << " seed(s)\n";
  std::cout.unsetf(std::ios::floatfield);
}

int cmd_eval(const Options& o, const std::vector<std::string>& argv) {
  if (o.checkpoint.empty() == !o.oracle) throw UsageError("eval needs exactly one of --checkpoint or --oracle");
  const RunConfig cfg = resolve_config(o, true);
  return with_env(cfg, [&](const auto& env) -> int {
    using E = std::decay_t<decltype(env)>;
    Run run(make_run_dir(o.out, cfg.train.seed), "eval", argv, cfg);
    json extra;
    json j;
    if (o.oracle) {
      if constexpr (Enumerable<E>) {
        const auto table = compute_c_star(make_finite_mdp(env), cfg.train.h_max, {o.threads});
        Conditioning cond;
        cond.h_max = cfg.train.h_max;
        j = run_evaluation(run, "", env, cfg, eval_policy(env, cfg, OracleValues<E>(env, table), cond), o.threads);
        extra["source"] = "oracle C*";
      } else {
        throw UsageError("--oracle needs an enumerable environment");
      }
    } else {
      const auto m = load_model(env, o.checkpoint);
      const LearnedValues<E> values(env, *m.ckpt.fn, m.cond, cfg.train.clip);
      j = run_evaluation(run, "", env, cfg, eval_policy(env, cfg, values, m.cond), o.threads);
      extra["source"] = fs::absolute(checkpoint_path(o.checkpoint)).string();
    }
    print_eval(j);
    run.finish(spec_hash(env.spec()), extra);
    return 0;
  });
}

// ---------------------------------------------------------------------------
// oracle

template <class E>
std::string state_text(const E&, const typename E::State& s) {
  json j;
  to_json(j, s);
  return j.dump();
}

int cmd_oracle(const Options& o, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(o, false);
  if (cfg.env.kind != EnvKind::grid) throw UsageError("the oracle needs an enumerable environment");
  GridLayout layout = cfg.env.grid;
  layout.name = cfg.env.name;
  const GridWorld env(layout);
  const auto mdp = make_finite_mdp(env);
  const Variant v = cfg.train.variant;
  const int h = cfg.train.h_max;
  const OracleOptions opt{o.threads};
  ExactTable table = [&] {
    switch (v) {
      case Variant::c: return compute_c_star(mdp, h, opt);
      case Variant::a: return compute_a_star(mdp, h, opt);
      case Variant::d: return compute_d_star(mdp);
      case Variant::q: return compute_q_star(mdp, cfg.train.gamma);
    }
    throw std::logic_error("variant");
  }();

  Run run(make_run_dir(o.out, cfg.train.seed), "oracle", argv, cfg);
  std::size_t rows = 0;
  {
    auto csv = run.open("table.csv");
    const bool by_gamma = v == Variant::d || v == Variant::q;
    csv << "state,action,goal," << (by_gamma ? "gamma" : "horizon") << ",value\n";
    csv << std::setprecision(17);
    for (std::size_t g = 0; g < table.goals(); ++g)
      for (std::size_t k = 0; k < table.depth(); ++k)
        for (std::size_t s = 0; s < table.states(); ++s)
          for (std::size_t a = 0; a < table.actions(); ++a) {
            csv << '"' << state_text(env, env.state_at(s)) << "\"," << a << ",\"" << state_text(env, env.goal_at(g))
                << "\",";
            if (by_gamma)
              csv << table.gammas.at(k);
            else
              csv << k;
            csv << ',' << table(s, a, g, k) << '\n';
            ++rows;
          }
  }

  json summary;
  summary["variant"] = std::string(to_string(v));
  summary["rows"] = rows;
  summary["states"] = table.states();
  summary["actions"] = table.actions();
  summary["goals"] = table.goals();
  summary["depth"] = table.depth();
  summary["deterministic"] = table.deterministic();
  std::size_t violations = 0;
  double worst = 0.0;
  if (v != Variant::q) {
    worst = max_monotonicity_violation(table);
    for (std::size_t g = 0; g < table.goals(); ++g)
      for (std::size_t k = 0; k + 1 < table.depth(); ++k)
        for (std::size_t s = 0; s < table.states(); ++s)
          for (std::size_t a = 0; a < table.actions(); ++a)
            if (table(s, a, g, k + 1) < table(s, a, g, k) - 1e-12) ++violations;
  }
  summary["monotonicity"] = {{"axis", v == Variant::d ? "gamma" : "horizon"},
                             {"violations", violations},
                             {"max_violation", worst},
                             {"tolerance", 1e-12}};
  if (v == Variant::c) {
    Rng unused(0);
    const auto start = env.initial_state(unused, Phase::test);
    json mh = json::array();
    for (std::size_t g = 0; g < table.goals(); ++g) {
      json row{{"goal", env.goal_at(g)}};
      if (table.deterministic()) {
        const auto m = min_horizon(table, env.state_index(start), g);
        row["min_horizon"] = m ? json(*m) : json(nullptr);
      } else {
        row["min_horizon"] = nullptr;  // undefined for stochastic kernels
      }
      row["c_star_at_h_max"] = table.max_action(env.state_index(start), g, table.depth() - 1);
      mh.push_back(row);
    }
    summary["from_start"] = {{"start", start}, {"goals", mh}};
  }
  if (!table.converged.empty()) {
    bool all = true;
    for (auto c : table.converged) all = all && c;
    summary["value_iteration_converged"] = all;
  }
  run.write("summary.json", summary.dump(2) + "\n");
  std::cout << "rows: " << rows << '\n' << "violations: " << violations << '\n';
  run.finish(spec_hash(env.spec()));
  return 0;
}

// ---------------------------------------------------------------------------
// compare

std::vector<Variant> parse_variants(const std::string& s) {
  std::vector<Variant> out;
  for (const auto& part : detail::split(s, ',')) {
    try {
      out.push_back(parse_variant(detail::trim(part)));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--variants: ") + e.what());
    }
  }
  if (out.empty()) throw UsageError("--variants is empty");
  return out;
}

int cmd_compare(const Options& o, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(o, false);
  const auto variants = parse_variants(o.variants);
  if (cfg.eval.horizon > 0) throw UsageError("compare evaluates horizon-free policies; set eval.horizon = 0");
  return with_env(cfg, [&](const auto& env) -> int {
    using E = std::decay_t<decltype(env)>;
    Run run(make_run_dir(o.out, cfg.train.seed), "compare", argv, cfg);
    json rows = json::array();
    std::ostringstream table;
    table << "variant,success_rate,success_std,mean_length,mean_final_distance,train_seconds\n";
    for (const Variant v : variants) {
      RunConfig vc = cfg;
      vc.train.variant = v;
      const std::string name(to_string(v));
      const auto r = train_into(run, name + "/", env, train_config(vc), o);
      const LearnedValues<E> values(env, *r.fn, r.cond, vc.train.clip);
      const auto ej = run_evaluation(run, name + "/", env, vc, eval_policy(env, vc, values, r.cond), o.threads);
      const auto& first = ej.at("seeds").at(0).at("overall");
      const auto& agg = ej.at("across_seeds").at("overall");
      json row{{"variant", name},
               {"success_rate", agg.at("mean")},
               {"success_std", agg.at("std")},
               {"mean_length", first.at("mean_length")},
               {"mean_final_distance", first.at("mean_final_distance")},
               {"train_seconds", r.report.wall_seconds}};
      rows.push_back(row);
      table << name << ',' << EvalReport::format_number(row["success_rate"].get<double>()) << ','
            << EvalReport::format_number(row["success_std"].get<double>()) << ',';
      if (!row["mean_length"].is_null()) table << EvalReport::format_number(row["mean_length"].get<double>());
      table << ',' << EvalReport::format_number(row["mean_final_distance"].get<double>()) << ','
            << EvalReport::format_number(r.report.wall_seconds) << '\n';
    }
    std::vector<json> sorted(rows.begin(), rows.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const json& a, const json& b) {
      return a["success_rate"].get<double>() > b["success_rate"].get<double>();
    });
    std::string ordering;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i) {
        const bool tie = sorted[i]["success_rate"] == sorted[i - 1]["success_rate"];
        ordering += tie ? " = " : " > ";
      }
      ordering += sorted[i]["variant"].get<std::string>();
    }
    run.write("compare.csv", table.str());
    run.write("compare.json", json{{"rows", rows}, {"ordering", ordering}}.dump(2) + "\n");
    std::cout << table.str() << "ordering: " << ordering << '\n';
    run.finish(spec_hash(env.spec()));
    return 0;
  });
}

// ---------------------------------------------------------------------------
// plot

std::vector<std::size_t> plot_indices(const Options& o, const Conditioning& cond) {
  std::vector<std::size_t> ks;
  if (!o.horizons.empty()) {
    for (int h : o.horizons) {
      if (h < 0 || static_cast<std::size_t>(h) >= cond.depth())
        throw UsageError("--horizons entry " + std::to_string(h) + " outside the model's index range");
      ks.push_back(static_cast<std::size_t>(h));
    }
    return ks;
  }
  const std::size_t last = cond.depth() - 1;
  if (horizon_indexed(cond.variant)) {
    ks = {1, std::max<std::size_t>(1, last / 4), std::max<std::size_t>(1, last / 2), last};
  } else {
    ks = {0, last / 2, last};
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

template <class E>
typename E::Goal plot_goal(const E& env, const RunConfig& cfg, const Options& o) {
  if (!o.goal.empty()) {
    const auto parts = detail::split(o.goal, ',');
    if (parts.size() != 2) throw UsageError("--goal expects x,y");
    return goal_from<E>({detail::to_double("--goal", detail::trim(parts[0])),
                         detail::to_double("--goal", detail::trim(parts[1]))});
  }
  const auto goals = eval_goals(env, cfg);
  if constexpr (Enumerable<E>) {
    // farthest goal from the start under the env metric
    Rng unused(0);
    const auto s = env.initial_state(unused, Phase::test);
    auto best = goals.front().goal;
    for (const auto& g : goals)
      if (!env.is_terminal(g.goal) && env.distance(s, g.goal) > env.distance(s, best)) best = g.goal;
    return best;
  } else {
    return goals.back().goal;
  }
}

std::array<double, 2> xy(const Cell& c) { return {static_cast<double>(c.x), static_cast<double>(c.y)}; }
std::array<double, 2> xy(const DubinsState& s) { return {s.x, s.y}; }
std::array<double, 2> xy(const Point& p) { return {p.x, p.y}; }

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

template <class V>
void plot_grid(Run& run, const GridWorld& env, const RunConfig& cfg, const Options& o, const V& values,
               const Conditioning& cond) {
  Rng unused(0);
  const Cell start = env.initial_state(unused, Phase::test);
  const Cell goal = plot_goal(env, cfg, o);
  const auto ks = plot_indices(o, cond);
  json index = json::array();
  for (std::size_t k : ks) {
    const auto m = grid_heatmap(env, values, start, k);
    const std::string stem = "heatmap_k" + std::to_string(k);
    {
      auto csv = run.open(stem + ".csv");
      write_matrix_csv(csv, m);
    }
    auto canvas = svg::heatmap(m, -0.5, -0.5, 1.0, 1.0,
                               "max_a value from (" + std::to_string(start.x) + "," + std::to_string(start.y) +
                                   "), index " + std::to_string(k));
    canvas.marker({xy(start), "#d62728", "start"}, 4.0);
    run.write(stem + ".svg", canvas.str());
    index.push_back({{"k", k}, {"heatmap", stem}});

    if (!horizon_indexed(cond.variant) || k == 0) continue;
    // greedy arrows at horizon k for the plot goal, with the most likely path
    auto map = svg::grid_map(env, "greedy actions at h=" + std::to_string(k) + " toward (" + std::to_string(goal.x) +
                                      "," + std::to_string(goal.y) + ")");
    for (const Cell c : env.cells()) {
      if (env.is_terminal(c) || c == goal) continue;
      const auto d = env.action_delta(greedy_action(values, c, goal, k));
      map.arrow({{c.x - 0.3 * d[0], c.y - 0.3 * d[1]}, {0.6 * d[0], 0.6 * d[1]}});
    }
    const auto tr = most_likely_trajectory(env, values, start, goal, static_cast<int>(k));
    svg::Polyline line{{}, "#d62728", 3.0};
    for (const Cell c : tr.states) line.points.push_back(xy(c));
    map.polyline(line);
    map.marker({xy(start), "#2ca02c", "start"});
    map.marker({xy(goal), "#ff7f0e", "goal"});
    const std::string pstem = "policy_h" + std::to_string(k);
    run.write(pstem + ".svg", map.str());
    {
      auto csv = run.open("trajectory_h" + std::to_string(k) + ".csv");
      write_trajectory_csv(csv, tr.states, tr.actions);
    }
    index.back()["policy"] = pstem;
    index.back()["most_likely_length"] = tr.actions.size();
    index.back()["reaches_goal"] = env.goal_check(tr.states.back(), goal);
  }
  // horizon-free sampled rollout
  const auto pol = horizon_free_eval_policy(env, values, selector_for(cfg, cond));
  const auto [states, actions] = rollout_path<GridWorld>(env, pol, goal, cfg.train.seed);
  auto map = svg::grid_map(env, "horizon-free rollout");
  svg::Polyline line{{}, "#1f77b4", 3.0};
  for (const Cell c : states) line.points.push_back(xy(c));
  map.polyline(line);
  map.marker({xy(start), "#2ca02c", "start"});
  map.marker({xy(goal), "#ff7f0e", "goal"});
  run.write("trajectory.svg", map.str());
  {
    auto csv = run.open("trajectory.csv");
    write_trajectory_csv(csv, states, actions);
  }
  run.write("plots.json", json{{"goal", goal}, {"start", start}, {"indices", index}}.dump(2) + "\n");
}

template <class V>
void plot_dubins(Run& run, const DubinsCar& env, const RunConfig& cfg, const Options& o, const V& values,
                 const Conditioning& cond) {
  Rng unused(0);
  const DubinsState start = env.initial_state(unused, Phase::test);
  constexpr int kResolution = 30;
  const double cell = env.layout().size / kResolution;
  for (std::size_t k : plot_indices(o, cond)) {
    const auto m = dubins_heatmap(env, values, start, k, kResolution);
    const std::string stem = "heatmap_k" + std::to_string(k);
    {
      auto csv = run.open(stem + ".csv");
      write_matrix_csv(csv, m);
    }
    auto canvas = svg::heatmap(m, 0.0, 0.0, cell, cell, "max_a value from the start, index " + std::to_string(k), 14.0);
    for (const auto& w : env.layout().walls) canvas.line({w.a.x, w.a.y}, {w.b.x, w.b.y}, "#d62728", 3.0);
    canvas.marker({xy(start), "#d62728", "start"}, 4.0);
    run.write(stem + ".svg", canvas.str());
  }
  const auto pol = horizon_free_eval_policy(env, values, selector_for(cfg, cond));
  auto map = svg::dubins_map(env, "horizon-free rollouts");
  const auto goals = eval_goals(env, cfg);
  for (std::size_t i = 0; i < goals.size(); ++i) {
    const auto [states, actions] = rollout_path<DubinsCar>(env, pol, goals[i].goal, cfg.train.seed + i);
    svg::Polyline line{{}, kPalette[i % std::size(kPalette)], 2.0};
    for (const auto& s : states) line.points.push_back(xy(s));
    map.polyline(line);
    map.marker({xy(goals[i].goal), kPalette[i % std::size(kPalette)], goals[i].tag}, 4.0);
    auto csv = run.open("trajectory_" + std::to_string(i) + ".csv");
    write_trajectory_csv(csv, states, actions);
  }
  map.marker({xy(start), "#000000", "start"}, 5.0);
  run.write("trajectories.svg", map.str());
}

std::vector<EpisodeRecord> read_metrics(const fs::path& p) {
  std::vector<EpisodeRecord> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    EpisodeRecord r;
    r.episode = j.at("episode").get<int>();
    r.success = j.at("success").get<bool>();
    r.length = j.at("length").get<int>();
    r.mean_loss = j.at("mean_loss").get<double>();
    r.epsilon = j.at("epsilon").get<double>();
    r.offline = j.at("offline").get<bool>();
    out.push_back(r);
  }
  return out;
}

int cmd_plot(const Options& o, const std::vector<std::string>& argv) {
  if (o.checkpoint.empty() == !o.oracle) throw UsageError("plot needs exactly one of --checkpoint or --oracle");
  const RunConfig cfg = resolve_config(o, true);
  return with_env(cfg, [&](const auto& env) -> int {
    using E = std::decay_t<decltype(env)>;
    Run run(make_run_dir(o.out, cfg.train.seed), "plot", argv, cfg);
    auto draw = [&](const auto& values, const Conditioning& cond) {
      if constexpr (std::is_same_v<E, GridWorld>)
        plot_grid(run, env, cfg, o, values, cond);
      else
        plot_dubins(run, env, cfg, o, values, cond);
    };
    if (o.oracle) {
      if constexpr (Enumerable<E>) {
        const auto table = compute_c_star(make_finite_mdp(env), cfg.train.h_max, {o.threads});
        Conditioning cond;
        cond.h_max = cfg.train.h_max;
        draw(OracleValues<E>(env, table), cond);
      } else {
        throw UsageError("--oracle needs an enumerable environment");
      }
    } else {
      const auto m = load_model(env, o.checkpoint);
      draw(LearnedValues<E>(env, *m.ckpt.fn, m.cond, cfg.train.clip), m.cond);
      const fs::path metrics = m.run_dir / "metrics.jsonl";
      if (fs::exists(metrics)) run.write("learning_curve.svg", svg::learning_curve(read_metrics(metrics)));
    }
    run.finish(spec_hash(env.spec()));
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  Options o;
  CLI::App app{"Cumulative accessibility estimation: training, evaluation, exact oracle and plots"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CAE_VERSION);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--env", o.env, "preset environment name");
    sub->add_option("--config", o.config, "key = value configuration file");
    sub->add_option("--set", o.sets, "override one configuration key (key=value); repeatable");
    sub->add_option("--variant", o.variant, "c, a, d or q");
    sub->add_option("--seed", o.seed, "seed for every random stream");
    sub->add_option("--out", o.out, "parent directory for run directories")->capture_default_str();
    sub->add_option("--threads", o.threads, "worker threads for oracle slices and eval rollouts")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--h-max", o.h_max, "largest horizon")->check(CLI::PositiveNumber);
    sub->add_option("--alpha", o.alpha, "safety threshold of the horizon-free policy")
        ->check(CLI::Range(0.0, 1.0));
  };

  auto* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint, metrics and episode log");
  common(train_cmd);
  train_cmd->add_option("--replay-in", o.replay_in, "train offline on an episodes.jsonl dump");

  auto* eval_cmd = app.add_subcommand("eval", "roll out a policy over the configured goal strata");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file or run directory");
  eval_cmd->add_flag("--oracle", o.oracle, "use the exact C* table instead of a checkpoint");

  auto* oracle_cmd = app.add_subcommand("oracle", "exact tables by dynamic programming");
  common(oracle_cmd);

  auto* compare_cmd = app.add_subcommand("compare", "train and evaluate several variants under one config");
  common(compare_cmd);
  compare_cmd->add_option("--variants", o.variants, "comma-separated variants")->capture_default_str();
  compare_cmd->add_option("--replay-in", o.replay_in, "train offline on an episodes.jsonl dump");

  auto* plot_cmd = app.add_subcommand("plot", "heatmaps, policy arrows, trajectories and learning curves");
  common(plot_cmd);
  plot_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file or run directory");
  plot_cmd->add_flag("--oracle", o.oracle, "use the exact C* table instead of a checkpoint");
  plot_cmd->add_option("--horizons", o.horizons, "conditioning indices to draw")->delimiter(',');
  plot_cmd->add_option("--goal", o.goal, "goal x,y for policy and trajectory plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return cmd_train(o, args);
    if (*eval_cmd) return cmd_eval(o, args);
    if (*oracle_cmd) return cmd_oracle(o, args);
    if (*compare_cmd) return cmd_compare(o, args);
    if (*plot_cmd) return cmd_plot(o, args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
