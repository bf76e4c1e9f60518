#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cae/rng.hpp"

namespace cae {

/// Logistic squash with the argument clipped so the result stays strictly
/// inside (0, 1) in double precision.
inline double squash(double logit) {
  const double z = std::clamp(logit, -35.0, 35.0);
  return 1.0 / (1.0 + std::exp(-z));
}

/// A batch of (state, goal, conditioning) queries. Tabular backends read the
/// indices; networks read the encoded features followed by the scalar
/// conditioning value.
class QueryBatch {
 public:
  explicit QueryBatch(std::size_t feature_size = 0) : feature_size_(feature_size) {}

  void clear() {
    state_.clear();
    goal_.clear();
    cond_index_.clear();
    cond_.clear();
    features_.clear();
  }

  void reserve(std::size_t n) {
    state_.reserve(n);
    goal_.reserve(n);
    cond_index_.reserve(n);
    cond_.reserve(n);
    features_.reserve(n * feature_size_);
  }

  void add(std::size_t state, std::size_t goal, std::size_t cond_index, double cond,
           std::span<const double> features) {
    if (features.size() != feature_size_) throw std::invalid_argument("QueryBatch: feature size mismatch");
    state_.push_back(state);
    goal_.push_back(goal);
    cond_index_.push_back(cond_index);
    cond_.push_back(cond);
    features_.insert(features_.end(), features.begin(), features.end());
  }

  /// Appends a query and returns a writable span for its features.
  std::span<double> add_uninitialized(std::size_t state, std::size_t goal, std::size_t cond_index, double cond) {
    state_.push_back(state);
    goal_.push_back(goal);
    cond_index_.push_back(cond_index);
    cond_.push_back(cond);
    features_.resize(features_.size() + feature_size_, 0.0);
    return {features_.data() + features_.size() - feature_size_, feature_size_};
  }

  std::size_t size() const { return state_.size(); }
  std::size_t feature_size() const { return feature_size_; }
  std::size_t state(std::size_t i) const { return state_[i]; }
  std::size_t goal(std::size_t i) const { return goal_[i]; }
  std::size_t cond_index(std::size_t i) const { return cond_index_[i]; }
  double cond(std::size_t i) const { return cond_[i]; }
  std::span<const double> features(std::size_t i) const {
    return {features_.data() + i * feature_size_, feature_size_};
  }

 private:
  std::size_t feature_size_;
  std::vector<std::size_t> state_, goal_, cond_index_;
  std::vector<double> cond_;
  std::vector<double> features_;
};

/// Parameter gradient. Tabular backends fill it sparsely and list the
/// touched coordinates so updates and resets stay proportional to the batch.
struct Gradient {
  std::vector<double> values;
  std::vector<std::size_t> touched;
  bool sparse = false;

  void prepare(std::size_t n, bool is_sparse) {
    if (values.size() != n) {
      values.assign(n, 0.0);
      touched.clear();
    } else {
      reset();
    }
    sparse = is_sparse;
  }

  void reset() {
    if (sparse) {
      for (auto i : touched) values[i] = 0.0;
    } else {
      std::fill(values.begin(), values.end(), 0.0);
    }
    touched.clear();
  }

  bool finite() const {
    if (sparse) return std::all_of(touched.begin(), touched.end(), [&](auto i) { return std::isfinite(values[i]); });
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Function approximator for an accessibility function with one output head
/// per action: (s, g, cond) -> vector of probabilities.
class AccessFn {
 public:
  virtual ~AccessFn() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t heads() const = 0;
  /// Pre-squash outputs, heads x batch.
  virtual void logits(const QueryBatch& batch, Eigen::MatrixXd& out) const = 0;
  /// Adds sum_i dlogit[i] * d logit_{head[i]}(query i) / d params to grad.
  virtual void backprop(const QueryBatch& batch, std::span<const std::size_t> head, std::span<const double> dlogit,
                        Gradient& grad) const = 0;
  virtual bool sparse_gradients() const = 0;
  virtual std::span<double> params() = 0;
  virtual std::span<const double> params() const = 0;
  virtual std::unique_ptr<AccessFn> clone() const = 0;
  virtual nlohmann::json architecture() const = 0;

  void probabilities(const QueryBatch& batch, Eigen::MatrixXd& out) const {
    logits(batch, out);
    out = out.unaryExpr([](double z) { return squash(z); });
  }
};

/// Exact-capacity backend: one logit per (state, action, goal, cond index),
/// zero-initialized so every output starts at 0.5.
class TabularFn final : public AccessFn {
 public:
  TabularFn(std::size_t states, std::size_t actions, std::size_t goals, std::size_t depth)
      : states_(states), actions_(actions), goals_(goals), depth_(depth), theta_(states * actions * goals * depth, 0.0) {
    if (theta_.empty()) throw std::invalid_argument("TabularFn: empty table");
  }

  std::string kind() const override { return "tabular"; }
  std::size_t heads() const override { return actions_; }
  bool sparse_gradients() const override { return true; }
  std::size_t depth() const { return depth_; }

  std::size_t offset(std::size_t s, std::size_t g, std::size_t k) const {
    if (s >= states_ || g >= goals_ || k >= depth_) throw std::out_of_range("TabularFn: query outside the table");
    return ((g * depth_ + k) * states_ + s) * actions_;
  }

  void logits(const QueryBatch& batch, Eigen::MatrixXd& out) const override {
    out.resize(static_cast<Eigen::Index>(actions_), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t o = offset(batch.state(i), batch.goal(i), batch.cond_index(i));
      for (std::size_t a = 0; a < actions_; ++a)
        out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = theta_[o + a];
    }
  }

  void backprop(const QueryBatch& batch, std::span<const std::size_t> head, std::span<const double> dlogit,
                Gradient& grad) const override {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t p = offset(batch.state(i), batch.goal(i), batch.cond_index(i)) + head[i];
      if (grad.values[p] == 0.0) grad.touched.push_back(p);
      grad.values[p] += dlogit[i];
      // a coordinate whose accumulated value returns to exactly 0 may be listed twice
    }
  }

  std::span<double> params() override { return theta_; }
  std::span<const double> params() const override { return theta_; }
  std::unique_ptr<AccessFn> clone() const override { return std::make_unique<TabularFn>(*this); }

  nlohmann::json architecture() const override {
    return {{"kind", "tabular"}, {"states", states_}, {"actions", actions_}, {"goals", goals_}, {"depth", depth_}};
  }

 private:
  std::size_t states_, actions_, goals_, depth_;
  std::vector<double> theta_;
};

/// Feed-forward network, ReLU hidden layers, one logistic head per action.
/// Parameters are stored flat, layer by layer: weights (out x in,
/// row-major) then biases.
class MlpFn final : public AccessFn {
 public:
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// sizes = {input, hidden..., heads}
  explicit MlpFn(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("MlpFn: need at least input and output sizes");
    for (auto n : sizes_)
      if (n == 0) throw std::invalid_argument("MlpFn: zero-width layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weight_offset_.push_back(total);
      total += sizes_[l + 1] * sizes_[l];
      bias_offset_.push_back(total);
      total += sizes_[l + 1];
    }
    theta_.assign(total, 0.0);
  }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      auto w = weight(l);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
      auto b = bias(l);
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t layers() const { return sizes_.size() - 1; }
  std::size_t input_size() const { return sizes_.front(); }

  std::string kind() const override { return "mlp"; }
  std::size_t heads() const override { return sizes_.back(); }
  bool sparse_gradients() const override { return false; }

  void logits(const QueryBatch& batch, Eigen::MatrixXd& out) const override {
    Eigen::MatrixXd x = inputs(batch);
    for (std::size_t l = 0; l < layers(); ++l) {
      Eigen::MatrixXd z = weight(l) * x;
      z.colwise() += bias(l);
      if (l + 1 < layers()) z = z.cwiseMax(0.0);
      x = std::move(z);
    }
    out = std::move(x);
  }

  void backprop(const QueryBatch& batch, std::span<const std::size_t> head, std::span<const double> dlogit,
                Gradient& grad) const override {
    const auto n = static_cast<Eigen::Index>(batch.size());
    std::vector<Eigen::MatrixXd> act;  // act[l] = input to layer l
    act.reserve(layers());
    act.push_back(inputs(batch));
    for (std::size_t l = 0; l + 1 < layers(); ++l) {
      Eigen::MatrixXd z = weight(l) * act.back();
      z.colwise() += bias(l);
      act.push_back(z.cwiseMax(0.0));
    }
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(heads()), n);
    for (Eigen::Index i = 0; i < n; ++i)
      delta(static_cast<Eigen::Index>(head[static_cast<std::size_t>(i)]), i) = dlogit[static_cast<std::size_t>(i)];
    for (std::size_t l = layers(); l-- > 0;) {
      Eigen::Map<RowMat> gw(grad.values.data() + weight_offset_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
                            static_cast<Eigen::Index>(sizes_[l]));
      Eigen::Map<Eigen::VectorXd> gb(grad.values.data() + bias_offset_[l], static_cast<Eigen::Index>(sizes_[l + 1]));
      gw.noalias() += delta * act[l].transpose();
      gb += delta.rowwise().sum();
      if (l == 0) break;
      Eigen::MatrixXd back = weight(l).transpose() * delta;
      delta = back.cwiseProduct((act[l].array() > 0.0).cast<double>().matrix());
    }
  }

  std::span<double> params() override { return theta_; }
  std::span<const double> params() const override { return theta_; }
  std::unique_ptr<AccessFn> clone() const override { return std::make_unique<MlpFn>(*this); }
  nlohmann::json architecture() const override { return {{"kind", "mlp"}, {"sizes", sizes_}}; }

 private:
  Eigen::Map<RowMat> weight(std::size_t l) {
    return {theta_.data() + weight_offset_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
            static_cast<Eigen::Index>(sizes_[l])};
  }
  Eigen::Map<const RowMat> weight(std::size_t l) const {
    return {theta_.data() + weight_offset_[l], static_cast<Eigen::Index>(sizes_[l + 1]),
            static_cast<Eigen::Index>(sizes_[l])};
  }
  Eigen::Map<Eigen::VectorXd> bias(std::size_t l) {
    return {theta_.data() + bias_offset_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
  }
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const {
    return {theta_.data() + bias_offset_[l], static_cast<Eigen::Index>(sizes_[l + 1])};
  }

  Eigen::MatrixXd inputs(const QueryBatch& batch) const {
    if (batch.feature_size() + 1 != input_size()) throw std::invalid_argument("MlpFn: input size mismatch");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(input_size()), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto f = batch.features(i);
      for (std::size_t j = 0; j < f.size(); ++j)
        x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = f[j];
      x(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(i)) = batch.cond(i);
    }
    return x;
  }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> weight_offset_, bias_offset_;
  std::vector<double> theta_;
};

// ---------------------------------------------------------------------------
// Losses

enum class Loss { bce, squared };

inline void check_target(double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("target outside [0, 1]");
}

/// -[y log p + (1 - y) log(1 - p)]; affine in y.
inline double bce_loss(double p, double y) {
  check_target(y);
  return -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
}

/// d bce / d logit = p - y.
inline double bce_grad(double p, double y) {
  check_target(y);
  return p - y;
}

inline double squared_loss(double p, double y) { return (p - y) * (p - y); }

/// d (p - y)^2 / d logit through the logistic squash.
inline double squared_grad(double p, double y) { return 2.0 * (p - y) * p * (1.0 - p); }

inline double loss_value(Loss loss, double p, double y) {
  return loss == Loss::bce ? bce_loss(p, y) : squared_loss(p, y);
}
inline double loss_logit_grad(Loss loss, double p, double y) {
  return loss == Loss::bce ? bce_grad(p, y) : squared_grad(p, y);
}

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean loss over a batch and its parameter gradient.
struct BatchResult {
  double mean_loss = 0.0;
};

/// Gradient of the mean loss over the batch, where example i scores head
/// actions[i] against targets[i].
inline BatchResult backward(const AccessFn& fn, const QueryBatch& batch, std::span<const std::size_t> actions,
                            std::span<const double> targets, Loss loss, Gradient& grad) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("backward: empty batch");
  if (actions.size() != n || targets.size() != n) throw std::invalid_argument("backward: size mismatch");
  grad.prepare(fn.params().size(), fn.sparse_gradients());
  Eigen::MatrixXd logit;
  fn.logits(batch, logit);
  std::vector<double> dlogit(n);
  double total = 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (actions[i] >= fn.heads()) throw std::out_of_range("backward: action index out of range");
    const double p = squash(logit(static_cast<Eigen::Index>(actions[i]), static_cast<Eigen::Index>(i)));
    total += loss_value(loss, p, targets[i]);
    dlogit[i] = loss_logit_grad(loss, p, targets[i]) * scale;
  }
  fn.backprop(batch, actions, dlogit, grad);
  if (!grad.finite() || !std::isfinite(total)) throw NonFiniteGradient("backward: non-finite loss or gradient");
  return {total * scale};
}

// ---------------------------------------------------------------------------
// Optimization

enum class OptimizerKind { sgd, adam, average };

struct OptimState {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m, v;
};

/// theta <- theta - lr * update(grad); refuses non-finite gradients
/// without touching the parameters.
inline void apply_update(AccessFn& fn, const Gradient& grad, OptimState& opt) {
  auto theta = fn.params();
  if (grad.values.size() != theta.size()) throw std::invalid_argument("apply_update: gradient size mismatch");
  if (!grad.finite()) throw NonFiniteGradient("apply_update: non-finite gradient");
  if (opt.kind == OptimizerKind::average) throw std::invalid_argument("apply_update: averaging needs average_step");
  ++opt.step;
  auto each = [&](auto&& body) {
    if (grad.sparse) {
      for (auto i : grad.touched) body(i);
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) body(i);
    }
  };
  if (opt.kind == OptimizerKind::sgd) {
    if (grad.sparse) {
      // duplicates in `touched` must only be applied once
      std::vector<std::size_t> idx = grad.touched;
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
      for (auto i : idx) theta[i] -= opt.lr * grad.values[i];
    } else {
      each([&](std::size_t i) { theta[i] -= opt.lr * grad.values[i]; });
    }
    return;
  }
  if (opt.m.size() != theta.size()) {
    opt.m.assign(theta.size(), 0.0);
    opt.v.assign(theta.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  std::vector<std::size_t> idx;
  if (grad.sparse) {
    idx = grad.touched;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  }
  auto adam = [&](std::size_t i) {
    const double g = grad.values[i];
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
    theta[i] -= opt.lr * (opt.m[i] / c1) / (std::sqrt(opt.v[i] / c2) + opt.eps);
  };
  if (grad.sparse) {
    for (auto i : idx) adam(i);
  } else {
    for (std::size_t i = 0; i < theta.size(); ++i) adam(i);
  }
}

/// Tabular running mean in probability space: each sample moves its entry
/// by (y - p) / n, where n counts that entry's samples and saturates at
/// 1 / lr. The window keeps the average tracking a moving target network.
inline BatchResult average_step(TabularFn& fn, const QueryBatch& batch, std::span<const std::size_t> actions,
                                std::span<const double> targets, Loss loss, OptimState& opt) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("average_step: empty batch");
  if (actions.size() != n || targets.size() != n) throw std::invalid_argument("average_step: size mismatch");
  auto theta = fn.params();
  if (opt.v.size() != theta.size()) opt.v.assign(theta.size(), 0.0);
  const double window = std::max(1.0, 1.0 / opt.lr);
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (actions[i] >= fn.heads()) throw std::out_of_range("average_step: action index out of range");
    check_target(targets[i]);
    const std::size_t e = fn.offset(batch.state(i), batch.goal(i), batch.cond_index(i)) + actions[i];
    const double p = squash(theta[e]);
    total += loss_value(loss, p, targets[i]);
    opt.v[e] = std::min(opt.v[e] + 1.0, window);
    const double q = std::clamp(p + (targets[i] - p) / opt.v[e], lo, hi);
    theta[e] = std::log(q / (1.0 - q));
  }
  ++opt.step;
  if (!std::isfinite(total)) throw NonFiniteGradient("average_step: non-finite loss");
  return {total / static_cast<double>(n)};
}

/// Frozen snapshot of an approximator used to build bootstrap targets.
class TargetParams {
 public:
  explicit TargetParams(const AccessFn& source) : fn_(source.clone()) {}

  const AccessFn& fn() const { return *fn_; }
  std::span<const double> params() const { return fn_->params(); }

 private:
  std::unique_ptr<const AccessFn> fn_;
};

inline TargetParams copy_to_target(const AccessFn& fn) { return TargetParams(fn); }

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointFormat = 1;

inline std::unique_ptr<AccessFn> make_from_architecture(const nlohmann::json& arch) {
  const auto kind = arch.at("kind").get<std::string>();
  if (kind == "tabular")
    return std::make_unique<TabularFn>(arch.at("states").get<std::size_t>(), arch.at("actions").get<std::size_t>(),
                                       arch.at("goals").get<std::size_t>(), arch.at("depth").get<std::size_t>());
  if (kind == "mlp") return std::make_unique<MlpFn>(arch.at("sizes").get<std::vector<std::size_t>>());
  throw std::invalid_argument("checkpoint: unknown approximator kind '" + kind + "'");
}

struct Checkpoint {
  std::string variant;
  nlohmann::json encoding;
  std::unique_ptr<AccessFn> fn;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline nlohmann::json checkpoint_json(const std::string& variant, const nlohmann::json& encoding, const AccessFn& fn,
                                      std::uint64_t seed, std::uint64_t step) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormat;
  j["variant"] = variant;
  j["encoding"] = encoding;
  j["architecture"] = fn.architecture();
  const auto p = fn.params();
  j["params"] = std::vector<double>(p.begin(), p.end());
  j["seed"] = seed;
  j["step"] = step;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != kCheckpointFormat)
    throw std::invalid_argument("checkpoint: unsupported format_version");
  Checkpoint c;
  c.variant = j.at("variant").get<std::string>();
  c.encoding = j.at("encoding");
  c.fn = make_from_architecture(j.at("architecture"));
  const auto params = j.at("params").get<std::vector<double>>();
  auto dst = c.fn->params();
  if (params.size() != dst.size()) throw std::invalid_argument("checkpoint: parameter count does not match architecture");
  std::copy(params.begin(), params.end(), dst.begin());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.step = j.at("step").get<std::uint64_t>();
  return c;
}

}  // namespace cae
