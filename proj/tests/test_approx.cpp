#include <gtest/gtest.h>

#include <bit>
#include <numeric>

#include "cae/approx.hpp"

using namespace cae;

namespace {

QueryBatch random_batch(std::size_t features, std::size_t n, Rng& rng) {
  QueryBatch b(features);
  for (std::size_t i = 0; i < n; ++i) {
    auto f = b.add_uninitialized(0, 0, 0, rng.uniform());
    for (auto& x : f) x = rng.uniform(-1.0, 1.0);
  }
  return b;
}

double mean_loss(const AccessFn& fn, const QueryBatch& b, const std::vector<std::size_t>& acts,
                 const std::vector<double>& y, Loss loss) {
  Eigen::MatrixXd p;
  fn.probabilities(b, p);
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    total += loss_value(loss, p(static_cast<Eigen::Index>(acts[i]), static_cast<Eigen::Index>(i)), y[i]);
  return total / static_cast<double>(b.size());
}

}  // namespace

TEST(Squash, StrictlyInsideUnitInterval) {
  for (double z : {-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6}) {
    EXPECT_GT(squash(z), 0.0);
    EXPECT_LT(squash(z), 1.0);
  }
  EXPECT_EQ(squash(0.0), 0.5);
}

TEST(Tabular, ZeroInitIsHalfEverywhere) {
  const TabularFn t(4, 3, 4, 6);
  QueryBatch b(0);
  for (std::size_t s = 0; s < 4; ++s) b.add(s, 3 - s, s, 0.0, {});
  Eigen::MatrixXd p;
  t.probabilities(b, p);
  EXPECT_TRUE((p.array() == 0.5).all());
  b.add(0, 0, 6, 0.0, {});
  EXPECT_THROW(t.probabilities(b, p), std::out_of_range);
}

TEST(Tabular, SingleExampleTouchesOneEntry) {
  TabularFn t(3, 2, 3, 4);
  QueryBatch b(0);
  b.add(1, 2, 3, 0.0, {});
  Gradient g;
  const std::vector<std::size_t> acts{1};
  const std::vector<double> y{1.0};
  backward(t, b, acts, y, Loss::bce, g);
  int nonzero = 0;
  for (double v : g.values) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 1);
  EXPECT_DOUBLE_EQ(g.values[t.offset(1, 2, 3) + 1], -0.5);
}

TEST(Bce, Examples) {
  EXPECT_NEAR(bce_loss(0.5, 0.5), std::log(2.0), 1e-15);
  EXPECT_EQ(bce_grad(0.5, 0.5), 0.0);
  EXPECT_NEAR(bce_loss(0.5, 1.0), std::log(2.0), 1e-15);
  EXPECT_EQ(bce_grad(0.5, 1.0), -0.5);
  EXPECT_THROW(bce_loss(0.5, 1.5), std::invalid_argument);
  EXPECT_THROW(bce_grad(0.5, -0.1), std::invalid_argument);
}

TEST(Bce, AffineInTarget) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(0.01, 0.99), q = rng.uniform();
    const double mixed = q * bce_loss(p, 1.0) + (1 - q) * bce_loss(p, 0.0);
    EXPECT_NEAR(bce_loss(p, q), mixed, 1e-12);
    EXPECT_NEAR(bce_grad(p, q), q * bce_grad(p, 1.0) + (1 - q) * bce_grad(p, 0.0), 1e-15);
  }
}

TEST(Mlp, ParameterCountMatchesArchitecture) {
  const MlpFn net({5, 7, 3, 2});
  EXPECT_EQ(net.params().size(), 7u * 5 + 7 + 3u * 7 + 3 + 2u * 3 + 2);
  EXPECT_EQ(net.heads(), 2u);
  EXPECT_THROW(MlpFn({4}), std::invalid_argument);
  EXPECT_THROW(MlpFn({4, 0, 2}), std::invalid_argument);
}

TEST(Mlp, ForwardIsRepeatableAndBounded) {
  Rng rng(5);
  MlpFn net({4, 16, 8, 3});
  net.initialize(rng);
  const auto b = random_batch(3, 20, rng);
  Eigen::MatrixXd p1, p2;
  net.probabilities(b, p1);
  net.probabilities(b, p2);
  EXPECT_TRUE(p1 == p2);
  EXPECT_TRUE((p1.array() > 0.0).all() && (p1.array() < 1.0).all());
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  Rng rng(2024);
  for (int probe = 0; probe < 10; ++probe) {
    const std::size_t in = 2 + rng.below(5), h1 = 3 + rng.below(6), h2 = 2 + rng.below(5), out = 1 + rng.below(4);
    MlpFn net({in + 1, h1, h2, out});
    net.initialize(rng);
    const auto b = random_batch(in, 10, rng);
    std::vector<std::size_t> acts;
    std::vector<double> y;
    for (std::size_t i = 0; i < b.size(); ++i) {
      acts.push_back(rng.below(out));
      y.push_back(rng.uniform());
    }
    for (Loss loss : {Loss::bce, Loss::squared}) {
      Gradient g;
      backward(net, b, acts, y, loss, g);
      auto theta = net.params();
      double worst = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + 1e-5;
        const double up = mean_loss(net, b, acts, y, loss);
        theta[i] = saved - 1e-5;
        const double down = mean_loss(net, b, acts, y, loss);
        theta[i] = saved;
        const double numeric = (up - down) / 2e-5;
        const double denom = std::max({std::abs(numeric), std::abs(g.values[i]), 1e-7});
        worst = std::max(worst, std::abs(numeric - g.values[i]) / denom);
      }
      EXPECT_LE(worst, 1e-4) << "probe " << probe;
    }
  }
}

TEST(Backward, IdenticalBatchesGiveIdenticalGradients) {
  Rng rng(3);
  MlpFn net({4, 6, 2});
  net.initialize(rng);
  const auto b = random_batch(3, 8, rng);
  const std::vector<std::size_t> acts(8, 1);
  const std::vector<double> y(8, 0.3);
  Gradient g1, g2;
  backward(net, b, acts, y, Loss::bce, g1);
  backward(net, b, acts, y, Loss::bce, g2);
  EXPECT_EQ(g1.values, g2.values);
  EXPECT_THROW(backward(net, QueryBatch(3), {}, {}, Loss::bce, g1), std::invalid_argument);
}

TEST(Backward, NonFiniteAborts) {
  MlpFn net({2, 2});
  net.params()[0] = std::numeric_limits<double>::quiet_NaN();
  QueryBatch b(1);
  b.add(0, 0, 0, 0.5, std::vector<double>{1.0});
  Gradient g;
  const std::vector<std::size_t> acts{0};
  const std::vector<double> y{1.0};
  EXPECT_THROW(backward(net, b, acts, y, Loss::bce, g), NonFiniteGradient);
}

TEST(Update, SgdAndAdamMoveDownhill) {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    Rng rng(4);
    MlpFn net({3, 8, 2});
    net.initialize(rng);
    const auto b = random_batch(2, 16, rng);
    const std::vector<std::size_t> acts(16, 0);
    const std::vector<double> y(16, 0.9);
    OptimState opt;
    opt.kind = kind;
    opt.lr = 0.05;
    Gradient g;
    const double before = mean_loss(net, b, acts, y, Loss::bce);
    for (int i = 0; i < 50; ++i) {
      backward(net, b, acts, y, Loss::bce, g);
      apply_update(net, g, opt);
    }
    EXPECT_LT(mean_loss(net, b, acts, y, Loss::bce), before);
    EXPECT_EQ(opt.step, 50u);
  }
}

TEST(Update, TabularFitsOracleValues) {
  // capacity check: regression onto arbitrary probabilities
  Rng rng(6);
  TabularFn t(5, 2, 5, 3);
  std::vector<double> truth(t.params().size());
  for (auto& v : truth) v = rng.uniform();
  QueryBatch b(0);
  std::vector<std::size_t> acts;
  std::vector<double> y;
  for (std::size_t g = 0; g < 5; ++g)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
          b.add(s, g, k, 0.0, {});
          acts.push_back(a);
          y.push_back(truth[t.offset(s, g, k) + a]);
        }
  OptimState opt;
  opt.lr = 300.0;  // mean gradient over 150 examples
  Gradient grad;
  for (int i = 0; i < 4000; ++i) {
    backward(t, b, acts, y, Loss::bce, grad);
    apply_update(t, grad, opt);
  }
  Eigen::MatrixXd p;
  t.probabilities(b, p);
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    worst = std::max(worst, std::abs(p(static_cast<Eigen::Index>(acts[i]), static_cast<Eigen::Index>(i)) - y[i]));
  EXPECT_LE(worst, 1e-3);
}

TEST(Target, SnapshotSemantics) {
  Rng rng(7);
  MlpFn net({3, 4, 2});
  net.initialize(rng);
  const auto target = copy_to_target(net);
  const std::vector<double> before(net.params().begin(), net.params().end());
  EXPECT_TRUE(std::equal(before.begin(), before.end(), target.params().begin()));
  net.params()[0] += 1.0;
  EXPECT_EQ(target.params()[0], before[0]);
  const auto again = copy_to_target(net);
  const auto twice = copy_to_target(again.fn());
  EXPECT_TRUE(std::equal(again.params().begin(), again.params().end(), twice.params().begin()));
}

TEST(Checkpoint, BitExactRoundTrip) {
  Rng rng(8);
  MlpFn net({5, 9, 3});
  net.initialize(rng);
  const nlohmann::json enc{{"features", 4}};
  const auto j = checkpoint_json("c", enc, net, 42, 1234);
  const auto restored = checkpoint_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(restored.variant, "c");
  EXPECT_EQ(restored.seed, 42u);
  EXPECT_EQ(restored.step, 1234u);
  EXPECT_EQ(restored.encoding, enc);
  const auto a = net.params(), b = restored.fn->params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
  EXPECT_EQ(checkpoint_json("c", enc, *restored.fn, 42, 1234).dump(), j.dump());
}

TEST(Checkpoint, RejectsMismatch) {
  TabularFn t(2, 2, 2, 2);
  auto j = checkpoint_json("c", {}, t, 0, 0);
  j["params"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j), std::invalid_argument);
  j = checkpoint_json("c", {}, t, 0, 0);
  j["format_version"] = 99;
  EXPECT_THROW(checkpoint_from_json(j), std::invalid_argument);
}
