#include <doctest.h>

#include <cmath>
#include <random>

#include "cfglearn/error.hpp"
#include "cfglearn/logreg.hpp"

using namespace cfglearn;

namespace {

Matrix matrix(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  for (auto r : rows) m.append_row(std::vector<double>(r));
  return m;
}

Matrix column(std::vector<double> v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

// Plain-formula log-likelihood for moderate z, used as a cross-check.
double naive_ll(const LinearModel& m, const Matrix& X, const std::vector<double>& y) {
  double total = 0;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double z = m.b;
    for (std::size_t j = 0; j < X.cols(); ++j) z += m.w[j] * X(i, j);
    const double s = 1.0 / (1.0 + std::exp(-z));
    total += y[i] * std::log(s) + (1 - y[i]) * std::log(1 - s);
  }
  return total;
}

TrainingSet random_set(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> u(-2, 2), p(0, 1);
  TrainingSet ts{Matrix(n, m), Matrix(n, 1)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) ts.X(i, j) = u(rng);
    ts.Y(i, 0) = p(rng);
  }
  return ts;
}

}  // namespace

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  const double tiny = sigmoid(-1000.0);
  CHECK(tiny > 0.0);
  CHECK(tiny <= 1e-300);
  CHECK(sigmoid(1000.0) < 1.0);
  for (double z = -40; z <= 40; z += 0.37) {
    CHECK(std::abs(sigmoid(-z) - (1.0 - sigmoid(z))) <= 1e-15);
    CHECK(sigmoid(z) <= sigmoid(z + 0.37));
  }
  CHECK(std::isfinite(log_sigmoid(-1e6)));
  CHECK(log_sigmoid(-1e6) == doctest::Approx(-1e6));
}

TEST_CASE("predict") {
  CHECK(predict(LinearModel{{0.0, 0.0}, 0.0}, std::vector<double>{3.0, -4.0}) == 0.5);
  CHECK(predict(LinearModel{{1.0}, 0.0}, std::vector<double>{std::log(3.0)}) ==
        doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(predict(LinearModel{{1.0}, 0.0}, std::vector<double>{1.0, 2.0}), DimensionError);
}

TEST_CASE("log_likelihood examples") {
  const LinearModel zero{{0.0}, 0.0};
  CHECK(log_likelihood(zero, matrix({{1.0}}), std::vector<double>{1.0}) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(log_likelihood(zero, matrix({{1.0}}), std::vector<double>{0.5}) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-15));
  const double a = 1.7;
  const LinearModel m{{a}, 0.0};
  CHECK(log_likelihood(m, matrix({{1.0}, {-1.0}}), std::vector<double>{1.0, 0.0}) ==
        doctest::Approx(2.0 * std::log(sigmoid(a))).epsilon(1e-14));
  // Stays finite where exp(-z) would overflow.
  const double far = log_likelihood(LinearModel{{1.0}, 0.0}, matrix({{-800.0}}), std::vector<double>{1.0});
  CHECK(far == doctest::Approx(-800.0));
}

TEST_CASE("gradient examples") {
  const auto g = gradient(LinearModel{{0.0}, 0.0}, matrix({{1.0}}), std::vector<double>{1.0});
  CHECK(g.w[0] == 0.5);
  CHECK(g.b == 0.5);

  const LinearModel m{{0.8, -0.4}, 0.3};
  const Matrix X = matrix({{1.0, 2.0}, {-0.5, 0.25}});
  std::vector<double> y;
  for (std::size_t i = 0; i < 2; ++i) y.push_back(predict(m, X.row(i)));
  const auto stationary = gradient(m, X, y);
  CHECK(std::abs(stationary.b) <= 1e-15);
  CHECK(std::abs(stationary.w[0]) <= 1e-15);

  const auto sym = gradient(LinearModel{{1.3}, 0.0}, matrix({{1.0}, {-1.0}}), std::vector<double>{1.0, 0.0});
  CHECK(std::abs(sym.b) <= 1e-15);
}

TEST_CASE("gradient agrees with finite differences and the stable form with the plain formula") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng() % 6, n = 1 + rng() % 12;
    const auto ts = random_set(rng, n, m);
    LinearModel model{std::vector<double>(m), u(rng)};
    for (double& w : model.w) w = u(rng);
    const auto y = ts.Y.column(0);
    CHECK(log_likelihood(model, ts.X, y) == doctest::Approx(naive_ll(model, ts.X, y)).epsilon(1e-12));

    const auto g = gradient(model, ts.X, y);
    const double h = 1e-5;
    for (std::size_t j = 0; j <= m; ++j) {
      LinearModel up = model, down = model;
      (j < m ? up.w[j] : up.b) += h;
      (j < m ? down.w[j] : down.b) -= h;
      const double fd = (log_likelihood(up, ts.X, y) - log_likelihood(down, ts.X, y)) / (2 * h);
      const double an = j < m ? g.w[j] : g.b;
      CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(an)));
    }
  }
}

TEST_CASE("training separable data") {
  TrainingSet ts{matrix({{-1.0}, {1.0}}), column({0.0, 1.0})};
  TrainConfig cfg;
  cfg.batch_size = 2;
  const auto model = train(ts, cfg);
  CHECK(model.w[0] > 0.0);
  CHECK(predict(model, std::vector<double>{-1.0}) < 0.5);
  CHECK(predict(model, std::vector<double>{1.0}) > 0.5);
}

TEST_CASE("constant half targets with a penalty drive the model to zero") {
  std::mt19937_64 rng(3);
  TrainingSet ts = random_set(rng, 40, 1);
  for (std::size_t i = 0; i < 40; ++i) ts.Y(i, 0) = 0.5;
  TrainConfig cfg;
  cfg.l2_penalty = 1.0;
  cfg.epochs = 400;
  const auto model = train(ts, cfg);
  CHECK(std::abs(model.w[0]) < 1e-2);
  CHECK(std::abs(model.b) < 1e-2);

  // 1D grid oracle on the penalised objective: the optimum sits at w = 0.
  auto objective = [&](double w) {
    return log_likelihood(LinearModel{{w}, 0.0}, ts.X, ts.Y.column(0)) - 0.5 * w * w;
  };
  double best_w = -1;
  for (double w = -1; w <= 1.0001; w += 0.01)
    if (objective(w) > objective(best_w)) best_w = w;
  CHECK(std::abs(best_w) < 0.011);
}

TEST_CASE("training is deterministic and never worse than the initial model") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ts = random_set(rng, 30, 4);
    TrainConfig cfg;
    cfg.seed = trial;
    cfg.epochs = 50;
    cfg.batch_size = 7;
    const auto a = train_with_report(ts, cfg);
    const auto b = train_with_report(ts, cfg);
    CHECK(a.model == b.model);
    CHECK(a.final_objective >= a.initial_objective);
    CHECK(log_likelihood(a.model, ts.X, ts.Y.column(0)) == doctest::Approx(a.final_objective));
  }
}

TEST_CASE("early stopping on validation loss") {
  std::mt19937_64 rng(12);
  const auto ts = random_set(rng, 40, 3);
  const auto val = random_set(rng, 20, 3);
  TrainConfig cfg;
  cfg.patience = 2;
  cfg.epochs = 500;
  const auto r = train_with_report(ts, cfg, &val);
  REQUIRE(r.validation_loss.has_value());
  CHECK(r.epochs_run <= 500);
  if (r.stopped_early) CHECK(r.epochs_run < 500);
}

TEST_CASE("divergence is reported") {
  TrainingSet ts{matrix({{1e300}, {-1e300}}), column({1.0, 0.0})};
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.batch_size = 2;
  CHECK_THROWS_AS(train(ts, cfg), DivergenceError);
}

TEST_CASE("configuration validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.l2_penalty = -1;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);

  TrainingSet bad{matrix({{1.0}}), column({1.5})};
  CHECK_THROWS(bad.validate());
  TrainingSet empty{Matrix(0, 1), Matrix(0, 1)};
  CHECK_THROWS(empty.validate());
}

TEST_CASE("multi-output training decomposes per output") {
  std::mt19937_64 rng(21);
  TrainingSet ts = random_set(rng, 25, 3);
  Matrix Y(25, 3);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t h = 0; h < 3; ++h) Y(i, h) = static_cast<double>(rng() % 2);
  ts.Y = Y;
  TrainConfig cfg;
  cfg.seed = 77;
  cfg.epochs = 40;
  const auto multi = train_multi(ts, cfg);
  REQUIRE(multi.output_dim() == 3);
  double sum = 0;
  for (std::size_t h = 0; h < 3; ++h) {
    TrainConfig single = cfg;
    single.seed = derive_output_seed(cfg.seed, h);
    const auto alone = train(TrainingSet{ts.X, column(Y.column(h))}, single);
    CHECK(alone == multi.outputs[h]);
    sum += log_likelihood(alone, ts.X, Y.column(h));
  }
  CHECK(std::abs(log_likelihood(multi, ts.X, Y) - sum) <= 1e-12);
  CHECK(derive_output_seed(cfg.seed, 0) == cfg.seed);

  // k = 1 is the single-output trainer bit for bit.
  const TrainingSet one{ts.X, column(Y.column(0))};
  CHECK(train_multi(one, cfg).outputs[0] == train(one, cfg));

  // Identical columns with a shared seed give identical outputs.
  Matrix twin(25, 2);
  for (std::size_t i = 0; i < 25; ++i) twin(i, 0) = twin(i, 1) = Y(i, 0);
  const auto same = train_multi(TrainingSet{ts.X, twin}, cfg, SeedRule::shared);
  CHECK(same.outputs[0] == same.outputs[1]);
}

TEST_CASE("feature scaling folds back into raw weights") {
  const Matrix X = matrix({{1.0, 100.0, 5.0}, {2.0, 300.0, 5.0}, {4.0, 200.0, 5.0}});
  const auto sc = FeatureScaling::fit(X);
  CHECK(sc.scale[2] == 1.0);
  const Matrix Z = sc.apply(X);
  const LinearModel scaled{{0.3, -1.2, 0.7}, 0.4};
  const LinearModel raw = sc.unscale(scaled);
  for (std::size_t i = 0; i < X.rows(); ++i)
    CHECK(score(raw, X.row(i)) == doctest::Approx(score(scaled, Z.row(i))).epsilon(1e-12));
  CHECK(FeatureScaling::identity(3).apply(X) == X);
}
