// Copyright 2026 The rrtpredict Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numeric>

#include "rrt/error.hpp"
#include "rrt/model.hpp"
#include "rrt/util.hpp"

using namespace rrt;

namespace {

struct Data {
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<std::uint8_t> labels;
  std::vector<Example> examples() const {
    std::vector<Example> out;
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({rows[i], labels[i]});
    return out;
  }
};

Data make_random_data(Rng& rng, std::size_t n, std::size_t features, std::size_t classes) {
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> row;
    for (std::uint32_t j = 0; j < features; ++j)
      if (rng.bernoulli(0.3)) row.push_back(j);
    d.rows.push_back(std::move(row));
    d.labels.push_back(static_cast<std::uint8_t>(rng.below(classes)));
  }
  return d;
}

ModelParams random_params(Rng& rng, std::size_t classes, std::size_t features, double scale) {
  ModelParams p(classes, features, 0);
  for (double& w : p.weights) w = scale * rng.normal();
  for (double& b : p.bias) b = scale * rng.normal();
  return p;
}

// Per-example loss in 50-digit binary floating point, by definition.
double precise_loss(const ModelParams& p, const Data& d, double l1) {
  using F = boost::multiprecision::cpp_bin_float_50;
  F total = 0;
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    std::vector<F> z(p.num_classes);
    for (std::size_t c = 0; c < p.num_classes; ++c) {
      z[c] = p.bias[c];
      for (auto j : d.rows[i]) z[c] += F(p.weight(c, j));
    }
    F denom = 0;
    for (const auto& v : z) denom += exp(v);
    total -= log(exp(z[d.labels[i]]) / denom);
  }
  F penalty = 0;
  for (double w : p.weights) penalty += abs(F(w));
  return static_cast<double>(total / F(d.rows.size()) + F(l1) * penalty);
}

}  // namespace

TEST_CASE("forward examples") {
  ModelParams zero(6, 4, 77);
  FeatureVector x{{0, 3}, 4, 77};
  const auto pv = forward(x, zero);
  for (double s : pv.s) CHECK(s == doctest::Approx(1.0 / 6).epsilon(1e-15));
  for (std::size_t i = 0; i < 5; ++i) CHECK(pv.p[i] == doctest::Approx((i + 1) / 6.0).epsilon(1e-15));

  const auto direct = from_scores({0.1, 0.2, 0.05, 0.05, 0.1, 0.5});
  const double expect[] = {0.1, 0.3, 0.35, 0.4, 0.5};
  for (std::size_t i = 0; i < 5; ++i) CHECK(direct.p[i] == doctest::Approx(expect[i]).epsilon(1e-15));

  Rng rng(3);
  auto p = random_params(rng, 6, 4, 1.0);
  p.vocab_hash = 77;
  const auto before = forward(x, p);
  for (double& b : p.bias) b += 123.25;
  const auto after = forward(x, p);
  for (std::size_t c = 0; c < 6; ++c) CHECK(after.s[c] == doctest::Approx(before.s[c]).epsilon(1e-12));

  CHECK_THROWS_AS(forward(FeatureVector{{0}, 4, 78}, zero), DataError);
  CHECK_THROWS_AS(forward(FeatureVector{{0}, 5, 77}, zero), DataError);
  CHECK_THROWS_AS(forward(FeatureVector{{4}, 4, 77}, zero), DataError);
}

TEST_CASE("softmax stays finite for extreme logits") {
  std::vector<double> v{1000.0, -1000.0, 999.0};
  softmax_inplace(v);
  CHECK(std::isfinite(v[0]));
  CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0));
  CHECK(v[1] == 0.0);
}

TEST_CASE("loss examples") {
  Data d{{{0}}, {2}};
  ModelParams p(6, 2, 0);
  CHECK(loss(d.examples(), p, 0.0) == doctest::Approx(std::log(6.0)).epsilon(1e-14));
  CHECK(loss(d.examples(), p, 0.0) == doctest::Approx(1.7918).epsilon(1e-4));
  p.bias[2] = 800.0;
  CHECK(loss(d.examples(), p, 0.0) == 0.0);
  p.weight(1, 1) = -2.0;
  CHECK(loss(d.examples(), p, 0.5) == doctest::Approx(1.0));

  // Hand-set small weights against the 50-digit oracle.
  ModelParams q(3, 3, 0);
  q.weights = {0.1, -0.2, 0.05, 0.3, 0.0, -0.15, -0.05, 0.25, 0.2};
  q.bias = {0.01, -0.02, 0.03};
  Data one{{{0, 2}}, {1}};
  CHECK(std::abs(loss(one.examples(), q, 0.0) - precise_loss(q, one, 0.0)) < 1e-10);
  CHECK(std::abs(loss(one.examples(), q, 0.01) - precise_loss(q, one, 0.01)) < 1e-10);

  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = make_random_data(rng, 1 + rng.below(10), 8, 6);
    const auto rp = random_params(rng, 6, 8, 2.0);
    const double l1 = rng.uniform(0.0, 0.1);
    REQUIRE(std::abs(loss(r.examples(), rp, l1) - precise_loss(rp, r, l1)) < 1e-10);
  }
  CHECK_THROWS_AS(loss(Data{{{0}}, {6}}.examples(), p, 0.0), DataError);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t v = 1 + rng.below(20), n = 1 + rng.below(20);
    const auto d = make_random_data(rng, n, v, 6);
    auto p = random_params(rng, 6, v, 0.5);
    const auto ex = d.examples();
    const auto g = data_gradient(ex, p);
    const double h = 1e-5;
    auto check = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + h;
      const double up = loss(ex, p, 0.0);
      param = keep - h;
      const double down = loss(ex, p, 0.0);
      param = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      REQUIRE(std::abs(analytic - numeric) / scale < 1e-4);
    };
    for (std::size_t i = 0; i < p.weights.size(); ++i) check(p.weights[i], g.weights[i]);
    for (std::size_t c = 0; c < 6; ++c) check(p.bias[c], g.bias[c]);
  }
}

TEST_CASE("soft threshold and learning rate schedule") {
  std::vector<double> w{0.5, -0.5, 0.1, -0.1, 0.0};
  soft_threshold(w, 0.2);
  CHECK(w == std::vector<double>{0.3, -0.3, 0.0, 0.0, 0.0});
  HyperParams hp;
  hp.initial_learning_rate = 0.4;
  hp.decay_rate = 0.5;
  hp.decay_steps = 10;
  CHECK(hp.learning_rate(0) == 0.4);
  CHECK(hp.learning_rate(10) == doctest::Approx(0.2));
  CHECK(hp.learning_rate(5) == doctest::Approx(0.4 * std::sqrt(0.5)));
  hp.decay_rate = 0.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}

TEST_CASE("full-batch gradient descent never increases a convex loss") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = make_random_data(rng, 20, 10, 6);
    const auto ex = d.examples();
    ModelParams p(6, 10, 0);
    double prev = loss(ex, p, 0.0);
    for (int it = 0; it < 200; ++it) {
      const auto g = data_gradient(ex, p);
      for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] -= 0.05 * g.weights[i];
      for (std::size_t c = 0; c < 6; ++c) p.bias[c] -= 0.05 * g.bias[c];
      const double cur = loss(ex, p, 0.0);
      REQUIRE(cur <= prev + 1e-15);
      prev = cur;
    }
  }
}

namespace {

// Four binary features; feature k alone marks class k.
Data separable() {
  Data d;
  for (int i = 0; i < 20; ++i) {
    const auto k = static_cast<std::uint32_t>(i % 4);
    d.rows.push_back({k});
    d.labels.push_back(static_cast<std::uint8_t>(k));
  }
  return d;
}

}  // namespace

TEST_CASE("training on a separable toy set") {
  const auto d = separable();
  const auto ex = d.examples();
  HyperParams hp;
  hp.l1_coefficient = 0;
  hp.batch_size = 4;
  hp.max_epochs = 500;
  hp.patience = 0;
  hp.decay_rate = 1.0;
  const auto r = train(ex, ex, 4, 4, 5, hp);
  CHECK(r.log.size() == 500);
  CHECK(loss(ex, r.params, 0.0) < 0.05);
  CHECK(r.params.vocab_hash == 5);
  CHECK(r.best_valid_loss == doctest::Approx(loss(ex, r.params, 0.0)));
}

TEST_CASE("a dominant L1 penalty zeroes every weight") {
  const auto d = separable();
  const auto ex = d.examples();
  HyperParams hp;
  hp.l1_coefficient = 1e3;
  hp.max_epochs = 20;
  hp.patience = 0;
  const auto r = train(ex, ex, 4, 4, 0, hp);
  CHECK(r.params.nonzero_weights() == 0);
  // Balanced classes keep the bias uniform too.
  const auto pv = predict(std::vector<std::uint32_t>{0, 1}, r.params);
  for (double s : pv.s) CHECK(s == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("training is deterministic in the seed") {
  Rng rng(5);
  const auto d = make_random_data(rng, 300, 30, 6);
  const auto v = make_random_data(rng, 50, 30, 6);
  HyperParams hp;
  hp.batch_size = 16;
  hp.max_epochs = 8;
  hp.seed = 11;
  const auto a = train(d.examples(), v.examples(), 6, 30, 0, hp);
  const auto b = train(d.examples(), v.examples(), 6, 30, 0, hp);
  CHECK(format_train_log(a.log) == format_train_log(b.log));
  CHECK(a.params.weights == b.params.weights);
  hp.seed = 12;
  const auto c = train(d.examples(), v.examples(), 6, 30, 0, hp);
  CHECK(c.params.weights != a.params.weights);
}

TEST_CASE("early stopping keeps the best validation snapshot") {
  Rng rng(6);
  const auto d = make_random_data(rng, 60, 40, 6);
  const auto v = make_random_data(rng, 60, 40, 6);  // unrelated labels: overfitting sets in
  HyperParams hp;
  hp.l1_coefficient = 0;
  hp.batch_size = 8;
  hp.max_epochs = 200;
  hp.patience = 3;
  const auto r = train(d.examples(), v.examples(), 6, 40, 0, hp);
  CHECK(r.log.size() < 200);
  CHECK(r.log.size() == r.best_epoch + 3);
  CHECK(loss(v.examples(), r.params, 0.0) == doctest::Approx(r.best_valid_loss).epsilon(1e-12));
  for (const auto& e : r.log) CHECK(e.valid_loss >= r.best_valid_loss);
}

TEST_CASE("non-finite loss aborts training") {
  const auto d = separable();
  HyperParams hp;
  hp.initial_learning_rate = 1e308;
  hp.l1_coefficient = 0;
  hp.batch_size = 1;
  CHECK_THROWS_AS(train(d.examples(), d.examples(), 4, 4, 0, hp), NumericError);
}

TEST_CASE("tune") {
  Rng rng(8);
  const auto d = make_random_data(rng, 200, 20, 6);
  const auto v = make_random_data(rng, 60, 20, 6);
  HyperParams base;
  base.max_epochs = 3;
  base.batch_size = 32;

  const auto single = tune({base}, d.examples(), v.examples(), 6, 20, 0);
  CHECK(single.best == base);
  CHECK(single.trials.size() == 1);

  // A vanishing learning rate cannot beat a sane one on these data.
  HyperParams stuck = base;
  stuck.initial_learning_rate = 1e-12;
  HyperParams good = base;
  good.initial_learning_rate = 0.3;
  const auto pick = tune({stuck, good, stuck}, d.examples(), v.examples(), 6, 20, 0);
  CHECK(pick.trials.size() == 2);
  const double l_stuck = train(d.examples(), v.examples(), 6, 20, 0, stuck).best_valid_loss;
  const double l_good = train(d.examples(), v.examples(), 6, 20, 0, good).best_valid_loss;
  CHECK(pick.best == (l_good < l_stuck ? good : stuck));

  // Both penalties zero every weight, so the runs match and the smaller l1 wins.
  HyperParams a = base, b = base;
  a.l1_coefficient = 10;
  b.l1_coefficient = 20;
  const auto tie = tune({b, a}, d.examples(), v.examples(), 6, 20, 0);
  CHECK(tie.trials[0].valid_loss == tie.trials[1].valid_loss);
  CHECK(tie.best == a);
  // Patience beyond max_epochs changes nothing; lexicographic order decides.
  HyperParams c = base, e = base;
  c.patience = 7;
  e.patience = 9;
  CHECK(tune({e, c}, d.examples(), v.examples(), 6, 20, 0).best == c);
  CHECK_THROWS_AS(tune({}, d.examples(), v.examples(), 6, 20, 0), ConfigError);
}

TEST_CASE("model file round trip and corruption") {
  Rng rng(21);
  auto p = random_params(rng, 6, 12, 1.0);
  p.vocab_hash = 0xabcdef;
  p.hyper.seed = 7;
  const ModelLineage lin{1, 2, 1, 3};
  const auto bytes = serialize_model(p, lin);
  CHECK(bytes.size() == 8 + 16 + 40 + 24 + 40 + 8 * (6 + 72) + 8);
  const auto [q, l] = parse_model(bytes, 0xabcdef);
  CHECK(l == lin);
  CHECK(q.weights == p.weights);
  CHECK(q.bias == p.bias);
  CHECK(q.hyper == p.hyper);
  CHECK_THROWS_AS(parse_model(bytes, 0xabcdee), DataError);
  auto flipped = bytes;
  flipped[100] ^= 1;
  CHECK_THROWS_AS(parse_model(flipped), DataError);
  CHECK_THROWS_AS(parse_model(bytes.substr(0, bytes.size() - 1)), DataError);
  CHECK_THROWS_AS(parse_model("RRTMODEX"), DataError);
}
