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

#include "rrt/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "rrt/error.hpp"
#include "rrt/util.hpp"

namespace rrt {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

void HyperParams::validate() const {
  if (!(l1_coefficient >= 0.0) || !std::isfinite(l1_coefficient)) throw ConfigError("l1_coefficient must be >= 0");
  if (!(initial_learning_rate > 0.0) || !std::isfinite(initial_learning_rate))
    throw ConfigError("initial_learning_rate must be > 0");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ConfigError("decay_rate must be in (0, 1]");
  if (decay_steps == 0) throw ConfigError("decay_steps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
}

double HyperParams::learning_rate(std::uint64_t step) const {
  return initial_learning_rate *
         std::pow(decay_rate, static_cast<double>(step) / static_cast<double>(decay_steps));
}

ModelParams::ModelParams(std::size_t classes, std::size_t features, std::uint64_t hash)
    : num_classes(classes), num_features(features), weights(classes * features, 0.0), bias(classes, 0.0),
      vocab_hash(hash) {}

double ModelParams::l1_norm() const {
  double s = 0.0;
  for (double w : weights) s += std::abs(w);
  return s;
}

std::size_t ModelParams::nonzero_weights() const {
  return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w != 0.0; }));
}

void compute_logits(std::span<const std::uint32_t> x, const ModelParams& params, std::span<double> out) {
  for (std::size_t c = 0; c < params.num_classes; ++c) {
    const double* row = params.weights.data() + c * params.num_features;
    double z = params.bias[c];
    for (auto j : x) z += row[j];
    out[c] = z;
  }
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& z : v) {
    z = std::exp(z - m);
    total += z;
  }
  for (double& z : v) z /= total;
}

PredictionVector from_scores(std::vector<double> s) {
  PredictionVector out;
  out.p.resize(s.size() - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    acc += s[i];
    // Rounding can push a partial sum a hair past 1.
    out.p[i] = std::min(acc, 1.0);
  }
#ifdef RRT_CHECK_INVARIANTS
  // Test builds: s is a distribution and p is a non-decreasing cumulative sum.
  if (std::abs(acc + s.back() - 1.0) > 1e-9) throw NumericError("invariant: class scores do not sum to 1");
  for (std::size_t i = 0; i < out.p.size(); ++i)
    if (!(out.p[i] >= (i ? out.p[i - 1] : 0.0) && out.p[i] <= 1.0))
      throw NumericError("invariant: overlapping probabilities are not monotone");
#endif
  out.s = std::move(s);
  return out;
}

PredictionVector predict(std::span<const std::uint32_t> x, const ModelParams& params) {
  std::vector<double> s(params.num_classes);
  compute_logits(x, params, s);
  softmax_inplace(s);
  return from_scores(std::move(s));
}

PredictionVector forward(const FeatureVector& x, const ModelParams& params) {
  if (x.vocab_hash != params.vocab_hash)
    throw DataError("feature vector vocabulary " + to_hex(x.vocab_hash) + " does not match model vocabulary " +
                    to_hex(params.vocab_hash));
  if (x.dimension != params.num_features) throw DataError("feature dimension does not match model");
  if (!x.indices.empty() && x.indices.back() >= params.num_features)
    throw DataError("feature index out of range");
  return predict(x.indices, params);
}

namespace {

// -log softmax(z)[label], computed from logits via log-sum-exp.
double cross_entropy(std::span<const double> z, std::size_t label) {
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - m);
  return m + std::log(total) - z[label];
}

void check_label(const Example& e, const ModelParams& params) {
  if (e.label >= params.num_classes) throw DataError("label class out of range");
}

}  // namespace

double loss(std::span<const Example> batch, const ModelParams& params, double l1) {
  double data = 0.0;
  std::vector<double> z(params.num_classes);
  for (const auto& e : batch) {
    check_label(e, params);
    compute_logits(e.features, params, z);
    data += cross_entropy(z, e.label);
  }
  const double mean = batch.empty() ? 0.0 : data / static_cast<double>(batch.size());
  return mean + (l1 > 0.0 ? l1 * params.l1_norm() : 0.0);
}

Gradient data_gradient(std::span<const Example> batch, const ModelParams& params) {
  Gradient g{std::vector<double>(params.weights.size(), 0.0), std::vector<double>(params.num_classes, 0.0)};
  if (batch.empty()) return g;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> s(params.num_classes);
  for (const auto& e : batch) {
    check_label(e, params);
    compute_logits(e.features, params, s);
    softmax_inplace(s);
    s[e.label] -= 1.0;
    for (std::size_t c = 0; c < params.num_classes; ++c) {
      const double gc = s[c] * inv;
      g.bias[c] += gc;
      double* row = g.weights.data() + c * params.num_features;
      for (auto j : e.features) row[j] += gc;
    }
  }
  return g;
}

void soft_threshold(std::vector<double>& weights, double amount) {
  if (amount <= 0.0) return;
  for (double& w : weights) {
    if (w > amount)
      w -= amount;
    else if (w < -amount)
      w += amount;
    else
      w = 0.0;
  }
}

namespace {

double mean_cross_entropy(std::span<const Example> set, const ModelParams& params) {
  return loss(set, params, 0.0);
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

}  // namespace

TrainResult train(std::span<const Example> train_set, std::span<const Example> valid_set, std::size_t num_classes,
                  std::size_t num_features, std::uint64_t vocab_hash, const HyperParams& hp) {
  hp.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (num_classes < 2) throw ConfigError("at least two classes required");
  for (const auto& e : train_set)
    for (auto j : e.features)
      if (j >= num_features) throw DataError("training feature index out of range");

  ModelParams params(num_classes, num_features, vocab_hash);
  params.hyper = hp;
  TrainResult result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();
  result.params = params;

  Rng rng(hp.seed, 0x7261696eULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> residual;  // batch x classes: softmax - onehot
  std::vector<double> z(num_classes);
  std::uint64_t step = 0;
  std::uint64_t stale = 0;

  for (std::uint64_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    double lr = hp.learning_rate(step);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min<std::size_t>(start + hp.batch_size, order.size());
      const std::size_t n = end - start;
      lr = hp.learning_rate(step);
      residual.assign(n * num_classes, 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const auto& e = train_set[order[start + b]];
        check_label(e, params);
        compute_logits(e.features, params, z);
        batch_loss += cross_entropy(z, e.label);
        softmax_inplace(z);
        z[e.label] -= 1.0;
        std::copy(z.begin(), z.end(), residual.begin() + static_cast<std::ptrdiff_t>(b * num_classes));
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + " (learning rate " + format_double(lr) + ")");
      epoch_loss += batch_loss;

      const double scale = lr / static_cast<double>(n);
      for (std::size_t b = 0; b < n; ++b) {
        const auto& e = train_set[order[start + b]];
        const double* r = residual.data() + b * num_classes;
        for (std::size_t c = 0; c < num_classes; ++c) {
          const double delta = scale * r[c];
          params.bias[c] -= delta;
          double* row = params.weights.data() + c * num_features;
          for (auto j : e.features) row[j] -= delta;
        }
      }
      soft_threshold(params.weights, lr * hp.l1_coefficient);
      ++step;
    }

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.steps = step;
    entry.learning_rate = lr;
    entry.train_loss = epoch_loss / static_cast<double>(train_set.size()) + hp.l1_coefficient * params.l1_norm();
    entry.valid_loss = valid_set.empty() ? entry.train_loss : mean_cross_entropy(valid_set, params);
    entry.nonzero = params.nonzero_weights();
    if (!std::isfinite(entry.train_loss) || !std::isfinite(entry.valid_loss))
      throw NumericError("non-finite loss after epoch " + std::to_string(epoch));
    if (entry.valid_loss < result.best_valid_loss) {
      entry.improved = true;
      result.best_valid_loss = entry.valid_loss;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else {
      ++stale;
    }
    result.log.push_back(entry);
    if (hp.patience > 0 && stale >= hp.patience) break;
  }
  return result;
}

std::string format_train_log(std::span<const TrainLogEntry> log) {
  std::string out = "epoch\tsteps\tlearning_rate\ttrain_loss\tvalid_loss\tnonzero\timproved\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + '\t' + std::to_string(e.steps) + '\t' + format_double(e.learning_rate) + '\t' +
           format_double(e.train_loss) + '\t' + format_double(e.valid_loss) + '\t' + std::to_string(e.nonzero) +
           '\t' + (e.improved ? "1" : "0") + '\n';
  }
  return out;
}

TuneResult tune(std::vector<HyperParams> grid, std::span<const Example> train_set,
                std::span<const Example> valid_set, std::size_t num_classes, std::size_t num_features,
                std::uint64_t vocab_hash) {
  if (grid.empty()) throw ConfigError("hyperparameter grid is empty");
  // HyperParams compares l1 first, so sorted order encodes the tie-break.
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  TuneResult out;
  bool have = false;
  for (const auto& hp : grid) {
    auto run = train(train_set, valid_set, num_classes, num_features, vocab_hash, hp);
    out.trials.push_back({hp, run.best_valid_loss});
    if (!have || run.best_valid_loss < out.best_run.best_valid_loss) {
      out.best = hp;
      out.best_run = std::move(run);
      have = true;
    }
  }
  return out;
}

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw DataError("model file truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "RRTMODEL";

}  // namespace

std::string serialize_model(const ModelParams& params, const ModelLineage& lineage) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.num_classes));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.num_features));
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, params.vocab_hash);
  put<std::uint64_t>(out, lineage.config_fingerprint);
  put<std::uint64_t>(out, lineage.seed);
  put<std::uint64_t>(out, lineage.stage_version);
  put<std::uint64_t>(out, lineage.inputs_checksum);
  const auto& hp = params.hyper;
  put<double>(out, hp.l1_coefficient);
  put<double>(out, hp.initial_learning_rate);
  put<double>(out, hp.decay_rate);
  put<std::uint64_t>(out, hp.decay_steps);
  put<std::uint64_t>(out, hp.batch_size);
  put<std::uint64_t>(out, hp.max_epochs);
  put<std::uint64_t>(out, hp.patience);
  put<std::uint64_t>(out, hp.seed);
  for (double b : params.bias) put<double>(out, b);
  out.append(reinterpret_cast<const char*>(params.weights.data()), params.weights.size() * sizeof(double));
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

std::pair<ModelParams, ModelLineage> parse_model(std::string_view bytes,
                                                 std::optional<std::uint64_t> expected_vocab_hash) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic)
    throw DataError("not a model file (bad magic)");
  Reader r(bytes.substr(kMagic.size()));
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) throw DataError("unsupported model format version " + std::to_string(version));
  const auto classes = r.get<std::uint32_t>();
  const auto features = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  const std::size_t expected_size = kMagic.size() + 16 + 5 * 8 + 3 * 8 + 5 * 8 +
                                    (static_cast<std::size_t>(classes) * (features + 1)) * 8 + 8;
  if (bytes.size() != expected_size) throw DataError("model file has wrong size for its header");
  const auto stored = [&] {
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
    return v;
  }();
  if (stored != fnv1a64(bytes.substr(0, bytes.size() - 8))) throw DataError("model file checksum mismatch");

  ModelParams params(classes, features, r.get<std::uint64_t>());
  if (expected_vocab_hash && *expected_vocab_hash != params.vocab_hash)
    throw DataError("model vocabulary hash " + to_hex(params.vocab_hash) + " does not match vocabulary " +
                    to_hex(*expected_vocab_hash));
  ModelLineage lineage;
  lineage.config_fingerprint = r.get<std::uint64_t>();
  lineage.seed = r.get<std::uint64_t>();
  lineage.stage_version = r.get<std::uint64_t>();
  lineage.inputs_checksum = r.get<std::uint64_t>();
  auto& hp = params.hyper;
  hp.l1_coefficient = r.get<double>();
  hp.initial_learning_rate = r.get<double>();
  hp.decay_rate = r.get<double>();
  hp.decay_steps = r.get<std::uint64_t>();
  hp.batch_size = r.get<std::uint64_t>();
  hp.max_epochs = r.get<std::uint64_t>();
  hp.patience = r.get<std::uint64_t>();
  hp.seed = r.get<std::uint64_t>();
  for (auto& b : params.bias) b = r.get<double>();
  for (auto& w : params.weights) w = r.get<double>();
  for (double w : params.weights)
    if (!std::isfinite(w)) throw DataError("model file holds non-finite weights");
  return {std::move(params), lineage};
}

}  // namespace rrt
