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

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rrt/features.hpp"

namespace rrt {

struct HyperParams {
  double l1_coefficient = 1e-5;
  double initial_learning_rate = 0.5;
  double decay_rate = 0.95;
  std::uint64_t decay_steps = 1000;
  std::uint64_t batch_size = 256;
  std::uint64_t max_epochs = 40;
  std::uint64_t patience = 5;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// initial * decay_rate^(step / decay_steps), continuous in step.
  double learning_rate(std::uint64_t step) const;

  auto operator<=>(const HyperParams&) const = default;
};

/// Weights are class-major: weights[c * num_features + j].
struct ModelParams {
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::uint64_t vocab_hash = 0;
  HyperParams hyper;

  ModelParams() = default;
  ModelParams(std::size_t classes, std::size_t features, std::uint64_t vocab_hash);

  double& weight(std::size_t c, std::size_t j) { return weights[c * num_features + j]; }
  double weight(std::size_t c, std::size_t j) const { return weights[c * num_features + j]; }
  double l1_norm() const;
  std::size_t nonzero_weights() const;
};

/// s: disjoint-window class probabilities (sums to 1). p: overlapping-window
/// probabilities, p[i] = s[0] + ... + s[i], one fewer entry than s.
struct PredictionVector {
  std::vector<double> s;
  std::vector<double> p;
};

struct Example {
  std::span<const std::uint32_t> features;
  std::uint8_t label = 0;
};

/// logits = W x + b for binary x given by its active indices.
void compute_logits(std::span<const std::uint32_t> x, const ModelParams& params, std::span<double> out);
/// Numerically stable softmax (max-subtracted), in place.
void softmax_inplace(std::span<double> v);
PredictionVector from_scores(std::vector<double> s);

/// Throws DataError if x was built against a different vocabulary.
PredictionVector forward(const FeatureVector& x, const ModelParams& params);
/// Unchecked variant for indices already validated against the model.
PredictionVector predict(std::span<const std::uint32_t> x, const ModelParams& params);

/// Mean softmax cross-entropy over the batch plus l1 * sum |W|. Bias is not
/// penalized. Zero for an empty batch apart from the penalty.
double loss(std::span<const Example> batch, const ModelParams& params, double l1);

/// Gradient of the mean cross-entropy (no penalty term).
struct Gradient {
  std::vector<double> weights;
  std::vector<double> bias;
};
Gradient data_gradient(std::span<const Example> batch, const ModelParams& params);

/// In-place soft threshold of every weight by `amount`.
void soft_threshold(std::vector<double>& weights, double amount);

struct TrainLogEntry {
  std::uint64_t epoch = 0;
  std::uint64_t steps = 0;
  double learning_rate = 0;
  double train_loss = 0;  // mean minibatch cross-entropy over the epoch, plus penalty
  double valid_loss = 0;  // cross-entropy on the validation set
  std::size_t nonzero = 0;
  bool improved = false;
};

struct TrainResult {
  ModelParams params;  // snapshot with the best validation loss
  std::vector<TrainLogEntry> log;
  std::uint64_t best_epoch = 0;
  double best_valid_loss = 0;
};

/// Mini-batch proximal gradient descent from zero weights: a cross-entropy
/// gradient step, then soft-thresholding by lr * l1. Early stops after
/// `patience` epochs without validation improvement. Throws NumericError on
/// a non-finite loss.
TrainResult train(std::span<const Example> train_set, std::span<const Example> valid_set, std::size_t num_classes,
                  std::size_t num_features, std::uint64_t vocab_hash, const HyperParams& hp);

std::string format_train_log(std::span<const TrainLogEntry> log);

struct TuneTrial {
  HyperParams hyper;
  double valid_loss = 0;
};

struct TuneResult {
  HyperParams best;
  TrainResult best_run;
  std::vector<TuneTrial> trials;  // in evaluation order (deduplicated grid, sorted)
};

/// Exhaustive grid search on validation cross-entropy. Duplicates are
/// dropped; ties go to the smaller l1 coefficient, then lexicographic order.
TuneResult tune(std::vector<HyperParams> grid, std::span<const Example> train_set, std::span<const Example> valid_set,
                std::size_t num_classes, std::size_t num_features, std::uint64_t vocab_hash);

/// Pipeline provenance carried in the model header.
struct ModelLineage {
  std::uint64_t config_fingerprint = 0;
  std::uint64_t seed = 0;
  std::uint64_t stage_version = 1;
  std::uint64_t inputs_checksum = 0;
  bool operator==(const ModelLineage&) const = default;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Binary model file, little-endian:
///   "RRTMODEL" | u32 version | u32 classes | u32 features | u32 0
///   | u64 vocab_hash | u64 config_fingerprint | u64 seed | u64 stage_version
///   | u64 inputs_checksum | f64 l1, lr0, decay_rate
///   | u64 decay_steps, batch_size, max_epochs, patience, hp_seed
///   | f64 bias[classes] | f64 weights[classes * features] | u64 fnv1a64(all prior bytes)
std::string serialize_model(const ModelParams& params, const ModelLineage& lineage);
/// Throws DataError on corruption or when `expected_vocab_hash` differs.
std::pair<ModelParams, ModelLineage> parse_model(std::string_view bytes,
                                                 std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

}  // namespace rrt
