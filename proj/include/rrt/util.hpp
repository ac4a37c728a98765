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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace rrt {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

/// 64-bit FNV-1a. Chain calls by passing the previous result as `state`.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffset) noexcept;

/// Final mixer from SplitMix64; a bijection on 64-bit words.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::string to_hex(std::uint64_t value);
std::uint64_t parse_hex(std::string_view text);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

std::vector<std::string_view> split(std::string_view text, char sep);

/// Reads a whole file; throws DataError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Pseudo-random stream with portable samplers. The engine (mt19937_64) is
/// fully specified by the standard; the samplers here avoid the
/// implementation-defined std:: distributions so streams are reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Stream keyed by (seed, key) with no correlation between neighbouring keys.
  Rng(std::uint64_t seed, std::uint64_t key) : engine_(splitmix64(splitmix64(seed) ^ splitmix64(key + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  std::uint32_t poisson(double mean);
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads using a static
/// contiguous partition. Output placement is the caller's job (write to
/// slot i), so results never depend on the worker count. The exception from
/// the lowest failing chunk is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(workers, n);
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> threads;
  threads.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    threads.emplace_back([&, c] {
      const std::size_t lo = n * c / chunks;
      const std::size_t hi = n * (c + 1) / chunks;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rrt
