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

#include "rrt/rrt.h"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "rrt/error.hpp"
#include "rrt/features.hpp"
#include "rrt/metrics.hpp"
#include "rrt/model.hpp"
#include "rrt/pipeline.hpp"
#include "rrt/util.hpp"

struct rrt_pipeline {
  explicit rrt_pipeline(rrt::PipelineConfig c) : pipeline(std::move(c)) {}
  rrt::Pipeline pipeline;
  std::string log;
  std::string report;
};

struct rrt_model {
  rrt::ModelParams params;
};

namespace {

thread_local std::string g_last_error;

rrt_status fail(rrt_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <class Fn>
rrt_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return RRT_OK;
  } catch (const rrt::Error& e) {
    switch (e.kind()) {
      case rrt::ErrorKind::config:
        return fail(RRT_ERR_CONFIG, e.what());
      case rrt::ErrorKind::data:
        return fail(RRT_ERR_DATA, e.what());
      case rrt::ErrorKind::numeric:
        return fail(RRT_ERR_NUMERIC, e.what());
    }
    return fail(RRT_ERR_INTERNAL, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(RRT_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RRT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RRT_ERR_INTERNAL, e.what());
  }
}

std::vector<rrt::ScoredExample> scored(const double* scores, const uint8_t* labels, size_t n) {
  if (n > 0 && (!scores || !labels)) throw rrt::ConfigError("null score or label array");
  std::vector<rrt::ScoredExample> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {scores[i], static_cast<std::uint8_t>(labels[i] != 0)};
  return out;
}

void copy_point(const rrt::OperatingPoint& p, rrt_operating_point* out) {
  *out = {p.threshold, p.sensitivity, p.specificity, p.tp, p.fp, p.tn, p.fn};
}

#define RRT_REQUIRE(cond, msg) \
  if (!(cond)) return fail(RRT_ERR_CONFIG, msg)

}  // namespace

extern "C" {

const char* rrt_last_error(void) { return g_last_error.c_str(); }
const char* rrt_version(void) { return "1.0.0"; }

rrt_status rrt_pipeline_open(const char* config_path, rrt_pipeline** out) {
  RRT_REQUIRE(config_path && out, "rrt_pipeline_open: null argument");
  *out = nullptr;
  return guarded([&] { *out = new rrt_pipeline(rrt::PipelineConfig::load(config_path)); });
}

void rrt_pipeline_close(rrt_pipeline* p) { delete p; }

rrt_status rrt_pipeline_set_workers(rrt_pipeline* p, unsigned workers) {
  RRT_REQUIRE(p, "null pipeline");
  RRT_REQUIRE(workers > 0, "workers must be >= 1");
  p->pipeline.set_workers(workers);
  return RRT_OK;
}

rrt_status rrt_pipeline_set_seed(rrt_pipeline* p, uint64_t seed) {
  RRT_REQUIRE(p, "null pipeline");
  return guarded([&] { p->pipeline.set_seed(seed); });
}

rrt_status rrt_pipeline_set_task(rrt_pipeline* p, rrt_task task) {
  RRT_REQUIRE(p, "null pipeline");
  RRT_REQUIRE(task >= RRT_TASK_ALL && task <= RRT_TASK_TRANSPLANT, "unknown task");
  return guarded([&] {
    p->pipeline.set_task(task == RRT_TASK_ALL ? std::nullopt : std::optional(static_cast<rrt::Task>(task)));
  });
}

rrt_status rrt_pipeline_run(rrt_pipeline* p, rrt_stage stage) {
  RRT_REQUIRE(p, "null pipeline");
  RRT_REQUIRE(stage >= RRT_STAGE_SYNTH && stage <= RRT_STAGE_REPRODUCE, "unknown stage");
  p->log.clear();
  return guarded([&] {
    for (const auto& o : p->pipeline.run(static_cast<rrt::Stage>(stage))) {
      if (o.stage == rrt::Stage::evaluate) {
        p->report = o.message;
        p->log += o.skipped ? "evaluate: report is current\n" : "evaluate: report written\n";
      } else {
        p->log += o.message + "\n";
      }
    }
  });
}

const char* rrt_pipeline_log(const rrt_pipeline* p) { return p ? p->log.c_str() : ""; }
const char* rrt_pipeline_report(const rrt_pipeline* p) { return p ? p->report.c_str() : ""; }

rrt_status rrt_parse_stage(const char* name, rrt_stage* out) {
  RRT_REQUIRE(name && out, "null argument");
  auto s = rrt::parse_stage(name);
  if (!s) return fail(RRT_ERR_CONFIG, std::string("unknown stage '") + name + "'");
  *out = static_cast<rrt_stage>(*s);
  return RRT_OK;
}

rrt_status rrt_parse_task(const char* name, rrt_task* out) {
  RRT_REQUIRE(name && out, "null argument");
  auto t = rrt::parse_task(name);
  if (!t) return fail(RRT_ERR_CONFIG, std::string("unknown task '") + name + "'");
  *out = static_cast<rrt_task>(*t);
  return RRT_OK;
}

rrt_status rrt_roc_auc(const double* scores, const uint8_t* labels, size_t n, double* out) {
  RRT_REQUIRE(out, "null output");
  return guarded([&] { *out = rrt::roc_auc(scored(scores, labels, n)); });
}

rrt_status rrt_pr_auc(const double* scores, const uint8_t* labels, size_t n, double* out) {
  RRT_REQUIRE(out, "null output");
  return guarded([&] { *out = rrt::pr_auc(scored(scores, labels, n)); });
}

rrt_status rrt_gmean_operating_point(const double* scores, const uint8_t* labels, size_t n, rrt_operating_point* out) {
  RRT_REQUIRE(out, "null output");
  return guarded([&] { copy_point(rrt::gmean_operating_point(scored(scores, labels, n)), out); });
}

rrt_status rrt_threshold_at_sensitivity(const double* scores, const uint8_t* labels, size_t n, double target,
                                        rrt_operating_point* out) {
  RRT_REQUIRE(out, "null output");
  return guarded([&] { copy_point(rrt::threshold_at_sensitivity(scored(scores, labels, n), target), out); });
}

rrt_status rrt_model_load(const char* model_path, const char* vocab_path, rrt_model** out) {
  RRT_REQUIRE(model_path && vocab_path && out, "rrt_model_load: null argument");
  *out = nullptr;
  return guarded([&] {
    const auto vocab = rrt::Vocabulary::parse(rrt::read_file(vocab_path));
    auto m = std::make_unique<rrt_model>();
    m->params = rrt::parse_model(rrt::read_file(model_path), vocab.hash()).first;
    *out = m.release();
  });
}

void rrt_model_free(rrt_model* m) { delete m; }

size_t rrt_model_num_classes(const rrt_model* m) { return m ? m->params.num_classes : 0; }
size_t rrt_model_num_features(const rrt_model* m) { return m ? m->params.num_features : 0; }

rrt_status rrt_model_predict(const rrt_model* m, const uint32_t* indices, size_t n_indices, double* s, double* p) {
  RRT_REQUIRE(m && s && p, "rrt_model_predict: null argument");
  RRT_REQUIRE(n_indices == 0 || indices, "rrt_model_predict: null indices");
  for (size_t i = 0; i < n_indices; ++i) {
    if (indices[i] >= m->params.num_features) return fail(RRT_ERR_DATA, "feature index out of range");
    if (i && indices[i] <= indices[i - 1]) return fail(RRT_ERR_DATA, "feature indices must be strictly increasing");
  }
  return guarded([&] {
    const auto pv = rrt::predict(std::span<const std::uint32_t>(indices, n_indices), m->params);
    std::copy(pv.s.begin(), pv.s.end(), s);
    std::copy(pv.p.begin(), pv.p.end(), p);
  });
}

}  // extern "C"
