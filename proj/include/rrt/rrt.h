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

/* C interface to the rrtpredict library. All functions are thread-safe with
 * respect to distinct handles; a handle must not be used concurrently.
 * Strings returned by the library stay valid until the next call on the same
 * handle (or, for rrt_last_error, the next failing call on the same thread). */
#ifndef RRT_RRT_H_
#define RRT_RRT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(RRT_BUILDING_LIBRARY)
#define RRT_API __attribute__((visibility("default")))
#else
#define RRT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rrt_status {
  RRT_OK = 0,
  RRT_ERR_CONFIG = 1, /* usage or configuration error */
  RRT_ERR_DATA = 2,   /* malformed, missing or stale input */
  RRT_ERR_NUMERIC = 3,
  RRT_ERR_INTERNAL = 4
} rrt_status;

typedef enum rrt_stage {
  RRT_STAGE_SYNTH = 0,
  RRT_STAGE_TRIGGERS = 1,
  RRT_STAGE_FEATURIZE = 2,
  RRT_STAGE_TRAIN = 3,
  RRT_STAGE_PREDICT = 4,
  RRT_STAGE_EVALUATE = 5,
  RRT_STAGE_REPRODUCE = 6
} rrt_stage;

typedef enum rrt_task { RRT_TASK_ALL = -1, RRT_TASK_RRT = 0, RRT_TASK_DIALYSIS = 1, RRT_TASK_TRANSPLANT = 2 } rrt_task;

typedef struct rrt_pipeline rrt_pipeline;
typedef struct rrt_model rrt_model;

/* Message of the last failing call on this thread, or "" */
RRT_API const char* rrt_last_error(void);
RRT_API const char* rrt_version(void);

/* Parses and validates the config; no work is done. */
RRT_API rrt_status rrt_pipeline_open(const char* config_path, rrt_pipeline** out);
RRT_API void rrt_pipeline_close(rrt_pipeline* p);
RRT_API rrt_status rrt_pipeline_set_workers(rrt_pipeline* p, unsigned workers);
RRT_API rrt_status rrt_pipeline_set_seed(rrt_pipeline* p, uint64_t seed);
RRT_API rrt_status rrt_pipeline_set_task(rrt_pipeline* p, rrt_task task);
RRT_API rrt_status rrt_pipeline_run(rrt_pipeline* p, rrt_stage stage);
/* Progress lines from the last run, newline-separated. */
RRT_API const char* rrt_pipeline_log(const rrt_pipeline* p);
/* Text of the evaluation report, or "" when evaluate has not run. */
RRT_API const char* rrt_pipeline_report(const rrt_pipeline* p);

RRT_API rrt_status rrt_parse_stage(const char* name, rrt_stage* out);
RRT_API rrt_status rrt_parse_task(const char* name, rrt_task* out);

/* Metrics over parallel arrays of scores and 0/1 labels. */
RRT_API rrt_status rrt_roc_auc(const double* scores, const uint8_t* labels, size_t n, double* out);
RRT_API rrt_status rrt_pr_auc(const double* scores, const uint8_t* labels, size_t n, double* out);

typedef struct rrt_operating_point {
  double threshold;
  double sensitivity;
  double specificity;
  uint64_t tp, fp, tn, fn;
} rrt_operating_point;

RRT_API rrt_status rrt_gmean_operating_point(const double* scores, const uint8_t* labels, size_t n,
                                             rrt_operating_point* out);
RRT_API rrt_status rrt_threshold_at_sensitivity(const double* scores, const uint8_t* labels, size_t n, double target,
                                                rrt_operating_point* out);

/* Loads a model file and checks it against the vocabulary it was trained on. */
RRT_API rrt_status rrt_model_load(const char* model_path, const char* vocab_path, rrt_model** out);
RRT_API void rrt_model_free(rrt_model* m);
RRT_API size_t rrt_model_num_classes(const rrt_model* m);
RRT_API size_t rrt_model_num_features(const rrt_model* m);
/* Sparse binary input given by strictly increasing feature indices. `s` needs
 * num_classes slots, `p` num_classes - 1. */
RRT_API rrt_status rrt_model_predict(const rrt_model* m, const uint32_t* indices, size_t n_indices, double* s,
                                     double* p);

#ifdef __cplusplus
}
#endif

#endif /* RRT_RRT_H_ */
