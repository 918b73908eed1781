// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Optimization loop: linear warmup/decay schedule, AdamW stepping with
// global-norm clipping, periodic checkpoints, checkpoint weight averaging,
// JSONL metrics, and cumulative FLOP accounting.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "akd/checkpoint.h"
#include "akd/datapipe.h"
#include "akd/distill.h"
#include "akd/model.h"
#include "akd/teachers.h"

namespace akd {

struct TrainConfig {
  std::string preset = "micro";
  double peak_lr = 1e-3;
  int64_t warmup_steps = 200;
  int64_t total_steps = 2000;
  double batch_seconds = 20.0;
  uint64_t seed = 0;
  bool deterministic = false;

  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-6;
  double grad_clip = 1.0;
  double ema_factor = 0.98;
  int64_t checkpoint_every = 0;  // 0 -> max(total/20, 500)
  int64_t log_every = 1;

  void validate() const;
  int64_t checkpoint_interval() const {
    return checkpoint_every > 0 ? checkpoint_every
                                : std::max<int64_t>(total_steps / 20, 500);
  }

  // Training presets from the published hyperparameter table, plus "micro"
  // for CI-scale runs.
  static TrainConfig preset_named(const std::string& name);
};

// peak * step / warmup while warming up, then linear decay to 0 at total.
double lr_at_step(int64_t step, int64_t warmup, int64_t total, double peak);

class AdamW {
 public:
  AdamW(std::vector<ad::NamedParam> params, const TrainConfig& cfg);

  // Applies one update using the gradients currently on the parameters.
  // Returns the pre-clip global gradient norm.
  double step(double lr);

  int64_t steps_taken() const { return t_; }
  const std::vector<ad::NamedParam>& params() const { return params_; }
  std::vector<ad::NamedParam>& mutable_params() { return params_; }
  void state_to(std::vector<std::pair<std::string, Mat>>& tensors) const;
  void state_from(const Checkpoint& ckpt);
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  std::vector<ad::NamedParam> params_;
  std::vector<Mat> m_, v_;
  TrainConfig cfg_;
  int64_t t_ = 0;
};

struct TrainResult {
  int64_t steps_run = 0;
  double initial_ema = 0.0;
  double final_ema = 0.0;
  double final_loss = 0.0;
  double flops_cum = 0.0;
  std::vector<std::string> checkpoint_paths;
  std::string final_checkpoint;
};

class Trainer {
 public:
  Trainer(StudentModel& student, PredictionHeads& heads, Teacher& t1,
          Teacher& t2, const DistillPlan& plan, const LossConfig& loss_cfg,
          const TrainConfig& train_cfg, const Manifest& manifest,
          std::string run_dir, std::string config_json = "{}");

  void resume_from(const std::string& ckpt_path);
  TrainResult run();

  Checkpoint snapshot() const;
  uint64_t config_hash() const { return config_hash_; }

 private:
  struct LoadedClip {
    std::string id;
    MelFrames raw_mel;
  };

  std::vector<LoadedClip> load_batch(const std::vector<int>& indices) const;
  void save(const std::string& path) const;

  StudentModel& student_;
  PredictionHeads& heads_;
  Teacher& t1_;
  Teacher& t2_;
  DistillPlan plan_;
  LossConfig loss_cfg_;
  TrainConfig cfg_;
  Manifest manifest_;
  std::string run_dir_;
  std::string config_json_;
  uint64_t config_hash_ = 0;

  AdamW opt_;
  int64_t step_ = 0;
  int64_t epoch_ = 0;
  int64_t batch_idx_ = 0;
  double ema_ = 0.0;
  double initial_ema_ = 0.0;
  bool ema_started_ = false;
  double flops_cum_ = 0.0;
};

}  // namespace akd
