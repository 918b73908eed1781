// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Sparse layer-to-layer distillation: layer pairing, per-(layer, teacher)
// MLP prediction heads, and the distillation objectives (L1-cosine default;
// InfoNCE and mask-prediction as configurable variants).

#pragma once

#include <array>
#include <utility>
#include <vector>

#include "akd/model.h"
#include "akd/teachers.h"

namespace akd {

// [floor(k*L/K) for k = 1..K]; strictly increasing, ends at L.
std::vector<int> select_layers(int n_layers, int k_layers);

struct DistillPlan {
  int K = 4;
  std::vector<std::array<int, 3>> pairs;  // (student, teacher1, teacher2)

  static DistillPlan make(int student_layers, int t1_layers, int t2_layers,
                          int K);
  std::vector<int> student_layers() const;
  std::vector<int> teacher_layers(int teacher) const;  // teacher: 1 or 2
};

// (1/D) * sum |pred - target|  -  log sigmoid(cos(pred, target)).
// Zero-norm vectors use cos = 0 (a log 2 penalty) and bump *degenerate.
double l1_cosine_loss(const Eigen::RowVectorXd& pred,
                      const Eigen::RowVectorXd& target,
                      long* degenerate = nullptr);
// Per-frame variant on the graph: -> [T x 1].
ad::Var l1_cosine_rows(const ad::Var& pred, const Mat& target,
                       long* degenerate = nullptr);

// (1/(2KT)) * sum over layers/frames of both teachers' terms.
// per_teacher_terms holds exactly 2 matrices of shape [K x T].
double aggregate_loss(const std::vector<Mat>& per_teacher_terms);

double infonce_loss(const Eigen::RowVectorXd& pred,
                    const Eigen::RowVectorXd& target,
                    const std::vector<Eigen::RowVectorXd>& negatives,
                    double temperature);

struct MaskPolicy {
  bool enabled = false;
  double mask_prob = 0.08;  // per-frame span-start rate
  int span_len = 10;
};

// Samples mask span starts at rate mask_prob, each covering span_len frames.
// An empty draw is resampled once; a second empty draw is an error.
std::vector<Eigen::Index> sample_mask_spans(Eigen::Index T,
                                            const MaskPolicy& policy, Rng& rng);

// Value-level masking: replaces masked frames with the given embedding row.
std::pair<FeatureSequence, std::vector<Eigen::Index>> apply_mask(
    const FeatureSequence& features, const MaskPolicy& policy,
    const Mat& mask_embedding, uint64_t seed);

enum class Objective { l1cos, infonce };
Objective objective_from_name(const std::string& name);
const char* objective_name(Objective o);

struct LossConfig {
  Objective objective = Objective::l1cos;
  MaskPolicy mask;
  int infonce_negatives = 100;
  double infonce_temperature = 0.1;
  bool normalize_targets = false;  // per-target layer norm (ablation flag)
};

class PredictionHead {
 public:
  PredictionHead() = default;
  PredictionHead(ad::ParamStore& ps, const std::string& prefix, int d_model,
                 int target_dim, Rng& rng, double init_std)
      : fc1_(ps, prefix + ".fc1", d_model, d_model, rng, init_std),
        fc2_(ps, prefix + ".fc2", d_model, target_dim, rng, init_std) {}

  ad::Var forward(const ad::Var& x) const {
    return fc2_.forward(ad::relu(fc1_.forward(x)));
  }

 private:
  Linear fc1_, fc2_;
};

// The 2K per-(layer, teacher) heads.
class PredictionHeads {
 public:
  PredictionHeads(const DistillPlan& plan, int d_model, int t1_dim, int t2_dim,
                  uint64_t seed, double init_std);

  const PredictionHead& head(int k, int teacher) const;
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  int K() const { return K_; }

 private:
  ad::ParamStore params_;
  std::vector<PredictionHead> heads_;  // index k*2 + (teacher-1)
  int K_ = 0;
};

struct ClipBatchItem {
  std::string id;
  MelFrames mel;  // normalized, student-side
};

struct StepStats {
  double loss = 0.0;            // aggregated mean over all computed terms
  long loss_frames = 0;         // total (pair, frame) terms
  long head_evaluations = 0;    // distinct head applications per clip (= 2K)
  long degenerate_cosines = 0;  // zero-norm cosine fallbacks
};

// Builds the graph clip by clip, runs backward, and leaves mean-scaled
// gradients on the student and head parameters. Teacher targets are inputs
// (already frozen); `t1_targets[i]`/`t2_targets[i]` belong to batch[i].
StepStats distill_step(StudentModel& student, PredictionHeads& heads,
                       const DistillPlan& plan,
                       const std::vector<ClipBatchItem>& batch,
                       const std::vector<TeacherTargets>& t1_targets,
                       const std::vector<TeacherTargets>& t2_targets,
                       const LossConfig& loss_cfg, Rng* mask_rng,
                       Rng* dropout_rng, Rng* negative_rng);

}  // namespace akd
