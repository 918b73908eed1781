// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/distill.h"

#include <algorithm>
#include <cmath>

namespace akd {

std::vector<int> select_layers(int n_layers, int k_layers) {
  AKD_CHECK(k_layers >= 1, "select_layers: K must be >= 1, got ", k_layers);
  AKD_CHECK(k_layers <= n_layers, "select_layers: K (", k_layers,
            ") exceeds depth L (", n_layers, ")");
  std::vector<int> out;
  out.reserve(k_layers);
  for (int k = 1; k <= k_layers; ++k)
    out.push_back(k * n_layers / k_layers);
  return out;
}

DistillPlan DistillPlan::make(int student_layers, int t1_layers, int t2_layers,
                              int K) {
  DistillPlan plan;
  plan.K = K;
  const auto ls = select_layers(student_layers, K);
  const auto l1 = select_layers(t1_layers, K);
  const auto l2 = select_layers(t2_layers, K);
  for (int k = 0; k < K; ++k)
    plan.pairs.push_back({ls[k], l1[k], l2[k]});
  return plan;
}

std::vector<int> DistillPlan::student_layers() const {
  std::vector<int> out;
  for (const auto& p : pairs) out.push_back(p[0]);
  return out;
}

std::vector<int> DistillPlan::teacher_layers(int teacher) const {
  AKD_CHECK(teacher == 1 || teacher == 2, "teacher index must be 1 or 2");
  std::vector<int> out;
  for (const auto& p : pairs) out.push_back(p[teacher]);
  return out;
}

double l1_cosine_loss(const Eigen::RowVectorXd& pred,
                      const Eigen::RowVectorXd& target, long* degenerate) {
  AKD_CHECK(pred.size() == target.size() && pred.size() >= 1,
            "l1_cosine_loss: dimension mismatch");
  const double D = static_cast<double>(pred.size());
  const double l1 = (pred - target).cwiseAbs().sum() / D;
  const double np = pred.norm(), nt = target.norm();
  double cos = 0.0;
  if (np < 1e-30 || nt < 1e-30) {
    if (degenerate) ++(*degenerate);
  } else {
    cos = pred.dot(target) / (np * nt);
  }
  // -log sigmoid(cos), computed stably
  const double nls = cos >= 0.0 ? std::log1p(std::exp(-cos))
                                : -cos + std::log1p(std::exp(cos));
  return l1 + nls;
}

ad::Var l1_cosine_rows(const ad::Var& pred, const Mat& target,
                       long* degenerate) {
  AKD_CHECK(pred.rows() == target.rows() && pred.cols() == target.cols(),
            "l1_cosine_rows: shape mismatch");
  ad::Var l1 = ad::scale(ad::row_sum(ad::abs_val(ad::sub_constmat(pred, target))),
                         1.0 / static_cast<double>(pred.cols()));
  ad::Var cos = ad::row_cosine(pred, target, degenerate);
  return ad::sub(l1, ad::log_sigmoid(cos));
}

double aggregate_loss(const std::vector<Mat>& per_teacher_terms) {
  AKD_CHECK(per_teacher_terms.size() == 2,
            "aggregate_loss: expected terms for exactly 2 teachers");
  const Mat& a = per_teacher_terms[0];
  const Mat& b = per_teacher_terms[1];
  AKD_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
            "aggregate_loss: teacher term shapes differ");
  AKD_CHECK(a.cols() > 0 && a.rows() > 0, "no loss frames");
  const double K = static_cast<double>(a.rows());
  const double T = static_cast<double>(a.cols());
  return (a.sum() + b.sum()) / (2.0 * K * T);
}

double infonce_loss(const Eigen::RowVectorXd& pred,
                    const Eigen::RowVectorXd& target,
                    const std::vector<Eigen::RowVectorXd>& negatives,
                    double temperature) {
  AKD_CHECK(!negatives.empty(), "infonce_loss: empty negative set");
  AKD_CHECK(temperature > 0.0, "infonce_loss: temperature must be positive");
  auto cos = [](const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    const double nx = x.norm(), ny = y.norm();
    if (nx < 1e-30 || ny < 1e-30) return 0.0;
    return x.dot(y) / (nx * ny);
  };
  std::vector<double> logits;
  logits.push_back(cos(pred, target) / temperature);
  for (const auto& n : negatives) logits.push_back(cos(pred, n) / temperature);
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  return std::log(z) + m - logits[0];
}

std::vector<Eigen::Index> sample_mask_spans(Eigen::Index T,
                                            const MaskPolicy& policy,
                                            Rng& rng) {
  AKD_CHECK(policy.enabled, "mask sampling requires an enabled policy");
  AKD_CHECK(T > 0, "mask sampling needs a non-empty sequence");
  auto draw = [&]() {
    std::vector<bool> masked(T, false);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (rng.uniform() < policy.mask_prob) {
        for (Eigen::Index u = t; u < std::min<Eigen::Index>(T, t + policy.span_len); ++u)
          masked[u] = true;
      }
    }
    std::vector<Eigen::Index> idx;
    for (Eigen::Index t = 0; t < T; ++t)
      if (masked[t]) idx.push_back(t);
    return idx;
  };
  std::vector<Eigen::Index> idx = draw();
  if (idx.empty()) idx = draw();  // one resample
  AKD_CHECK(!idx.empty(), "mask sampling produced an empty mask twice");
  return idx;
}

std::pair<FeatureSequence, std::vector<Eigen::Index>> apply_mask(
    const FeatureSequence& features, const MaskPolicy& policy,
    const Mat& mask_embedding, uint64_t seed) {
  AKD_CHECK(mask_embedding.rows() == 1 &&
                mask_embedding.cols() == features.data.cols(),
            "apply_mask: embedding must be 1x", features.data.cols());
  Rng rng(seed);
  auto idx = sample_mask_spans(features.data.rows(), policy, rng);
  FeatureSequence out = features;
  for (Eigen::Index r : idx) out.data.row(r) = mask_embedding.row(0);
  return {std::move(out), std::move(idx)};
}

Objective objective_from_name(const std::string& name) {
  if (name == "l1cos") return Objective::l1cos;
  if (name == "infonce") return Objective::infonce;
  throw Error(str("unknown objective: ", name, " (expected l1cos|infonce)"));
}

const char* objective_name(Objective o) {
  return o == Objective::l1cos ? "l1cos" : "infonce";
}

PredictionHeads::PredictionHeads(const DistillPlan& plan, int d_model,
                                 int t1_dim, int t2_dim, uint64_t seed,
                                 double init_std)
    : K_(plan.K) {
  Rng rng = rng_for(seed, "heads-init");
  heads_.reserve(2 * static_cast<size_t>(K_));
  for (int k = 0; k < K_; ++k) {
    heads_.emplace_back(params_, str("heads.k", k + 1, ".t1"), d_model, t1_dim,
                        rng, init_std);
    heads_.emplace_back(params_, str("heads.k", k + 1, ".t2"), d_model, t2_dim,
                        rng, init_std);
  }
}

const PredictionHead& PredictionHeads::head(int k, int teacher) const {
  AKD_CHECK(k >= 0 && k < K_, "head index k out of range");
  AKD_CHECK(teacher == 1 || teacher == 2, "teacher index must be 1 or 2");
  return heads_[static_cast<size_t>(k) * 2 + (teacher - 1)];
}

namespace {

// LN without affine params, applied per row: used for the optional
// target-normalization ablation.
Mat layernorm_rows(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mu = m.row(i).mean();
    const double var = (m.row(i).array() - mu).square().mean();
    out.row(i) = (m.row(i).array() - mu) / std::sqrt(var + 1e-5);
  }
  return out;
}

struct NcePool {
  Mat rows;                       // vstack of all clips' targets
  std::vector<Eigen::Index> off;  // per-clip starting row
};

}  // namespace

StepStats distill_step(StudentModel& student, PredictionHeads& heads,
                       const DistillPlan& plan,
                       const std::vector<ClipBatchItem>& batch,
                       const std::vector<TeacherTargets>& t1_targets,
                       const std::vector<TeacherTargets>& t2_targets,
                       const LossConfig& loss_cfg, Rng* mask_rng,
                       Rng* dropout_rng, Rng* negative_rng) {
  AKD_CHECK(!batch.empty(), "distill_step: empty batch");
  AKD_CHECK(batch.size() == t1_targets.size() &&
                batch.size() == t2_targets.size(),
            "distill_step: target/batch count mismatch");
  const int K = plan.K;
  const auto student_layers = plan.student_layers();

  student.params().zero_grad();
  heads.params().zero_grad();

  StepStats stats;
  stats.head_evaluations = 2 * K;

  auto target_of = [&](int clip, int teacher, int k) -> Mat {
    const TeacherTargets& tt =
        teacher == 1 ? t1_targets[clip] : t2_targets[clip];
    Mat z = tt.layer(plan.pairs[k][teacher]);
    if (loss_cfg.normalize_targets) z = layernorm_rows(z);
    return z;
  };

  // InfoNCE negatives come from all positions in the batch for the same
  // (layer, teacher) pair.
  std::vector<std::vector<NcePool>> pools;  // [K][teacher-1]
  if (loss_cfg.objective == Objective::infonce) {
    AKD_CHECK(negative_rng != nullptr, "infonce requires a negative rng");
    pools.resize(K);
    for (int k = 0; k < K; ++k) {
      for (int teacher = 1; teacher <= 2; ++teacher) {
        NcePool pool;
        Eigen::Index total = 0;
        std::vector<Mat> mats;
        for (size_t c = 0; c < batch.size(); ++c) {
          mats.push_back(target_of(static_cast<int>(c), teacher, k));
          pool.off.push_back(total);
          total += mats.back().rows();
        }
        pool.rows.resize(total, mats[0].cols());
        for (size_t c = 0; c < mats.size(); ++c)
          pool.rows.middleRows(pool.off[c], mats[c].rows()) = mats[c];
        pools[k].push_back(std::move(pool));
      }
    }
  }

  double total_sum = 0.0;
  long total_terms = 0;
  for (size_t c = 0; c < batch.size(); ++c) {
    ad::Var feats = student.embed(batch[c].mel);
    const Eigen::Index T = feats.rows();
    std::vector<Eigen::Index> mask_idx;
    if (loss_cfg.mask.enabled) {
      AKD_CHECK(mask_rng != nullptr, "masking requires a mask rng");
      mask_idx = sample_mask_spans(T, loss_cfg.mask, *mask_rng);
      feats = ad::replace_rows(feats, mask_idx, student.mask_embedding());
    }
    EncoderTaps enc =
        student.encoder().forward(feats, student_layers, nullptr, dropout_rng);

    ad::Var clip_sum;
    for (int k = 0; k < K; ++k) {
      const ad::Var& tap = enc.taps[static_cast<size_t>(k)].second;
      for (int teacher = 1; teacher <= 2; ++teacher) {
        const TeacherTargets& tt =
            teacher == 1 ? t1_targets[c] : t2_targets[c];
        const Mat z = target_of(static_cast<int>(c), teacher, k);
        ad::Var aligned = align_tap(tap, tt.framerate, student.framerate());
        const Eigen::Index n = std::min(aligned.rows(), z.rows());
        AKD_CHECK(n > 0, "distill: no overlapping frames at pair (student ",
                  plan.pairs[k][0], ", T", teacher, " layer ",
                  plan.pairs[k][teacher], ") for clip ", batch[c].id);

        std::vector<Eigen::Index> rows;
        if (loss_cfg.mask.enabled) {
          const Eigen::Index ratio = tt.framerate == 25.0 ? 2 : 1;
          Eigen::Index prev = -1;
          for (Eigen::Index m : mask_idx) {
            const Eigen::Index r = m / ratio;
            if (r != prev && r < n) {
              rows.push_back(r);
              prev = r;
            }
          }
          if (rows.empty()) continue;  // mask fell entirely past overlap
        } else {
          rows.resize(n);
          for (Eigen::Index i = 0; i < n; ++i) rows[i] = i;
        }

        Mat zsel(static_cast<Eigen::Index>(rows.size()), z.cols());
        for (size_t i = 0; i < rows.size(); ++i)
          zsel.row(static_cast<Eigen::Index>(i)) = z.row(rows[i]);

        ad::Var sel = ad::gather_rows(aligned, rows);
        ad::Var pred = heads.head(k, teacher).forward(sel);
        AKD_CHECK(pred.cols() == zsel.cols(),
                  "distill: dimension mismatch at pair (student ",
                  plan.pairs[k][0], ", T", teacher, " layer ",
                  plan.pairs[k][teacher], "): head gives ", pred.cols(),
                  ", target has ", zsel.cols());

        ad::Var loss_rows;
        if (loss_cfg.objective == Objective::l1cos) {
          loss_rows = l1_cosine_rows(pred, zsel, &stats.degenerate_cosines);
        } else {
          const NcePool& pool = pools[k][teacher - 1];
          std::vector<std::vector<Eigen::Index>> neg(rows.size());
          for (size_t i = 0; i < rows.size(); ++i) {
            const Eigen::Index self_row = pool.off[c] + rows[i];
            neg[i].reserve(loss_cfg.infonce_negatives);
            for (int j = 0; j < loss_cfg.infonce_negatives; ++j) {
              Eigen::Index r;
              do {
                r = static_cast<Eigen::Index>(
                    negative_rng->randint(pool.rows.rows()));
              } while (r == self_row && pool.rows.rows() > 1);
              neg[i].push_back(r);
            }
          }
          loss_rows = ad::infonce_rows(pred, zsel, pool.rows, neg,
                                       loss_cfg.infonce_temperature);
        }
        ad::Var pair_sum = ad::sum_all(loss_rows);
        clip_sum = clip_sum.defined() ? ad::add(clip_sum, pair_sum) : pair_sum;
        total_terms += static_cast<long>(rows.size());
      }
    }
    if (clip_sum.defined()) {
      total_sum += clip_sum.val()(0, 0);
      ad::backward(clip_sum);
    }
  }
  AKD_CHECK(total_terms > 0, "no loss frames");
  const double inv = 1.0 / static_cast<double>(total_terms);
  for (auto& p : student.params().all())
    if (p.var.has_grad()) p.var.node()->grad *= inv;
  for (auto& p : heads.params().all())
    if (p.var.has_grad()) p.var.node()->grad *= inv;
  stats.loss = total_sum * inv;
  stats.loss_frames = total_terms;
  return stats;
}

}  // namespace akd
