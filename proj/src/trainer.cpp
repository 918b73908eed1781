// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/trainer.h"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>

namespace akd {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  AKD_CHECK(peak_lr > 0.0, "train: peak_lr must be positive");
  AKD_CHECK(warmup_steps >= 1 && warmup_steps < total_steps,
            "train: need 1 <= warmup (", warmup_steps, ") < total (",
            total_steps, ")");
  AKD_CHECK(batch_seconds > 0.0, "train: batch_seconds must be positive");
  AKD_CHECK(ema_factor > 0.0 && ema_factor < 1.0, "train: ema factor in (0,1)");
}

TrainConfig TrainConfig::preset_named(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "small-ablation") {
    c.peak_lr = 5e-4;
    c.warmup_steps = 4000;
    c.total_steps = 150000;
    c.batch_seconds = 200.0;
  } else if (name == "small") {
    c.peak_lr = 8e-4;
    c.warmup_steps = 8000;
    c.total_steps = 400000;
    c.batch_seconds = 800.0;
  } else if (name == "base") {
    c.peak_lr = 1e-3;
    c.warmup_steps = 8000;
    c.total_steps = 400000;
    c.batch_seconds = 800.0;
  } else if (name == "large") {
    c.peak_lr = 1.5e-3;
    c.warmup_steps = 8000;
    c.total_steps = 400000;
    c.batch_seconds = 800.0;
  } else if (name == "micro") {
    // CI-scale run, not from the published table
    c.peak_lr = 1e-3;
    c.warmup_steps = 100;
    c.total_steps = 2000;
    c.batch_seconds = 20.0;
  } else {
    throw Error(str("unknown training preset: ", name));
  }
  return c;
}

double lr_at_step(int64_t step, int64_t warmup, int64_t total, double peak) {
  AKD_CHECK(step >= 0, "lr_at_step: negative step");
  AKD_CHECK(step <= total, "lr_at_step: step ", step, " past total ", total);
  AKD_CHECK(warmup >= 1 && warmup < total, "lr_at_step: bad warmup");
  if (step <= warmup)
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * static_cast<double>(total - step) /
         static_cast<double>(total - warmup);
}

AdamW::AdamW(std::vector<ad::NamedParam> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Mat::Zero(p.var.rows(), p.var.cols()));
  }
}

double AdamW::step(double lr) {
  double sq = 0.0;
  for (const auto& p : params_)
    if (p.var.has_grad()) sq += p.var.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip_scale =
      (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm
                                                      : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.var.has_grad()) continue;
    const Mat g = p.var.grad() * clip_scale;
    m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * g;
    v_[i] = cfg_.adam_beta2 * v_[i].array().matrix() +
            (1.0 - cfg_.adam_beta2) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    p.var.mutable_val() -=
        lr * (mhat.array() / (vhat.array().sqrt() + cfg_.adam_eps) +
              cfg_.weight_decay * p.var.val().array())
                 .matrix();
  }
  return norm;
}

void AdamW::state_to(std::vector<std::pair<std::string, Mat>>& tensors) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    tensors.emplace_back(params_[i].name + ".adam_m", m_[i]);
    tensors.emplace_back(params_[i].name + ".adam_v", v_[i]);
  }
}

void AdamW::state_from(const Checkpoint& ckpt) {
  for (size_t i = 0; i < params_.size(); ++i) {
    const Mat* m = ckpt.find(params_[i].name + ".adam_m");
    const Mat* v = ckpt.find(params_[i].name + ".adam_v");
    AKD_CHECK(m && v, "checkpoint is missing optimizer state for ",
              params_[i].name);
    m_[i] = *m;
    v_[i] = *v;
  }
}

namespace {

std::vector<ad::NamedParam> trainable_params(StudentModel& student,
                                             PredictionHeads& heads) {
  std::vector<ad::NamedParam> all;
  for (const auto& p : student.params().all()) all.push_back(p);
  for (const auto& p : heads.params().all()) all.push_back(p);
  return all;
}

uint64_t epoch_seed(uint64_t base, int64_t epoch) {
  return splitmix64(base ^ (0xA24BAED4963EE407ULL +
                            static_cast<uint64_t>(epoch) * 0x9E3779B97F4A7C15ULL));
}

}  // namespace

Trainer::Trainer(StudentModel& student, PredictionHeads& heads, Teacher& t1,
                 Teacher& t2, const DistillPlan& plan,
                 const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                 const Manifest& manifest, std::string run_dir,
                 std::string config_json)
    : student_(student),
      heads_(heads),
      t1_(t1),
      t2_(t2),
      plan_(plan),
      loss_cfg_(loss_cfg),
      cfg_(train_cfg),
      manifest_(manifest),
      run_dir_(std::move(run_dir)),
      config_json_(std::move(config_json)),
      opt_(trainable_params(student, heads), train_cfg) {
  cfg_.validate();
  AKD_CHECK(manifest_.has_norm,
            "trainer needs normalization stats in the manifest header");
  AKD_CHECK(!manifest_.entries.empty(), "trainer: empty manifest");
  config_hash_ = fnv1a(config_json_);
}

std::vector<Trainer::LoadedClip> Trainer::load_batch(
    const std::vector<int>& indices) const {
  std::vector<LoadedClip> out;
  out.reserve(indices.size());
  for (int idx : indices) {
    const ManifestEntry& e = manifest_.entries[static_cast<size_t>(idx)];
    int rate = 0;
    Wave wave = read_wav(e.path, &rate);
    AKD_CHECK(rate == 16000, "clip ", e.id, " is not 16 kHz; rerun prepare");
    out.push_back({e.id, compute_logmel(wave, rate)});
  }
  return out;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.config_json = config_json_;
  ckpt.config_hash = config_hash_;
  ckpt.step = step_;
  ckpt.epoch = epoch_;
  ckpt.batch_idx = batch_idx_;
  ckpt.ema_loss = ema_;
  ckpt.initial_ema = initial_ema_;
  ckpt.flops_cum = flops_cum_;
  // per-step RNG streams are derived from (seed, step), so no engine state
  // needs to be carried
  ckpt.rng_state = "";
  for (const auto& p : opt_.params())
    ckpt.tensors.emplace_back(p.name, p.var.val());
  opt_.state_to(ckpt.tensors);
  return ckpt;
}

void Trainer::save(const std::string& path) const {
  save_checkpoint(path, snapshot());
}

void Trainer::resume_from(const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  AKD_CHECK(ckpt.config_hash == config_hash_,
            "resume: config hash mismatch (checkpoint ", ckpt.config_hash,
            ", run ", config_hash_, ")");
  for (auto& p : opt_.mutable_params()) {
    const Mat* m = ckpt.find(p.name);
    AKD_CHECK(m != nullptr, "resume: tensor ", p.name, " missing");
    AKD_CHECK(m->rows() == p.var.rows() && m->cols() == p.var.cols(),
              "resume: shape mismatch for ", p.name);
    p.var.mutable_val() = *m;
  }
  opt_.state_from(ckpt);
  opt_.set_steps_taken(ckpt.step);
  step_ = ckpt.step;
  epoch_ = ckpt.epoch;
  batch_idx_ = ckpt.batch_idx;
  ema_ = ckpt.ema_loss;
  initial_ema_ = ckpt.initial_ema;
  flops_cum_ = ckpt.flops_cum;
  ema_started_ = step_ > 0;
}

TrainResult Trainer::run() {
  fs::create_directories(run_dir_);
  std::ofstream metrics(run_dir_ + "/metrics.jsonl", std::ios::app);
  AKD_CHECK(metrics.good(), "cannot open metrics log in ", run_dir_);

  const uint64_t t1_hash = t1_.param_hash();
  const uint64_t t2_hash = t2_.param_hash();
  const auto t1_layers = plan_.teacher_layers(1);
  const auto t2_layers = plan_.teacher_layers(2);

  auto batches =
      batch_by_seconds(manifest_, cfg_.batch_seconds, epoch_seed(cfg_.seed, epoch_));
  const int64_t ckpt_every = cfg_.checkpoint_interval();

  TrainResult result;
  std::future<std::vector<LoadedClip>> pending;
  double last_loss = 0.0;

  while (step_ < cfg_.total_steps) {
    if (batch_idx_ >= static_cast<int64_t>(batches.size())) {
      ++epoch_;
      batch_idx_ = 0;
      if (pending.valid()) pending.get();
      batches = batch_by_seconds(manifest_, cfg_.batch_seconds,
                                 epoch_seed(cfg_.seed, epoch_));
    }
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<LoadedClip> loaded =
        pending.valid() ? pending.get()
                        : load_batch(batches[static_cast<size_t>(batch_idx_)]);
    // bounded (depth-1) prefetch of the next batch; deterministic mode loads
    // synchronously in order
    if (!cfg_.deterministic &&
        batch_idx_ + 1 < static_cast<int64_t>(batches.size()) &&
        step_ + 1 < cfg_.total_steps) {
      const std::vector<int> next =
          batches[static_cast<size_t>(batch_idx_ + 1)];
      pending = std::async(std::launch::async,
                           [this, next]() { return load_batch(next); });
    }

    std::vector<ClipBatchItem> batch;
    std::vector<TeacherTargets> tt1, tt2;
    double flops_step = 0.0;
    for (const auto& clip : loaded) {
      tt1.push_back(t1_.targets(clip.id, &clip.raw_mel, t1_layers));
      tt2.push_back(t2_.targets(clip.id, &clip.raw_mel, t2_layers));
      batch.push_back({clip.id, normalize(clip.raw_mel, manifest_.norm)});
      flops_step += 3.0 * static_cast<double>(count_flops(
                              student_.config().encoder,
                              student_.token_count(clip.raw_mel.data.rows())));
    }

    const uint64_t step_base =
        splitmix64(cfg_.seed ^ (static_cast<uint64_t>(step_) + 1));
    Rng mask_rng = rng_for(step_base, "mask");
    Rng dropout_rng = rng_for(step_base, "dropout");
    Rng negative_rng = rng_for(step_base, "negatives");
    StepStats stats = distill_step(
        student_, heads_, plan_, batch, tt1, tt2, loss_cfg_,
        loss_cfg_.mask.enabled ? &mask_rng : nullptr,
        student_.config().encoder.dropout > 0.0 ? &dropout_rng : nullptr,
        loss_cfg_.objective == Objective::infonce ? &negative_rng : nullptr);

    if (!std::isfinite(stats.loss)) {
      save(run_dir_ + "/nan_diagnostic.akdckpt");
      metrics << json{{"step", step_ + 1}, {"event", "nan-abort"}}.dump()
              << "\n";
      throw Error(str("non-finite loss at step ", step_ + 1,
                      "; diagnostic snapshot written to ", run_dir_));
    }

    const double lr =
        lr_at_step(step_ + 1, cfg_.warmup_steps, cfg_.total_steps, cfg_.peak_lr);
    const double grad_norm = opt_.step(lr);

    ++step_;
    ++batch_idx_;
    flops_cum_ += flops_step;
    last_loss = stats.loss;
    if (!ema_started_) {
      ema_ = stats.loss;
      initial_ema_ = stats.loss;
      ema_started_ = true;
    } else {
      ema_ = cfg_.ema_factor * ema_ + (1.0 - cfg_.ema_factor) * stats.loss;
    }

    const double wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t_start)
            .count();
    if (step_ % cfg_.log_every == 0 || step_ == cfg_.total_steps) {
      metrics << json{{"step", step_},
                      {"loss", stats.loss},
                      {"ema", ema_},
                      {"lr", lr},
                      {"grad_norm", grad_norm},
                      {"loss_frames", stats.loss_frames},
                      {"flops_cum", flops_cum_},
                      {"wall_ms", wall_ms}}
                     .dump()
              << "\n";
    }
    if (step_ % ckpt_every == 0 && step_ < cfg_.total_steps) {
      const std::string path = str(run_dir_, "/ckpt_", step_, ".akdckpt");
      save(path);
      result.checkpoint_paths.push_back(path);
    }
  }
  if (pending.valid()) pending.get();

  AKD_CHECK(t1_.param_hash() == t1_hash && t2_.param_hash() == t2_hash,
            "frozen-teacher guarantee violated: teacher parameters changed");

  result.steps_run = step_;
  result.initial_ema = initial_ema_;
  result.final_ema = ema_;
  result.final_loss = last_loss;
  result.flops_cum = flops_cum_;
  result.final_checkpoint = run_dir_ + "/final.akdckpt";
  save(result.final_checkpoint);
  result.checkpoint_paths.push_back(result.final_checkpoint);
  return result;
}

}  // namespace akd
