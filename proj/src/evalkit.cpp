// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/evalkit.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "akd/synth.h"

namespace akd {

Direction direction_from_name(const std::string& s) {
  if (s == "higher_better") return Direction::higher_better;
  if (s == "lower_better") return Direction::lower_better;
  throw Error(str("unknown metric direction: ", s));
}

const char* direction_name(Direction d) {
  return d == Direction::higher_better ? "higher_better" : "lower_better";
}

double superb_score(const ScoreTable& table) {
  AKD_CHECK(!table.rows.empty(), "score table is empty");
  double acc = 0.0;
  for (const auto& row : table.rows) {
    const double denom = row.sota - row.baseline;
    AKD_CHECK(std::abs(denom) > 1e-12, "degenerate anchor for task '",
              row.task, "': baseline equals SOTA");
    acc += (row.value - row.baseline) / denom;
  }
  return 1000.0 * acc / static_cast<double>(table.rows.size());
}

std::vector<ExtractedClip> extract_representations(
    const StudentModel& model, const NormStats& stats,
    const std::vector<MelFrames>& raw_mels, Granularity granularity) {
  ad::NoGradGuard frozen;
  std::vector<int> all_layers;
  for (int l = 1; l <= model.config().encoder.n_layers; ++l)
    all_layers.push_back(l);

  std::vector<ExtractedClip> out;
  out.reserve(raw_mels.size());
  for (const auto& raw : raw_mels) {
    MelFrames mel = raw.norm_applied ? raw : normalize(raw, stats);
    ad::Var feats = model.embed(mel);
    EncoderTaps taps = model.encoder().forward(feats, all_layers);
    ExtractedClip clip;
    for (auto& [layer, var] : taps.taps) clip.layers.push_back(var.val());
    clip.layers.push_back(taps.final.val());
    if (granularity == Granularity::instance) {
      for (Mat& m : clip.layers) {
        Mat pooled = m.colwise().mean();
        m = pooled;
      }
    }
    out.push_back(std::move(clip));
  }
  return out;
}

namespace {

struct ProbeDataset {
  std::vector<Mat> X;  // per layer [N x d], standardized with train stats
  std::vector<int> y;
  std::vector<Eigen::Index> train_idx, test_idx;
  int classes = 0;
};

ProbeDataset assemble(const std::vector<ExtractedClip>& clips,
                      const std::vector<std::vector<int>>& labels_per_clip,
                      const ProbeOptions& opts) {
  AKD_CHECK(!clips.empty(), "probe: no clips");
  AKD_CHECK(clips.size() == labels_per_clip.size(),
            "probe: label/clip count mismatch");
  const size_t L = clips[0].layers.size();
  const Eigen::Index d = clips[0].layers[0].cols();

  ProbeDataset ds;
  std::vector<std::vector<Eigen::Index>> rows_per_layer(L);
  Eigen::Index total = 0;
  for (size_t c = 0; c < clips.size(); ++c) {
    AKD_CHECK(clips[c].layers.size() == L, "probe: inconsistent layer counts");
    const Eigen::Index T = clips[c].layers[0].rows();
    AKD_CHECK(static_cast<Eigen::Index>(labels_per_clip[c].size()) == T,
              "probe: clip ", c, " has ", T, " rows but ",
              labels_per_clip[c].size(), " labels");
    total += T;
  }
  ds.X.assign(L, Mat(total, d));
  ds.y.reserve(total);
  Eigen::Index row = 0;
  for (size_t c = 0; c < clips.size(); ++c) {
    const Eigen::Index T = clips[c].layers[0].rows();
    for (size_t l = 0; l < L; ++l)
      ds.X[l].middleRows(row, T) = clips[c].layers[l];
    for (int lab : labels_per_clip[c]) ds.y.push_back(lab);
    row += T;
  }

  std::set<int> class_set(ds.y.begin(), ds.y.end());
  AKD_CHECK(class_set.size() >= 2,
            "probe: labels contain a single class; nothing to learn");
  for (int c : class_set)
    AKD_CHECK(c >= 0 && c == *class_set.rbegin() ? true : true, "");
  ds.classes = *class_set.rbegin() + 1;

  std::vector<Eigen::Index> idx(total);
  for (Eigen::Index i = 0; i < total; ++i) idx[i] = i;
  Rng rng = rng_for(opts.seed, "probe-split");
  rng.shuffle(idx);
  const Eigen::Index n_test =
      std::max<Eigen::Index>(1, static_cast<Eigen::Index>(
                                    opts.holdout * static_cast<double>(total)));
  ds.test_idx.assign(idx.begin(), idx.begin() + n_test);
  ds.train_idx.assign(idx.begin() + n_test, idx.end());
  AKD_CHECK(!ds.train_idx.empty(), "probe: empty training split");

  // standardize each layer's columns with training-split statistics
  for (size_t l = 0; l < L; ++l) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d);
    for (Eigen::Index i : ds.train_idx) mean += ds.X[l].row(i);
    mean /= static_cast<double>(ds.train_idx.size());
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
    for (Eigen::Index i : ds.train_idx)
      var += (ds.X[l].row(i) - mean).cwiseAbs2();
    var /= static_cast<double>(ds.train_idx.size());
    Eigen::RowVectorXd inv_std =
        (var.array() + 1e-8).sqrt().inverse().matrix();
    ds.X[l] = ((ds.X[l].rowwise() - mean).array().rowwise() *
               inv_std.row(0).array())
                  .matrix();
  }
  return ds;
}

Mat gather(const Mat& x, const std::vector<Eigen::Index>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace

ProbeResult train_probe(const std::vector<ExtractedClip>& clips,
                        const std::vector<std::vector<int>>& labels_per_clip,
                        Granularity granularity, const ProbeOptions& opts) {
  (void)granularity;  // the data layout already encodes it
  ProbeDataset ds = assemble(clips, labels_per_clip, opts);
  const size_t L = ds.X.size();
  const Eigen::Index d = ds.X[0].cols();
  const int C = ds.classes;

  std::vector<Mat> Xtr(L), Xte(L);
  for (size_t l = 0; l < L; ++l) {
    Xtr[l] = gather(ds.X[l], ds.train_idx);
    Xte[l] = gather(ds.X[l], ds.test_idx);
  }
  std::vector<int> ytr, yte;
  for (Eigen::Index i : ds.train_idx) ytr.push_back(ds.y[static_cast<size_t>(i)]);
  for (Eigen::Index i : ds.test_idx) yte.push_back(ds.y[static_cast<size_t>(i)]);

  ad::Var layer_logits = ad::Var::param(Mat::Zero(1, static_cast<Eigen::Index>(L)));
  ad::Var W = ad::Var::param(Mat::Zero(d, C));
  ad::Var b = ad::Var::param(Mat::Zero(1, C));

  Mat one_hot_weights;
  const bool learn_w = opts.learnable_weights && opts.one_hot_layer == 0;
  if (opts.one_hot_layer != 0) {
    AKD_CHECK(opts.one_hot_layer >= 1 &&
                  opts.one_hot_layer <= static_cast<int>(L),
              "probe: one-hot layer ", opts.one_hot_layer, " out of range [1, ",
              L, "]");
    one_hot_weights = Mat::Zero(1, static_cast<Eigen::Index>(L));
    one_hot_weights(0, opts.one_hot_layer - 1) = 1.0;
  }

  auto weighted_rep = [&](const std::vector<Mat>& X, bool build_graph) {
    if (!one_hot_weights.size() && !learn_w)
      one_hot_weights = Mat::Constant(1, static_cast<Eigen::Index>(L),
                                      1.0 / static_cast<double>(L));
    if (build_graph && learn_w) {
      ad::Var sm = ad::softmax_rows(layer_logits);
      ad::Var rep;
      for (size_t l = 0; l < L; ++l) {
        ad::Var term = ad::mul_scalar_var(
            ad::Var::constant(X[l]),
            ad::slice_cols(sm, static_cast<Eigen::Index>(l), 1));
        rep = rep.defined() ? ad::add(rep, term) : term;
      }
      return rep;
    }
    Mat weights;
    if (learn_w) {
      Mat lg = layer_logits.val();
      const double m = lg.maxCoeff();
      weights = (lg.array() - m).exp().matrix();
      weights /= weights.sum();
    } else {
      weights = one_hot_weights;
    }
    Mat rep = Mat::Zero(X[0].rows(), X[0].cols());
    for (size_t l = 0; l < L; ++l) rep += weights(0, static_cast<Eigen::Index>(l)) * X[l];
    return ad::Var::constant(rep);
  };

  // full-batch Adam
  std::vector<ad::Var> params = {W, b};
  if (learn_w) params.push_back(layer_logits);
  std::vector<Mat> m_state, v_state;
  for (auto& p : params) {
    m_state.push_back(Mat::Zero(p.rows(), p.cols()));
    v_state.push_back(Mat::Zero(p.rows(), p.cols()));
  }
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    for (auto& p : params) p.zero_grad();
    ad::Var rep = weighted_rep(Xtr, true);
    ad::Var logits = ad::add_rowvec(ad::matmul(rep, W), b);
    ad::Var loss = ad::softmax_xent(logits, ytr);
    ad::backward(loss);
    const double bc1 = 1.0 - std::pow(0.9, epoch);
    const double bc2 = 1.0 - std::pow(0.999, epoch);
    for (size_t i = 0; i < params.size(); ++i) {
      if (!params[i].has_grad()) continue;
      Mat g = params[i].grad();
      if (i == 0) g += opts.weight_decay * params[i].val();
      m_state[i] = 0.9 * m_state[i] + 0.1 * g;
      v_state[i] = 0.999 * v_state[i] + 0.001 * g.cwiseProduct(g);
      params[i].mutable_val() -=
          opts.lr * ((m_state[i] / bc1).array() /
                     ((v_state[i] / bc2).array().sqrt() + 1e-8))
                        .matrix();
    }
  }

  ProbeResult res;
  {
    ad::NoGradGuard ng;
    Mat rep = weighted_rep(Xte, false).val();
    Mat logits = rep * W.val();
    logits.rowwise() += b.val().row(0);
    long correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index arg;
      logits.row(i).maxCoeff(&arg);
      if (static_cast<int>(arg) == yte[static_cast<size_t>(i)]) ++correct;
    }
    res.accuracy = static_cast<double>(correct) /
                   static_cast<double>(std::max<size_t>(yte.size(), 1));
  }
  if (learn_w) {
    Mat lg = layer_logits.val();
    const double m = lg.maxCoeff();
    Mat w = (lg.array() - m).exp().matrix();
    w /= w.sum();
    res.layer_weights = w.row(0).transpose();
  } else {
    res.layer_weights = one_hot_weights.row(0).transpose();
  }
  res.train_examples = static_cast<long>(ds.train_idx.size());
  res.test_examples = static_cast<long>(ds.test_idx.size());
  return res;
}

ProbeResult train_probe_instance(const std::vector<ExtractedClip>& clips,
                                 const std::vector<int>& labels,
                                 const ProbeOptions& opts) {
  std::vector<std::vector<int>> per_clip;
  per_clip.reserve(labels.size());
  for (int l : labels) per_clip.push_back({l});
  return train_probe(clips, per_clip, Granularity::instance, opts);
}

std::vector<TaskResult> run_probe_suite(const StudentModel& model,
                                        const NormStats& stats,
                                        const ProbeSuiteOptions& opts) {
  const uint64_t hash_before = model.params().content_hash();
  std::vector<TaskResult> results;

  // domain identification (instance)
  {
    std::vector<MelFrames> mels;
    std::vector<int> labels;
    for (int i = 0; i < opts.clips_per_task; ++i) {
      const std::string domain = i % 2 == 0 ? "speech" : "sound";
      Wave w = synth_domain_clip(domain, splitmix64(opts.seed) + i,
                                 opts.clip_seconds);
      mels.push_back(compute_logmel(w, 16000));
      labels.push_back(i % 2);
    }
    auto reps = extract_representations(model, stats, mels,
                                        Granularity::instance);
    ProbeOptions po = opts.probe;
    po.seed = splitmix64(opts.seed ^ 0x11);
    ProbeResult pr = train_probe_instance(reps, labels, po);
    results.push_back({"domain-id", "accuracy", Granularity::instance,
                       Direction::higher_better, pr.accuracy});
  }

  // speaker-like channel identification (instance)
  {
    std::vector<MelFrames> mels;
    std::vector<int> labels;
    for (int i = 0; i < opts.clips_per_task; ++i) {
      const int channel = i % opts.channel_classes;
      Wave w = synth_channel_clip(splitmix64(opts.seed ^ 0x22) + i, channel,
                                  opts.clip_seconds);
      mels.push_back(compute_logmel(w, 16000));
      labels.push_back(channel);
    }
    auto reps = extract_representations(model, stats, mels,
                                        Granularity::instance);
    ProbeOptions po = opts.probe;
    po.seed = splitmix64(opts.seed ^ 0x33);
    ProbeResult pr = train_probe_instance(reps, labels, po);
    results.push_back({"channel-id", "accuracy", Granularity::instance,
                       Direction::higher_better, pr.accuracy});
  }

  // frame-level source class
  {
    std::vector<MelFrames> mels;
    std::vector<std::vector<int>> labels;
    for (int i = 0; i < std::max(opts.clips_per_task / 2, 8); ++i) {
      FrameTaskClip clip =
          synth_frame_task_clip(splitmix64(opts.seed ^ 0x44) + i,
                                opts.clip_seconds);
      MelFrames mel = compute_logmel(clip.wave, 16000);
      const Eigen::Index T = model.token_count(mel.data.rows());
      std::vector<int> lab = clip.labels;
      lab.resize(static_cast<size_t>(T), lab.empty() ? 0 : lab.back());
      mels.push_back(std::move(mel));
      labels.push_back(std::move(lab));
    }
    auto reps = extract_representations(model, stats, mels, Granularity::frame);
    ProbeOptions po = opts.probe;
    po.seed = splitmix64(opts.seed ^ 0x55);
    ProbeResult pr = train_probe(reps, labels, Granularity::frame, po);
    results.push_back({"frame-class", "accuracy", Granularity::frame,
                       Direction::higher_better, pr.accuracy});
  }

  AKD_CHECK(model.params().content_hash() == hash_before,
            "probing mutated encoder parameters");
  return results;
}

}  // namespace akd
