// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "akd/distill.h"
#include "testutil.h"

using namespace akd;
using akd::test::random_mat;

namespace {

constexpr double kIdentityLoss = 0.31326168751822286;  // log(1 + e^-1)

StudentConfig micro_student(int d = 32, int layers = 2) {
  StudentConfig sc;
  sc.encoder.d_model = d;
  sc.encoder.n_layers = layers;
  sc.encoder.n_heads = 2;
  sc.encoder.conv_pos_layers = 2;
  sc.encoder.conv_pos_kernel = 5;
  sc.encoder.conv_pos_groups = 16;
  sc.encoder.rel_pos_max_distance = 8;
  sc.encoder.dropout = 0.0;
  return sc;
}

MelFrames norm_mel(Eigen::Index T, Rng& rng) {
  MelFrames m;
  m.data = random_mat(rng, T, 128, 0.5);
  m.norm_applied = true;
  return m;
}

// Runs the student pipeline by hand and returns head outputs, so tests can
// build "teacher" targets that coincide with the student's own predictions.
std::vector<Mat> self_predictions(StudentModel& student, PredictionHeads& heads,
                                  const DistillPlan& plan,
                                  const MelFrames& mel, int teacher) {
  ad::Var feats = student.embed(mel);
  EncoderTaps enc = student.encoder().forward(feats, plan.student_layers());
  std::vector<Mat> out;
  for (int k = 0; k < plan.K; ++k)
    out.push_back(heads.head(k, teacher)
                      .forward(enc.taps[static_cast<size_t>(k)].second)
                      .val());
  return out;
}

}  // namespace

TEST_CASE("select_layers matches the layer-matching formula") {
  CHECK(select_layers(12, 4) == std::vector<int>{3, 6, 9, 12});
  CHECK(select_layers(24, 4) == std::vector<int>{6, 12, 18, 24});
  CHECK(select_layers(12, 3) == std::vector<int>{4, 8, 12});
  CHECK(select_layers(10, 4) == std::vector<int>{2, 5, 7, 10});
  CHECK(select_layers(12, 12) ==
        std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  CHECK_THROWS_WITH_AS(select_layers(12, 13), doctest::Contains("exceeds depth"),
                       Error);
  CHECK_THROWS_AS(select_layers(12, 0), Error);
}

TEST_CASE("select_layers property: monotone, K entries, ends at L") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 1 + static_cast<int>(rng.randint(40));
    const int K = 1 + static_cast<int>(rng.randint(static_cast<uint64_t>(L)));
    auto layers = select_layers(L, K);
    CHECK(static_cast<int>(layers.size()) == K);
    CHECK(layers.back() == L);
    for (size_t i = 0; i < layers.size(); ++i) {
      CHECK(layers[i] == (static_cast<int>(i + 1) * L) / K);
      if (i > 0) CHECK(layers[i] > layers[i - 1]);
      CHECK(layers[i] >= 1);
    }
  }
}

TEST_CASE("distill plan pairs student and teacher depths") {
  DistillPlan plan = DistillPlan::make(12, 24, 10, 4);
  CHECK(plan.pairs.size() == 4);
  CHECK(plan.pairs[0] == std::array<int, 3>{3, 6, 2});
  CHECK(plan.pairs[3] == std::array<int, 3>{12, 24, 10});
  CHECK(plan.student_layers() == std::vector<int>{3, 6, 9, 12});
  CHECK(plan.teacher_layers(2) == std::vector<int>{2, 5, 7, 10});
  CHECK_THROWS_AS(DistillPlan::make(12, 3, 12, 4), Error);
}

TEST_CASE("l1-cosine loss analytic cases") {
  Eigen::RowVectorXd t(2);
  t << 1, 1;
  CHECK(l1_cosine_loss(t, t) == doctest::Approx(kIdentityLoss).epsilon(1e-9));

  Eigen::RowVectorXd ex(2), ey(2);
  ex << 1, 0;
  ey << 0, 1;
  CHECK(l1_cosine_loss(ex, ey) ==
        doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-9));

  Eigen::RowVectorXd neg = -t;
  CHECK(l1_cosine_loss(neg, t) ==
        doctest::Approx(2.0 + std::log1p(std::exp(1.0))).epsilon(1e-9));
  CHECK(l1_cosine_loss(neg, t) == doctest::Approx(3.313262).epsilon(1e-6));

  long degenerate = 0;
  Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(2);
  const double lz = l1_cosine_loss(zero, t, &degenerate);
  CHECK(degenerate == 1);
  CHECK(lz == doctest::Approx(1.0 + std::log(2.0)));
}

TEST_CASE("l1-cosine lower bound over random pairs") {
  Rng rng(2);
  double best = 1e9;
  for (int i = 0; i < 10000; ++i) {
    Eigen::RowVectorXd a = random_mat(rng, 1, 8).row(0);
    Eigen::RowVectorXd b = random_mat(rng, 1, 8).row(0);
    const double l = l1_cosine_loss(a, b);
    CHECK(l >= kIdentityLoss - 1e-12);
    best = std::min(best, l);
    // equality iff pred == target
    CHECK(l1_cosine_loss(a, a) == doctest::Approx(kIdentityLoss));
  }
  CHECK(best > kIdentityLoss);
}

TEST_CASE("aggregate loss") {
  Mat c1 = Mat::Constant(3, 5, 0.8);
  Mat c2 = Mat::Constant(3, 5, 0.8);
  CHECK(aggregate_loss({c1, c2}) == doctest::Approx(0.8));

  Mat a(1, 1), b(1, 1);
  a << 0.25;
  b << 0.75;
  CHECK(aggregate_loss({a, b}) == doctest::Approx(0.5));

  Rng rng(3);
  Mat r1 = random_mat(rng, 2, 4).cwiseAbs();
  Mat r2 = random_mat(rng, 2, 4).cwiseAbs();
  const double base = aggregate_loss({r1, r2});
  Mat d1(2, 8), d2(2, 8);
  d1 << r1, r1;
  d2 << r2, r2;
  CHECK(aggregate_loss({d1, d2}) == doctest::Approx(base));

  // permutation invariance over (k, t)
  Mat p1 = r1, p2 = r2;
  std::swap(p1(0, 0), p1(1, 3));
  std::swap(p2(0, 2), p2(1, 1));
  CHECK(aggregate_loss({p1, p2}) == doctest::Approx(base));

  Mat empty(2, 0);
  CHECK_THROWS_WITH_AS(aggregate_loss({empty, empty}),
                       doctest::Contains("no loss frames"), Error);
}

TEST_CASE("infonce analytic cases") {
  Eigen::RowVectorXd t(2);
  t << 1, 0;
  CHECK(infonce_loss(t, t, {t}, 1.0) == doctest::Approx(std::log(2.0)));

  Eigen::RowVectorXd neg = -t;
  const double l = infonce_loss(t, t, {neg}, 1.0);
  CHECK(l == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-9));
  CHECK(l == doctest::Approx(0.126928).epsilon(1e-5));

  // loss decreases as alignment with the target improves
  Eigen::RowVectorXd mid(2), good(2);
  mid << 1, 1;
  good << 1, 0.1;
  Eigen::RowVectorXd fixed_neg(2);
  fixed_neg << -0.5, 1;
  CHECK(infonce_loss(good, t, {fixed_neg}, 0.5) <
        infonce_loss(mid, t, {fixed_neg}, 0.5));

  CHECK_THROWS_WITH_AS(infonce_loss(t, t, {}, 1.0), doctest::Contains("empty"),
                       Error);
  CHECK_THROWS_AS(infonce_loss(t, t, {neg}, 0.0), Error);
}

TEST_CASE("mask sampling") {
  MaskPolicy p;
  p.enabled = true;
  p.mask_prob = 0.0;
  Rng rng(4);
  CHECK_THROWS_WITH_AS(sample_mask_spans(20, p, rng), doctest::Contains("empty"),
                       Error);

  p.mask_prob = 1.0;
  p.span_len = 20;
  Rng rng2(4);
  auto all = sample_mask_spans(20, p, rng2);
  CHECK(all.size() == 20);

  p.mask_prob = 0.15;
  p.span_len = 4;
  Rng ra(7), rb(7);
  CHECK(sample_mask_spans(50, p, ra) == sample_mask_spans(50, p, rb));
}

TEST_CASE("apply_mask replaces spans with the embedding row") {
  Rng rng(5);
  FeatureSequence f{random_mat(rng, 30, 8), 50.0, Extraction::frame};
  Mat emb = Mat::Constant(1, 8, 9.0);
  MaskPolicy p;
  p.enabled = true;
  p.mask_prob = 0.2;
  p.span_len = 3;
  auto [masked, idx] = apply_mask(f, p, emb, 99);
  CHECK(!idx.empty());
  for (Eigen::Index r : idx)
    CHECK((masked.data.row(r).array() - 9.0).abs().maxCoeff() == 0.0);
  // unmasked rows untouched
  for (Eigen::Index r = 0; r < f.data.rows(); ++r) {
    if (std::find(idx.begin(), idx.end(), r) == idx.end())
      CHECK((masked.data.row(r) - f.data.row(r)).cwiseAbs().maxCoeff() == 0.0);
  }
  auto [masked2, idx2] = apply_mask(f, p, emb, 99);
  CHECK(idx == idx2);
}

TEST_CASE("self-distillation gives the identity-case loss") {
  Rng rng(6);
  StudentModel student(micro_student(), 11);
  DistillPlan plan = DistillPlan::make(2, 2, 2, 2);
  PredictionHeads heads(plan, 32, 32, 32, 11, 0.02);
  MelFrames mel = norm_mel(24, rng);

  TeacherTargets t1, t2;
  t1.framerate = t2.framerate = 50.0;
  auto p1 = self_predictions(student, heads, plan, mel, 1);
  auto p2 = self_predictions(student, heads, plan, mel, 2);
  for (int k = 0; k < plan.K; ++k) {
    t1.layers.emplace_back(plan.pairs[k][1], p1[k]);
    t2.layers.emplace_back(plan.pairs[k][2], p2[k]);
  }

  LossConfig cfg;
  StepStats st = distill_step(student, heads, plan, {{"c", mel}}, {t1}, {t2},
                              cfg, nullptr, nullptr, nullptr);
  CHECK(st.loss == doctest::Approx(kIdentityLoss).epsilon(1e-9));
  CHECK(st.head_evaluations == 2 * plan.K);
  CHECK(st.loss_frames == 2 * plan.K * 12);  // ceil(24/2) frames per pair
}

TEST_CASE("zero heads against nonzero targets give |target| L1 plus log 2") {
  Rng rng(7);
  StudentModel student(micro_student(), 12);
  DistillPlan plan = DistillPlan::make(2, 2, 2, 1);
  PredictionHeads heads(plan, 32, 16, 16, 12, 0.02);
  for (auto& p : heads.params().all()) p.var.mutable_val().setZero();

  MelFrames mel = norm_mel(10, rng);
  const Eigen::Index T = 5;
  TeacherTargets t1, t2;
  t1.framerate = t2.framerate = 50.0;
  Mat z1 = random_mat(rng, T, 16);
  Mat z2 = random_mat(rng, T, 16);
  t1.layers.emplace_back(2, z1);
  t2.layers.emplace_back(2, z2);

  LossConfig cfg;
  StepStats st = distill_step(student, heads, plan, {{"c", mel}}, {t1}, {t2},
                              cfg, nullptr, nullptr, nullptr);
  const double expect =
      (z1.cwiseAbs().rowwise().sum().sum() / 16.0 +
       z2.cwiseAbs().rowwise().sum().sum() / 16.0) /
          (2.0 * T) +
      std::log(2.0);
  CHECK(st.loss == doctest::Approx(expect).epsilon(1e-9));
  CHECK(st.degenerate_cosines == 2 * T);
}

TEST_CASE("distill_step gradients match finite differences") {
  Rng rng(8);
  StudentConfig sc = micro_student(16, 2);
  sc.encoder.n_heads = 2;
  // The check runs at a well-conditioned point: with near-zero predictions
  // the cosine gradient scales as 1/|pred| and finite differences cannot
  // converge, so use init scales that give O(1) prediction norms.
  sc.encoder.init_std = 0.3;
  StudentModel student(sc, 13);
  DistillPlan plan = DistillPlan::make(2, 3, 4, 2);
  PredictionHeads heads(plan, 16, 16, 16, 13, 0.5);

  MelFrames mel = norm_mel(16, rng);  // T = 8 tokens after embedding
  TeacherTargets t1, t2;
  t1.framerate = t2.framerate = 50.0;
  for (int k = 0; k < plan.K; ++k) {
    t1.layers.emplace_back(plan.pairs[k][1], random_mat(rng, 8, 16, 0.5));
    t2.layers.emplace_back(plan.pairs[k][2], random_mat(rng, 8, 16, 0.5));
  }
  LossConfig cfg;
  std::vector<ClipBatchItem> batch = {{"c", mel}};

  StepStats st = distill_step(student, heads, plan, batch, {t1}, {t2}, cfg,
                              nullptr, nullptr, nullptr);
  std::vector<std::pair<ad::Var, Mat>> grads;
  for (auto& p : student.params().all())
    if (p.var.has_grad()) grads.emplace_back(p.var, p.var.grad());
  for (auto& p : heads.params().all())
    if (p.var.has_grad()) grads.emplace_back(p.var, p.var.grad());
  CHECK(grads.size() > 10);

  Rng pick(99);
  double max_rel = 0.0;
  long checked = 0;
  for (auto& [v, g] : grads) {
    for (int probe = 0; probe < 4; ++probe) {
      const Eigen::Index flat =
          static_cast<Eigen::Index>(pick.randint(v.val().size()));
      double* slot = v.mutable_val().data() + flat;
      const double orig = *slot;
      const double h = 1e-6 * std::max(1.0, std::abs(orig));
      *slot = orig + h;
      const double fp = distill_step(student, heads, plan, batch, {t1}, {t2},
                                     cfg, nullptr, nullptr, nullptr)
                            .loss;
      *slot = orig - h;
      const double fm = distill_step(student, heads, plan, batch, {t1}, {t2},
                                     cfg, nullptr, nullptr, nullptr)
                            .loss;
      *slot = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = g.data()[flat];
      const double denom = std::max(std::abs(fd), std::abs(an));
      if (denom < 1e-7) continue;
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
      ++checked;
    }
  }
  CHECK(checked > 50);
  CHECK(max_rel < 1e-4);
}

TEST_CASE("masked loss ignores unmasked teacher targets") {
  Rng rng(9);
  StudentModel student(micro_student(), 14);
  DistillPlan plan = DistillPlan::make(2, 2, 2, 1);
  PredictionHeads heads(plan, 32, 16, 16, 14, 0.02);
  MelFrames mel = norm_mel(40, rng);  // 20 tokens

  TeacherTargets t1, t2;
  t1.framerate = t2.framerate = 50.0;
  Mat z1 = random_mat(rng, 20, 16);
  Mat z2 = random_mat(rng, 20, 16);
  t1.layers.emplace_back(2, z1);
  t2.layers.emplace_back(2, z2);

  LossConfig cfg;
  cfg.mask.enabled = true;
  cfg.mask.mask_prob = 0.15;
  cfg.mask.span_len = 4;

  Rng mask_rng_a(55);
  StepStats a = distill_step(student, heads, plan, {{"c", mel}}, {t1}, {t2},
                             cfg, &mask_rng_a, nullptr, nullptr);

  // recover the mask to perturb only unmasked rows
  Rng mask_probe(55);
  auto idx = sample_mask_spans(20, cfg.mask, mask_probe);
  TeacherTargets t1p = t1, t2p = t2;
  for (Eigen::Index r = 0; r < 20; ++r) {
    if (std::find(idx.begin(), idx.end(), r) == idx.end()) {
      t1p.layers[0].second.row(r).setConstant(123.0);
      t2p.layers[0].second.row(r).setConstant(-55.0);
    }
  }
  Rng mask_rng_b(55);
  StepStats b = distill_step(student, heads, plan, {{"c", mel}}, {t1p}, {t2p},
                             cfg, &mask_rng_b, nullptr, nullptr);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK(a.loss_frames == static_cast<long>(2 * idx.size()));
}

TEST_CASE("appending masked padding leaves per-frame losses unchanged") {
  Rng rng(10);
  StudentModel student(micro_student(), 15);
  DistillPlan plan = DistillPlan::make(2, 2, 2, 1);
  PredictionHeads heads(plan, 32, 16, 16, 15, 0.02);

  MelFrames mel = norm_mel(20, rng);
  ad::Var feats = student.embed(mel);
  const Eigen::Index T = feats.rows();
  Mat z = random_mat(rng, T, 16);

  EncoderTaps plain = student.encoder().forward(feats, {2});
  ad::Var pred = heads.head(0, 1).forward(plain.taps[0].second);
  const double base =
      ad::sum_all(l1_cosine_rows(pred, z)).val()(0, 0) / static_cast<double>(T);

  Mat padded_feats = Mat::Zero(T + 6, 32);
  padded_feats.topRows(T) = feats.val();
  std::vector<bool> mask(T + 6, false);
  for (Eigen::Index i = T; i < T + 6; ++i) mask[i] = true;
  EncoderTaps padded = student.encoder().forward(
      ad::Var::constant(padded_feats), {2}, &mask);
  ad::Var pred_padded = heads.head(0, 1).forward(
      ad::top_rows(padded.taps[0].second, T));
  const double with_pad =
      ad::sum_all(l1_cosine_rows(pred_padded, z)).val()(0, 0) /
      static_cast<double>(T);
  CHECK(base == doctest::Approx(with_pad).epsilon(1e-6));
}

TEST_CASE("infonce objective trains through distill_step") {
  Rng rng(11);
  StudentModel student(micro_student(), 16);
  DistillPlan plan = DistillPlan::make(2, 2, 2, 1);
  PredictionHeads heads(plan, 32, 16, 16, 16, 0.02);
  MelFrames mel_a = norm_mel(12, rng);
  MelFrames mel_b = norm_mel(14, rng);

  auto mk_targets = [&](Eigen::Index T) {
    TeacherTargets t;
    t.framerate = 50.0;
    t.layers.emplace_back(2, random_mat(rng, T, 16));
    return t;
  };
  LossConfig cfg;
  cfg.objective = Objective::infonce;
  cfg.infonce_negatives = 5;
  Rng neg_rng(3);
  StepStats st = distill_step(student, heads, plan,
                              {{"a", mel_a}, {"b", mel_b}},
                              {mk_targets(6), mk_targets(7)},
                              {mk_targets(6), mk_targets(7)}, cfg, nullptr,
                              nullptr, &neg_rng);
  CHECK(st.loss > 0.0);
  CHECK(st.loss_frames == 2 * (6 + 7));
  bool any_grad = false;
  for (auto& p : heads.params().all()) any_grad = any_grad || p.var.has_grad();
  CHECK(any_grad);
}

TEST_CASE("25 Hz teacher pairs pool the student taps before the loss") {
  Rng rng(12);
  StudentModel student(micro_student(), 17);
  DistillPlan plan = DistillPlan::make(2, 2, 2, 1);
  PredictionHeads heads(plan, 32, 16, 16, 17, 0.02);
  MelFrames mel = norm_mel(20, rng);  // 10 tokens at 50 Hz -> 5 at 25 Hz

  TeacherTargets t25;
  t25.framerate = 25.0;
  t25.layers.emplace_back(2, random_mat(rng, 5, 16));
  TeacherTargets t50;
  t50.framerate = 50.0;
  t50.layers.emplace_back(2, random_mat(rng, 10, 16));

  LossConfig cfg;
  StepStats st = distill_step(student, heads, plan, {{"c", mel}}, {t50}, {t25},
                              cfg, nullptr, nullptr, nullptr);
  CHECK(st.loss_frames == 10 + 5);
}
