// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "akd/frontend.h"
#include "testutil.h"

using namespace akd;

namespace {

Wave sine_wave(double freq, double seconds, double amp = 0.5,
               int sr = 16000) {
  Wave w(static_cast<size_t>(seconds * sr));
  for (size_t i = 0; i < w.size(); ++i)
    w[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sr);
  return w;
}

MelFrames fake_mel(Eigen::Index T, Rng& rng, bool normalized = true) {
  MelFrames m;
  m.data = akd::test::random_mat(rng, T, 128);
  m.norm_applied = normalized;
  return m;
}

}  // namespace

TEST_CASE("logmel frame counts follow the snip-edges formula") {
  Wave ten_sec = sine_wave(440.0, 10.0);
  CHECK(ten_sec.size() == 160000);
  MelFrames m = compute_logmel(ten_sec, 16000);
  CHECK(m.data.rows() == 998);
  CHECK(m.data.cols() == 128);
  CHECK(m.framerate == 100.0);
  CHECK_FALSE(m.norm_applied);

  Wave one_window(400, 0.1);
  MelFrames m1 = compute_logmel(one_window, 16000);
  CHECK(m1.data.rows() == 1);

  for (size_t n : {400u, 401u, 559u, 560u, 561u, 160000u}) {
    CHECK(mel_frame_count(n) ==
          static_cast<Eigen::Index>((n - 400) / 160) + 1);
  }
}

TEST_CASE("logmel on silence is the log of the power floor") {
  Wave silence(1600, 0.0);
  MelFrames m = compute_logmel(silence, 16000);
  const double expect = std::log(1e-10);
  CHECK((m.data.array() - expect).abs().maxCoeff() < 1e-12);
}

TEST_CASE("logmel errors") {
  Wave too_short(399, 0.1);
  CHECK_THROWS_WITH_AS(compute_logmel(too_short, 16000),
                       doctest::Contains("waveform too short"), Error);
  Wave ok(1600, 0.1);
  CHECK_THROWS_WITH_AS(compute_logmel(ok, 44100),
                       doctest::Contains("resample required"), Error);
}

TEST_CASE("logmel is deterministic") {
  Wave w = sine_wave(523.0, 0.7, 0.4);
  MelFrames a = compute_logmel(w, 16000);
  MelFrames b = compute_logmel(w, 16000);
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalization identity, centering and idempotence guard") {
  Rng rng(1);
  MelFrames m = fake_mel(20, rng, false);

  NormStats identity{0.0, 0.5, "test"};
  MelFrames n1 = normalize(m, identity);
  CHECK((n1.data - m.data).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(n1.norm_applied);
  CHECK_THROWS_WITH_AS(normalize(n1, identity),
                       doctest::Contains("already normalized"), Error);

  MelFrames c;
  c.data = Mat::Constant(5, 128, 3.25);
  MelFrames n2 = normalize(c, NormStats{3.25, 1.0, "test"});
  CHECK(n2.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corpus stats then normalization gives pooled mean 0, std 0.5") {
  // synthetic corpus of three clips
  std::vector<MelFrames> corpus;
  corpus.push_back(compute_logmel(sine_wave(200, 0.5, 0.3), 16000));
  corpus.push_back(compute_logmel(sine_wave(800, 0.8, 0.6), 16000));
  corpus.push_back(compute_logmel(sine_wave(3200, 0.3, 0.1), 16000));

  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  for (const auto& m : corpus) {
    sum += m.data.sum();
    sumsq += m.data.array().square().sum();
    n += m.data.size();
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sumsq / n - mean * mean);
  NormStats stats{mean, stddev, "corpus"};

  double psum = 0.0, psumsq = 0.0;
  for (const auto& m : corpus) {
    MelFrames nm = normalize(m, stats);
    psum += nm.data.sum();
    psumsq += nm.data.array().square().sum();
  }
  const double pmean = psum / n;
  const double pstd = std::sqrt(psumsq / n - pmean * pmean);
  CHECK(std::abs(pmean) < 1e-6);
  CHECK(std::abs(pstd - 0.5) < 1e-6);
}

TEST_CASE("frame embedding length law") {
  Rng rng(2);
  ad::ParamStore ps;
  FrameEmbed fe(ps, "fe", 128, 32, rng, 0.02);

  MelFrames m998 = fake_mel(998, rng);
  FeatureSequence f = fe.apply(m998);
  CHECK(f.data.rows() == 499);
  CHECK(f.data.cols() == 32);
  CHECK(f.framerate == 50.0);
  CHECK(f.extraction == Extraction::frame);

  CHECK(fe.apply(fake_mel(2, rng)).data.rows() == 1);
  CHECK(fe.apply(fake_mel(1000, rng)).data.rows() == 500);

  for (Eigen::Index T = 2; T <= 40; ++T)
    CHECK(fe.apply(fake_mel(T, rng)).data.rows() == (T + 1) / 2);

  MelFrames too_short = fake_mel(1, rng);
  CHECK_THROWS_AS(fe.apply(too_short), Error);
  MelFrames unnorm = fake_mel(10, rng, false);
  CHECK_THROWS_AS(fe.apply(unnorm), Error);
}

TEST_CASE("patch embedding token counts and flatten order") {
  Rng rng(3);
  ad::ParamStore ps;
  PatchEmbed pe(ps, "pe", 128, 24, rng, 0.02);

  CHECK(pe.apply(fake_mel(998, rng)).data.rows() == 496);
  CHECK(pe.apply(fake_mel(16, rng)).data.rows() == 8);
  CHECK(pe.apply(fake_mel(31, rng)).data.rows() == 8);

  for (Eigen::Index T = 16; T <= 70; T += 7)
    CHECK(pe.apply(fake_mel(T, rng)).data.rows() == (T / 16) * 8);

  MelFrames small = fake_mel(15, rng);
  CHECK_THROWS_AS(pe.apply(small), Error);

  // flatten order: row-major over (time, frequency) within a 16x16 patch
  Mat mel(32, 128);
  for (Eigen::Index t = 0; t < 32; ++t)
    for (Eigen::Index f = 0; f < 128; ++f)
      mel(t, f) = 1000.0 * static_cast<double>(t) + static_cast<double>(f);
  Mat patches = PatchEmbed::patchify(mel, 128);
  CHECK(patches.rows() == 16);   // 2 time windows x 8 freq patches
  CHECK(patches.cols() == 256);
  // token (tw=1, fp=3), element (dt=2, df=5) -> mel(16+2, 48+5)
  CHECK(patches(1 * 8 + 3, 2 * 16 + 5) == doctest::Approx(1000.0 * 18 + 53));
}

TEST_CASE("feature fusion") {
  Rng rng(4);
  FeatureSequence a{akd::test::random_mat(rng, 499, 16), 50.0,
                    Extraction::frame};
  FeatureSequence zero{Mat::Zero(499, 16), 50.0, Extraction::patch};
  FeatureSequence fused = fuse_features(a, zero);
  CHECK((fused.data - a.data).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fused.extraction == Extraction::fused);

  FeatureSequence b{akd::test::random_mat(rng, 496, 16), 50.0,
                    Extraction::patch};
  CHECK(fuse_features(a, b).data.rows() == 496);

  FeatureSequence ab = fuse_features(a, b);
  FeatureSequence ba = fuse_features(b, a);
  CHECK((ab.data - ba.data).cwiseAbs().maxCoeff() == 0.0);

  FeatureSequence wrong_rate{Mat::Zero(10, 16), 25.0, Extraction::frame};
  CHECK_THROWS_WITH_AS(fuse_features(a, wrong_rate),
                       doctest::Contains("framerate"), Error);
  FeatureSequence wrong_dim{Mat::Zero(10, 8), 50.0, Extraction::frame};
  CHECK_THROWS_WITH_AS(fuse_features(a, wrong_dim),
                       doctest::Contains("dimension"), Error);
}

TEST_CASE("fusion is associative when lengths are equal") {
  Rng rng(5);
  FeatureSequence a{akd::test::random_mat(rng, 20, 8), 50.0, Extraction::frame};
  FeatureSequence b{akd::test::random_mat(rng, 20, 8), 50.0, Extraction::patch};
  FeatureSequence c{akd::test::random_mat(rng, 20, 8), 50.0, Extraction::frame};
  Mat lhs = fuse_features(fuse_features(a, b), c).data;
  Mat rhs = fuse_features(a, fuse_features(b, c)).data;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}
