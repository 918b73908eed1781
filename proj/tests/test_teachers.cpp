// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "akd/teachers.h"
#include "testutil.h"

using namespace akd;
using akd::test::random_mat;

namespace fs = std::filesystem;

namespace {

MelFrames tone_mel(double freq, double seconds) {
  Wave w(static_cast<size_t>(seconds * 16000));
  for (size_t i = 0; i < w.size(); ++i)
    w[i] = 0.4 * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / 16000.0);
  return compute_logmel(w, 16000);
}

TeacherSpec small_synth(double rate = 50.0, uint64_t seed = 9) {
  TeacherSpec s;
  s.n_layers = 3;
  s.target_dim = 32;
  s.framerate = rate;
  s.source = TeacherSpec::Source::synthetic;
  s.seed = seed;
  return s;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("akd_teachers_test_" + std::to_string(++counter));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("adapt_framerate pools pairs and drops the odd tail") {
  Mat a(4, 1);
  a << 1, 3, 5, 7;
  Mat pa = adapt_framerate(a);
  CHECK(pa.rows() == 2);
  CHECK(pa(0, 0) == doctest::Approx(2.0));
  CHECK(pa(1, 0) == doctest::Approx(6.0));

  Mat b(3, 1);
  b << 1, 3, 5;
  Mat pb = adapt_framerate(b);
  CHECK(pb.rows() == 1);
  CHECK(pb(0, 0) == doctest::Approx(2.0));

  Mat c = Mat::Constant(9, 4, 2.5);
  Mat pc = adapt_framerate(c);
  CHECK(pc.rows() == 4);
  CHECK((pc.array() - 2.5).abs().maxCoeff() == 0.0);

  Mat tiny(1, 2);
  CHECK_THROWS_AS(adapt_framerate(tiny), Error);
}

TEST_CASE("pooling halves lengths and preserves column means over kept rows") {
  Rng rng(3);
  for (Eigen::Index T : {2, 5, 16, 31}) {
    Mat m = random_mat(rng, T, 6);
    Mat p = adapt_framerate(m);
    CHECK(p.rows() == T / 2);
    const Eigen::Index kept = 2 * (T / 2);
    Mat kept_mean = m.topRows(kept).colwise().mean();
    Mat pooled_mean = p.colwise().mean();
    CHECK((kept_mean - pooled_mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("student-to-teacher alignment") {
  Rng rng(4);
  LayerTapSet taps;
  taps.taps[2] = random_mat(rng, 499, 8);
  taps.final = random_mat(rng, 499, 8);

  LayerTapSet same = align_student_to_teacher(taps, 50.0, 50.0);
  CHECK((same.taps.at(2) - taps.taps.at(2)).cwiseAbs().maxCoeff() == 0.0);

  LayerTapSet pooled = align_student_to_teacher(taps, 25.0, 50.0);
  CHECK(pooled.taps.at(2).rows() == 249);

  Mat v(4, 1);
  v << 1, 3, 5, 7;
  LayerTapSet single;
  single.taps[1] = v;
  single.final = v;
  Mat out = align_student_to_teacher(single, 25.0, 50.0).taps.at(1);
  CHECK(out(0, 0) == doctest::Approx(2.0));
  CHECK(out(1, 0) == doctest::Approx(6.0));

  CHECK_THROWS_AS(align_student_to_teacher(taps, 100.0, 50.0), Error);
  CHECK_THROWS_AS(align_student_to_teacher(taps, 50.0, 25.0), Error);
}

TEST_CASE("synthetic teachers are frozen and deterministic") {
  Teacher t(small_synth());
  t.set_cache_enabled(false);
  MelFrames mel = tone_mel(440.0, 0.5);
  const uint64_t h0 = t.param_hash();
  TeacherTargets a = t.targets("clip0", &mel, {1, 3});
  TeacherTargets b = t.targets("clip0", &mel, {1, 3});
  CHECK(a.layers.size() == 2);
  CHECK((a.layers[0].second - b.layers[0].second).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.layers[1].second - b.layers[1].second).cwiseAbs().maxCoeff() == 0.0);
  CHECK(t.param_hash() == h0);

  Teacher t2(small_synth());
  TeacherTargets c = t2.targets("clip0", &mel, {1, 3});
  CHECK((a.layers[1].second - c.layers[1].second).cwiseAbs().maxCoeff() == 0.0);

  // a different seed gives different weights
  Teacher t3(small_synth(50.0, 10));
  CHECK(t3.param_hash() != h0);
}

TEST_CASE("a 10 s clip yields 499 target rows at 50 Hz and 249 at 25 Hz") {
  MelFrames mel = tone_mel(300.0, 10.0);
  CHECK(mel.data.rows() == 998);

  Teacher t50(small_synth(50.0));
  TeacherTargets a = t50.targets("ten", &mel, {3});
  CHECK(a.layers[0].second.rows() == 499);
  CHECK(t50.expected_frames(mel.data.rows()) == 499);

  Teacher t25(small_synth(25.0));
  TeacherTargets b = t25.targets("ten", &mel, {3});
  CHECK(b.layers[0].second.rows() == 249);
}

TEST_CASE("teacher layer range checks") {
  Teacher t(small_synth());
  MelFrames mel = tone_mel(200.0, 0.2);
  CHECK_THROWS_WITH_AS(t.targets("x", &mel, {4}),
                       doctest::Contains("out of range"), Error);
  CHECK_THROWS_WITH_AS(t.targets("x", &mel, {0}),
                       doctest::Contains("out of range"), Error);
}

TEST_CASE("dump round-trip is exact and validates its header") {
  TempDir dir;
  Teacher synth(small_synth());
  MelFrames mel_a = tone_mel(500.0, 0.4);
  MelFrames mel_b = tone_mel(900.0, 0.6);
  std::vector<int> layers = {1, 3};
  TeacherTargets ta = synth.targets("a", &mel_a, layers);
  TeacherTargets tb = synth.targets("b", &mel_b, layers);

  write_teacher_clip((dir.path / "a.feat").string(), ta, FeatDtype::f64);
  write_teacher_clip((dir.path / "b.feat").string(), tb, FeatDtype::f64);
  write_dump_index(dir.path.string(), synth.spec(), layers,
                   {{"a", "a.feat"}, {"b", "b.feat"}});

  TeacherSpec ds;
  ds.source = TeacherSpec::Source::dump;
  ds.dump_dir = dir.path.string();
  Teacher dumped(ds);
  CHECK(dumped.spec().framerate == 50.0);
  CHECK(dumped.spec().target_dim == 32);

  TeacherTargets ra = dumped.targets("a", nullptr, layers);
  CHECK(ra.layers.size() == 2);
  CHECK((ra.layers[0].second - ta.layers[0].second).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((ra.layers[1].second - ta.layers[1].second).cwiseAbs().maxCoeff() ==
        0.0);

  CHECK_THROWS_WITH_AS(dumped.targets("missing", nullptr, layers),
                       doctest::Contains("missing"), Error);
  // requesting a layer that was not dumped
  CHECK_THROWS_WITH_AS(dumped.targets("a", nullptr, {2}),
                       doctest::Contains("not dumped"), Error);
}

TEST_CASE("feature reader rejects corrupted files") {
  TempDir dir;
  const std::string good = (dir.path / "good.feat").string();
  Rng rng(5);
  write_usadfeat(good, random_mat(rng, 6, 4), 50.0, FeatDtype::f64);
  FeatData fd = read_usadfeat(good);
  CHECK(fd.dims[0] == 6);

  // bad magic
  const std::string bad_magic = (dir.path / "bad.feat").string();
  {
    std::ofstream os(bad_magic, std::ios::binary);
    os << "NOTAFEAT garbage";
  }
  CHECK_THROWS_WITH_AS(read_usadfeat(bad_magic), doctest::Contains("magic"),
                       Error);

  // truncated payload (dims inconsistent with content)
  std::ifstream is(good, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  const std::string trunc = (dir.path / "trunc.feat").string();
  {
    std::ofstream os(trunc, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 24));
  }
  CHECK_THROWS_WITH_AS(read_usadfeat(trunc), doctest::Contains("inconsistent"),
                       Error);

  // trailing junk
  const std::string fat = (dir.path / "fat.feat").string();
  {
    std::ofstream os(fat, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os << "extra";
  }
  CHECK_THROWS_WITH_AS(read_usadfeat(fat), doctest::Contains("trailing"), Error);
}

TEST_CASE("f32 dumps round-trip through f32 exactly") {
  TempDir dir;
  Rng rng(6);
  Mat m = random_mat(rng, 5, 3);
  // round to f32 first so the round-trip is bit-exact
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  const std::string p = (dir.path / "f32.feat").string();
  write_usadfeat(p, m, 25.0, FeatDtype::f32);
  FeatData fd = read_usadfeat(p);
  CHECK(fd.framerate == 25.0);
  CHECK((fd.as_matrix() - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("teacher spec parsing") {
  TeacherSpec a = TeacherSpec::parse("synthetic:12x192", "T1", 5);
  CHECK(a.n_layers == 12);
  CHECK(a.target_dim == 192);
  CHECK(a.framerate == 50.0);
  CHECK(a.seed == 5);

  TeacherSpec b = TeacherSpec::parse("synthetic:6x96@25#42", "T2", 5);
  CHECK(b.framerate == 25.0);
  CHECK(b.seed == 42);

  TeacherSpec c = TeacherSpec::parse("dump:/some/dir", "T1", 5);
  CHECK(c.source == TeacherSpec::Source::dump);
  CHECK(c.dump_dir == "/some/dir");

  CHECK_THROWS_AS(TeacherSpec::parse("bogus:1x2", "T1", 0), Error);
  CHECK_THROWS_AS(TeacherSpec::parse("synthetic:12x100", "T1", 0), Error);
}
