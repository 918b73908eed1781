// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "akd/encoder.h"
#include "testutil.h"

using namespace akd;
using akd::test::random_mat;

namespace {

EncoderConfig tiny_config(int d = 32, int layers = 2, int heads = 2) {
  EncoderConfig c;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = heads;
  c.conv_pos_layers = 2;
  c.conv_pos_kernel = 5;
  c.conv_pos_groups = d >= 16 ? 16 : d;
  c.rel_pos_max_distance = 8;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("tap shapes propagate through the published geometry") {
  Rng rng(1);
  ad::ParamStore ps;
  EncoderConfig cfg = EncoderConfig::preset("small");
  Encoder enc(ps, "enc", cfg, rng);
  Mat feats = random_mat(rng, 496, 384, 0.5);
  LayerTapSet taps = enc.encode(feats, {3, 6, 9, 12});
  CHECK(taps.taps.size() == 4);
  for (int l : {3, 6, 9, 12}) {
    CHECK(taps.taps.at(l).rows() == 496);
    CHECK(taps.taps.at(l).cols() == 384);
  }
  CHECK(taps.final.rows() == 496);
}

TEST_CASE("single-layer tap is the final FFN output") {
  Rng rng(2);
  ad::ParamStore ps;
  Encoder enc(ps, "enc", tiny_config(32, 1), rng);
  Mat feats = random_mat(rng, 7, 32);
  LayerTapSet taps = enc.encode(feats, {1});
  CHECK(taps.taps.size() == 1);
  CHECK(taps.taps.count(1) == 1);
}

TEST_CASE("tap index validation") {
  Rng rng(3);
  ad::ParamStore ps;
  Encoder enc(ps, "enc", tiny_config(), rng);
  Mat feats = random_mat(rng, 5, 32);
  CHECK_THROWS_WITH_AS(enc.encode(feats, {3}), doctest::Contains("out of range"),
                       Error);
  CHECK_THROWS_WITH_AS(enc.encode(feats, {0}), doctest::Contains("out of range"),
                       Error);
  CHECK_THROWS_AS(enc.encode(feats, {2, 1}), Error);
}

TEST_CASE("deterministic initialization and forward") {
  Rng rng_a(77), rng_b(77);
  ad::ParamStore ps_a, ps_b;
  Encoder a(ps_a, "enc", tiny_config(), rng_a);
  Encoder b(ps_b, "enc", tiny_config(), rng_b);
  CHECK(ps_a.content_hash() == ps_b.content_hash());
  Rng data(5);
  Mat feats = random_mat(data, 11, 32);
  LayerTapSet ta = a.encode(feats, {1, 2});
  LayerTapSet tb = b.encode(feats, {1, 2});
  CHECK((ta.final - tb.final).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ta.taps.at(1) - tb.taps.at(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("independent sequences are independent of processing order") {
  Rng rng(4);
  ad::ParamStore ps;
  Encoder enc(ps, "enc", tiny_config(), rng);
  Mat x1 = random_mat(rng, 9, 32);
  Mat x2 = random_mat(rng, 13, 32);
  Mat first = enc.encode(x1, {2}).final;
  enc.encode(x2, {2});
  Mat again = enc.encode(x1, {2}).final;
  CHECK((first - again).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("appended padded frames do not change unpadded outputs") {
  Rng rng(6);
  ad::ParamStore ps;
  Encoder enc(ps, "enc", tiny_config(32, 2), rng);
  const Eigen::Index T = 12, P = 5;
  Mat feats = random_mat(rng, T, 32);

  LayerTapSet plain = enc.encode(feats, {1, 2});

  Mat padded = Mat::Zero(T + P, 32);
  padded.topRows(T) = feats;
  // garbage in the padded region must not leak into real positions
  padded.bottomRows(P).setConstant(42.0);
  std::vector<bool> mask(T + P, false);
  for (Eigen::Index i = T; i < T + P; ++i) mask[i] = true;
  LayerTapSet masked = enc.encode(padded, {1, 2}, &mask);

  CHECK((masked.final.topRows(T) - plain.final).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((masked.taps.at(2).topRows(T) - plain.taps.at(2)).cwiseAbs().maxCoeff() <
        1e-5);
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(7);
  ad::ParamStore ps;
  EncoderConfig cfg = tiny_config(16, 2, 2);
  cfg.conv_pos_groups = 16;
  cfg.init_std = 0.2;  // well-conditioned point for finite differences
  Encoder enc(ps, "enc", cfg, rng);
  Mat feats = random_mat(rng, 8, 16, 0.5);
  Mat target = random_mat(rng, 8, 16, 0.5);

  // smooth loss (no |x| kinks) so central differences converge cleanly
  auto build = [&]() {
    EncoderTaps t = enc.forward(ad::Var::constant(feats), {1, 2});
    ad::Var diff = ad::sub_constmat(t.taps[1].second, target);
    ad::Var sq = ad::mean_all(ad::hadamard(diff, diff));
    return ad::add(sq, ad::mean_all(ad::hadamard(t.final, t.final)));
  };
  std::vector<ad::Var> params;
  for (auto& p : ps.all()) params.push_back(p.var);
  auto res = akd::test::grad_check(params, build, 1e-5, 6);
  CHECK(res.checked > 100);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("flop estimates are monotone and scale as expected") {
  EncoderConfig small = EncoderConfig::preset("small");
  EncoderConfig base = EncoderConfig::preset("base");
  CHECK(count_flops(base, 500) > count_flops(small, 500));
  CHECK(count_flops(small, 1000) > count_flops(small, 500));

  FlopBreakdown f1 = count_flops_detail(small, 500);
  FlopBreakdown f2 = count_flops_detail(small, 1000);
  CHECK(f2.attention == doctest::Approx(4.0 * f1.attention));
  CHECK(f2.ffn == doctest::Approx(2.0 * f1.ffn));

  EncoderConfig none = small;
  none.n_layers = 0;
  FlopBreakdown f0 = count_flops_detail(none, 500);
  CHECK(f0.attention == 0.0);
  CHECK(f0.ffn == 0.0);
  CHECK(f0.embed > 0.0);
}

TEST_CASE("parameter counts are near the published sizes") {
  auto count = [](const std::string& name) {
    Rng rng(1);
    ad::ParamStore ps;
    Encoder enc(ps, "enc", EncoderConfig::preset(name), rng);
    return static_cast<double>(ps.count_scalars());
  };
  CHECK(count("small") == doctest::Approx(24e6).epsilon(0.2));
}
