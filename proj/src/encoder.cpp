// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/encoder.h"

#include <algorithm>
#include <cmath>

namespace akd {

void EncoderConfig::validate() const {
  AKD_CHECK(n_layers >= 1, "encoder: n_layers must be >= 1");
  AKD_CHECK(d_model > 0 && n_heads > 0 && d_model % n_heads == 0,
            "encoder: d_model ", d_model, " must be divisible by n_heads ",
            n_heads);
  AKD_CHECK(conv_pos_groups > 0 && d_model % conv_pos_groups == 0,
            "encoder: d_model must be divisible by conv_pos_groups");
  AKD_CHECK(ffn_mult >= 1, "encoder: ffn_mult must be >= 1");
  AKD_CHECK(rel_pos_max_distance >= 1, "encoder: rel_pos_max_distance >= 1");
  AKD_CHECK(dropout >= 0.0 && dropout < 1.0, "encoder: dropout in [0,1)");
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  EncoderConfig c;
  if (name == "small" || name == "small-ablation") {
    c.d_model = 384;
    c.n_layers = 12;
    c.n_heads = 6;
  } else if (name == "base") {
    c.d_model = 768;
    c.n_layers = 12;
    c.n_heads = 12;
  } else if (name == "large") {
    c.d_model = 1024;
    c.n_layers = 24;
    c.n_heads = 16;
  } else if (name == "micro") {
    // CI-scale configuration, not from the published hyperparameter table.
    c.d_model = 64;
    c.n_layers = 4;
    c.n_heads = 4;
    c.rel_pos_max_distance = 64;
    c.dropout = 0.0;
  } else {
    throw Error(str("unknown encoder preset: ", name));
  }
  return c;
}

void validate_tap_layers(const std::vector<int>& tap_layers, int n_layers) {
  for (size_t i = 0; i < tap_layers.size(); ++i) {
    AKD_CHECK(tap_layers[i] >= 1 && tap_layers[i] <= n_layers,
              "tap index ", tap_layers[i], " out of range [1, ", n_layers, "]");
    if (i > 0)
      AKD_CHECK(tap_layers[i] > tap_layers[i - 1],
                "tap layers must be sorted and unique");
  }
}

Encoder::Encoder(ad::ParamStore& ps, const std::string& prefix,
                 const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d_model;
  for (int i = 0; i < cfg_.conv_pos_layers; ++i) {
    pos_convs_.emplace_back(ps, str(prefix, ".pos", i), d, d,
                            cfg_.conv_pos_kernel, 1,
                            cfg_.conv_pos_kernel / 2, cfg_.conv_pos_groups,
                            rng, cfg_.init_std);
  }
  const int rel_rows = 2 * cfg_.rel_pos_max_distance + 1;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    Block b;
    const std::string lp = str(prefix, ".layer", l + 1);
    b.ln_attn = LayerNormP(ps, lp + ".ln_attn", d);
    b.wq = Linear(ps, lp + ".wq", d, d, rng, cfg_.init_std);
    b.wk = Linear(ps, lp + ".wk", d, d, rng, cfg_.init_std);
    b.wv = Linear(ps, lp + ".wv", d, d, rng, cfg_.init_std);
    b.wo = Linear(ps, lp + ".wo", d, d, rng, cfg_.init_std);
    b.rel_table = ps.add(lp + ".rel_table",
                         trunc_normal_mat(rng, rel_rows, cfg_.head_dim(),
                                          cfg_.init_std));
    b.ln_ffn = LayerNormP(ps, lp + ".ln_ffn", d);
    b.ff1 = Linear(ps, lp + ".ff1", d, d * cfg_.ffn_mult, rng, cfg_.init_std);
    b.ff2 = Linear(ps, lp + ".ff2", d * cfg_.ffn_mult, d, rng, cfg_.init_std);
    blocks_.push_back(std::move(b));
  }
  final_ln_ = LayerNormP(ps, prefix + ".final_ln", d);
}

ad::Var Encoder::conv_pos(const ad::Var& x, const Mat* keep) const {
  ad::Var h = x;
  for (size_t i = 0; i < pos_convs_.size(); ++i) {
    h = pos_convs_[i].forward(h);
    if (i + 1 < pos_convs_.size()) h = ad::gelu(h);
    if (keep) h = ad::mul_colvec(h, *keep);
  }
  return h;
}

EncoderTaps Encoder::forward(const ad::Var& features,
                             const std::vector<int>& tap_layers,
                             const std::vector<bool>* pad_mask,
                             Rng* dropout_rng) const {
  const Eigen::Index T = features.rows();
  AKD_CHECK(features.cols() == cfg_.d_model, "encoder: feature dim ",
            features.cols(), " != d_model ", cfg_.d_model);
  validate_tap_layers(tap_layers, cfg_.n_layers);

  Mat keep;
  Mat attn_bias;
  if (pad_mask) {
    AKD_CHECK(static_cast<Eigen::Index>(pad_mask->size()) == T,
              "encoder: pad_mask length ", pad_mask->size(), " != T ", T);
    keep = Mat::Ones(T, 1);
    attn_bias = Mat::Zero(T, T);
    for (Eigen::Index t = 0; t < T; ++t) {
      if ((*pad_mask)[t]) {
        keep(t, 0) = 0.0;
        attn_bias.col(t).setConstant(-1e30);
      }
    }
  }

  ad::Var x = features;
  if (pad_mask) x = ad::mul_colvec(x, keep);
  x = ad::add(x, conv_pos(x, pad_mask ? &keep : nullptr));

  const int dh = cfg_.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const double p_drop = dropout_rng ? cfg_.dropout : 0.0;

  EncoderTaps out;
  size_t next_tap = 0;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const Block& b = blocks_[l];
    ad::Var h = b.ln_attn.forward(x);
    ad::Var q = b.wq.forward(h);
    ad::Var k = b.wk.forward(h);
    ad::Var v = b.wv.forward(h);
    std::vector<ad::Var> head_outs;
    head_outs.reserve(cfg_.n_heads);
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
      ad::Var qh = ad::slice_cols(q, hd * dh, dh);
      ad::Var kh = ad::slice_cols(k, hd * dh, dh);
      ad::Var vh = ad::slice_cols(v, hd * dh, dh);
      ad::Var scores = ad::matmul_nt(qh, kh);
      ad::Var rel = ad::rel_pos_bias(ad::matmul_nt(qh, b.rel_table), T,
                                     cfg_.rel_pos_max_distance);
      ad::Var s = ad::scale(ad::add(scores, rel), inv_sqrt_dh);
      if (pad_mask) s = ad::add_constmat(s, attn_bias);
      head_outs.push_back(ad::matmul(ad::softmax_rows(s), vh));
    }
    ad::Var attn = b.wo.forward(ad::concat_cols(head_outs));
    if (p_drop > 0.0) attn = ad::dropout(attn, p_drop, *dropout_rng);
    x = ad::add(x, attn);

    ad::Var f = b.ff2.forward(ad::gelu(b.ff1.forward(b.ln_ffn.forward(x))));
    if (next_tap < tap_layers.size() && tap_layers[next_tap] == l + 1) {
      out.taps.emplace_back(l + 1, f);
      ++next_tap;
    }
    if (p_drop > 0.0) f = ad::dropout(f, p_drop, *dropout_rng);
    x = ad::add(x, f);
  }
  out.final = final_ln_.forward(x);
  return out;
}

LayerTapSet Encoder::encode(const Mat& features,
                            const std::vector<int>& tap_layers,
                            const std::vector<bool>* pad_mask) const {
  EncoderTaps t =
      forward(ad::Var::constant(features), tap_layers, pad_mask, nullptr);
  LayerTapSet out;
  for (auto& [layer, var] : t.taps) out.taps[layer] = var.val();
  out.final = t.final.val();
  return out;
}

FlopBreakdown count_flops_detail(const EncoderConfig& cfg,
                                 Eigen::Index seq_len) {
  AKD_CHECK(seq_len > 0, "count_flops: seq_len must be positive");
  const double T = static_cast<double>(seq_len);
  const double d = cfg.d_model;
  FlopBreakdown f;
  // Stride-2 frame extractor consuming 2T mel frames of 128 bins, kernel 3.
  f.embed = (2.0 * T) * 3.0 * 128.0 * d / 2.0;
  f.conv_pos = cfg.conv_pos_layers * T * cfg.conv_pos_kernel * d * d /
               std::max(1, cfg.conv_pos_groups);
  const double L = cfg.n_layers;
  f.projections = L * 4.0 * T * d * d;
  f.attention = L * 2.0 * T * T * d;
  f.rel_pos = L * T * (2.0 * cfg.rel_pos_max_distance + 1.0) * d;
  f.ffn = L * 2.0 * T * d * (cfg.ffn_mult * d);
  return f;
}

uint64_t count_flops(const EncoderConfig& cfg, Eigen::Index seq_len) {
  return static_cast<uint64_t>(count_flops_detail(cfg, seq_len).total());
}

}  // namespace akd
