// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Student/teacher transformer encoder: 5-layer convolutional positional
// encoding, pre-layer-norm blocks with learned relative-key attention, and
// taps exposing FFN-sublayer outputs (after the second linear projection,
// before residual addition) at selected layers.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "akd/autodiff.h"
#include "akd/common.h"
#include "akd/layers.h"

namespace akd {

struct EncoderConfig {
  int d_model = 768;
  int n_layers = 12;
  int n_heads = 12;
  int ffn_mult = 4;
  int conv_pos_layers = 5;
  int conv_pos_kernel = 19;
  int conv_pos_groups = 16;
  int rel_pos_max_distance = 160;
  double dropout = 0.1;
  double init_std = 0.02;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }

  // "small-ablation"/"small" (384 x 12), "base" (768 x 12), "large"
  // (1024 x 24), plus a non-paper "micro" (64 x 4) for CI-scale runs.
  static EncoderConfig preset(const std::string& name);
};

struct LayerTapSet {
  std::map<int, Mat> taps;  // 1-based layer index -> [T x d_model]
  Mat final;                // residual stream after the final layer norm
};

struct EncoderTaps {
  std::vector<std::pair<int, ad::Var>> taps;
  ad::Var final;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ad::ParamStore& ps, const std::string& prefix,
          const EncoderConfig& cfg, Rng& rng);

  // Graph-building forward. pad_mask (optional) marks padded positions with
  // true; padded keys are excluded from attention and padded rows are zeroed
  // ahead of the positional convolutions. dropout_rng == nullptr disables
  // dropout (inference).
  EncoderTaps forward(const ad::Var& features,
                      const std::vector<int>& tap_layers,
                      const std::vector<bool>* pad_mask = nullptr,
                      Rng* dropout_rng = nullptr) const;

  // Value-level forward for frozen use.
  LayerTapSet encode(const Mat& features, const std::vector<int>& tap_layers,
                     const std::vector<bool>* pad_mask = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNormP ln_attn;
    Linear wq, wk, wv, wo;
    ad::Var rel_table;  // [(2*max_dist+1) x head_dim], shared across heads
    LayerNormP ln_ffn;
    Linear ff1, ff2;
  };

  ad::Var conv_pos(const ad::Var& x, const Mat* keep) const;

  EncoderConfig cfg_;
  std::vector<ConvLayer> pos_convs_;
  std::vector<Block> blocks_;
  LayerNormP final_ln_;
};

void validate_tap_layers(const std::vector<int>& tap_layers, int n_layers);

// Analytic forward-pass multiply-add counts.
struct FlopBreakdown {
  double embed = 0;
  double conv_pos = 0;
  double projections = 0;  // QKVO
  double attention = 0;    // score + value mixing (quadratic in T)
  double rel_pos = 0;
  double ffn = 0;
  double total() const {
    return embed + conv_pos + projections + attention + rel_pos + ffn;
  }
};

FlopBreakdown count_flops_detail(const EncoderConfig& cfg, Eigen::Index seq_len);
uint64_t count_flops(const EncoderConfig& cfg, Eigen::Index seq_len);

}  // namespace akd
