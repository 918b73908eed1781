// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Waveform -> normalized log-Mel features -> embedded token sequences.
// Frame tokens come from a stride-2 temporal convolution (50 Hz); patch
// tokens come from non-overlapping 16x16 spectrogram patches (50 Hz nominal
// token rate, 6.25 Hz effective temporal resolution). Both can be fused by
// element-wise summation.

#pragma once

#include <string>
#include <vector>

#include "akd/autodiff.h"
#include "akd/common.h"
#include "akd/layers.h"

namespace akd {

using Wave = std::vector<double>;

struct MelConfig {
  int sample_rate = 16000;
  int window = 400;  // 25 ms
  int hop = 160;     // 10 ms
  int n_mels = 128;
  int n_fft = 512;
  double fmin = 0.0;
  double fmax = 8000.0;
  double power_floor = 1e-10;
};

struct MelFrames {
  Mat data;  // [T_mel x n_mels]
  double framerate = 100.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  bool norm_applied = false;
};

struct NormStats {
  double mean = 0.0;
  double std_dev = 0.5;
  std::string source;
};

enum class Extraction { frame, patch, fused };

const char* extraction_name(Extraction e);
Extraction extraction_from_name(const std::string& s);

struct FeatureSequence {
  Mat data;  // [T x d_model]
  double framerate = 50.0;
  Extraction extraction = Extraction::frame;
};

// Number of mel frames produced for n_samples of 16 kHz audio ("snip edges",
// no padding).
inline Eigen::Index mel_frame_count(size_t n_samples, const MelConfig& cfg = {}) {
  if (n_samples < static_cast<size_t>(cfg.window)) return 0;
  return static_cast<Eigen::Index>((n_samples - cfg.window) / cfg.hop) + 1;
}

MelFrames compute_logmel(const Wave& wave, int sample_rate,
                         const MelConfig& cfg = {});

// SSAST-style half-unit-variance normalization: x -> (x - mean) / (2 std).
MelFrames normalize(MelFrames mel, const NormStats& stats);

// Trainable frame extractor: temporal conv (kernel 3, stride 2, pad 1,
// 128 -> d_model), GELU, layer norm. Output rate 50 Hz.
class FrameEmbed {
 public:
  FrameEmbed() = default;
  FrameEmbed(ad::ParamStore& ps, const std::string& prefix, int n_mels,
             int d_model, Rng& rng, double init_std);

  ad::Var forward(const MelFrames& mel) const;
  FeatureSequence apply(const MelFrames& mel) const;

  int d_model() const { return d_model_; }

 private:
  ConvLayer conv_;
  LayerNormP norm_;
  int d_model_ = 0;
};

// Trainable patch extractor: 16x16 patches flattened row-major over
// (time, frequency) to 256-dim vectors, linear projection to d_model, layer
// norm. Token order is time-major with the 8 frequency patches of one
// window contiguous.
class PatchEmbed {
 public:
  static constexpr int kPatch = 16;

  PatchEmbed() = default;
  PatchEmbed(ad::ParamStore& ps, const std::string& prefix, int n_mels,
             int d_model, Rng& rng, double init_std);

  ad::Var forward(const MelFrames& mel) const;
  FeatureSequence apply(const MelFrames& mel) const;

  // Pure patch rearrangement, exposed for tests and dump tooling.
  static Mat patchify(const Mat& mel, int n_mels);

  int d_model() const { return d_model_; }

 private:
  Linear proj_;
  LayerNormP norm_;
  int n_mels_ = 0;
  int d_model_ = 0;
};

// Element-wise sum of two token sequences sharing framerate and dimension;
// both are truncated to the shorter length.
FeatureSequence fuse_features(const FeatureSequence& a,
                              const FeatureSequence& b);
ad::Var fuse_features(const ad::Var& a, const ad::Var& b);

}  // namespace akd
