// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/frontend.h"

#include <cmath>
#include <complex>

namespace akd {

namespace {

// In-place iterative radix-2 FFT.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  AKD_CHECK((n & (n - 1)) == 0, "fft size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// 128 triangular filters, HTK spacing, fmin..fmax, applied to power bins.
Mat build_mel_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  Mat fb = Mat::Zero(cfg.n_mels, n_bins);
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double fk = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      if (fk > f0 && fk < f1)
        fb(m, k) = (fk - f0) / (f1 - f0);
      else if (fk >= f1 && fk < f2)
        fb(m, k) = (f2 - fk) / (f2 - f1);
    }
  }
  return fb;
}

}  // namespace

MelFrames compute_logmel(const Wave& wave, int sample_rate,
                         const MelConfig& cfg) {
  AKD_CHECK(sample_rate == cfg.sample_rate, "resample required: got ",
            sample_rate, " Hz, expected ", cfg.sample_rate);
  AKD_CHECK(wave.size() >= static_cast<size_t>(cfg.window),
            "waveform too short: ", wave.size(), " samples, need at least ",
            cfg.window);
  const Eigen::Index T = mel_frame_count(wave.size(), cfg);
  const Mat fb = build_mel_filterbank(cfg);
  std::vector<double> window(cfg.window);
  for (int i = 0; i < cfg.window; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.window);

  MelFrames out;
  out.data.resize(T, cfg.n_mels);
  std::vector<std::complex<double>> buf(cfg.n_fft);
  Eigen::VectorXd power(cfg.n_fft / 2 + 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    const size_t off = static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i)
      buf[i] = i < cfg.window ? wave[off + i] * window[i] : 0.0;
    fft_radix2(buf);
    for (int k = 0; k <= cfg.n_fft / 2; ++k) power(k) = std::norm(buf[k]);
    out.data.row(t) =
        (fb * power).array().max(cfg.power_floor).log().transpose();
  }
  out.framerate = static_cast<double>(cfg.sample_rate) / cfg.hop;
  out.window_ms = 1000.0 * cfg.window / cfg.sample_rate;
  out.hop_ms = 1000.0 * cfg.hop / cfg.sample_rate;
  out.norm_applied = false;
  AKD_CHECK(out.data.allFinite(), "log-mel produced non-finite values");
  return out;
}

MelFrames normalize(MelFrames mel, const NormStats& stats) {
  AKD_CHECK(!mel.norm_applied, "mel features already normalized");
  AKD_CHECK(stats.std_dev > 0.0, "normalization std must be positive");
  mel.data = (mel.data.array() - stats.mean) / (2.0 * stats.std_dev);
  mel.norm_applied = true;
  return mel;
}

FrameEmbed::FrameEmbed(ad::ParamStore& ps, const std::string& prefix,
                       int n_mels, int d_model, Rng& rng, double init_std)
    : conv_(ps, prefix + ".conv", n_mels, d_model, /*kernel=*/3, /*stride=*/2,
            /*pad=*/1, /*groups=*/1, rng, init_std),
      norm_(ps, prefix + ".norm", d_model),
      d_model_(d_model) {}

ad::Var FrameEmbed::forward(const MelFrames& mel) const {
  AKD_CHECK(mel.norm_applied, "frame_embed expects normalized mel");
  AKD_CHECK(mel.data.rows() >= 2, "frame_embed: need at least 2 mel frames");
  ad::Var x = ad::Var::constant(mel.data);
  return norm_.forward(ad::gelu(conv_.forward(x)));
}

FeatureSequence FrameEmbed::apply(const MelFrames& mel) const {
  FeatureSequence out;
  out.data = forward(mel).val();
  out.framerate = 50.0;
  out.extraction = Extraction::frame;
  return out;
}

Mat PatchEmbed::patchify(const Mat& mel, int n_mels) {
  AKD_CHECK(mel.cols() == n_mels, "patchify: unexpected mel bins");
  AKD_CHECK(n_mels % kPatch == 0, "patchify: bins not divisible by patch size");
  const Eigen::Index n_time = mel.rows() / kPatch;
  const Eigen::Index n_freq = n_mels / kPatch;
  AKD_CHECK(n_time >= 1, "patch_embed: need at least ", kPatch,
            " mel frames, got ", mel.rows());
  Mat out(n_time * n_freq, kPatch * kPatch);
  for (Eigen::Index tw = 0; tw < n_time; ++tw)
    for (Eigen::Index fp = 0; fp < n_freq; ++fp) {
      const Eigen::Index row = tw * n_freq + fp;
      for (int dt = 0; dt < kPatch; ++dt)
        for (int df = 0; df < kPatch; ++df)
          out(row, dt * kPatch + df) = mel(tw * kPatch + dt, fp * kPatch + df);
    }
  return out;
}

PatchEmbed::PatchEmbed(ad::ParamStore& ps, const std::string& prefix,
                       int n_mels, int d_model, Rng& rng, double init_std)
    : proj_(ps, prefix + ".proj", kPatch * kPatch, d_model, rng, init_std),
      norm_(ps, prefix + ".norm", d_model),
      n_mels_(n_mels),
      d_model_(d_model) {}

ad::Var PatchEmbed::forward(const MelFrames& mel) const {
  AKD_CHECK(mel.norm_applied, "patch_embed expects normalized mel");
  ad::Var patches = ad::Var::constant(patchify(mel.data, n_mels_));
  return norm_.forward(proj_.forward(patches));
}

FeatureSequence PatchEmbed::apply(const MelFrames& mel) const {
  FeatureSequence out;
  out.data = forward(mel).val();
  out.framerate = 50.0;  // nominal; effective temporal resolution is 6.25 Hz
  out.extraction = Extraction::patch;
  return out;
}

const char* extraction_name(Extraction e) {
  switch (e) {
    case Extraction::frame: return "frame";
    case Extraction::patch: return "patch";
    case Extraction::fused: return "fused";
  }
  return "?";
}

Extraction extraction_from_name(const std::string& s) {
  if (s == "frame") return Extraction::frame;
  if (s == "patch") return Extraction::patch;
  if (s == "fused") return Extraction::fused;
  throw Error(str("unknown extraction mode: ", s));
}

FeatureSequence fuse_features(const FeatureSequence& a,
                              const FeatureSequence& b) {
  AKD_CHECK(a.framerate == b.framerate, "fuse_features: framerate mismatch ",
            a.framerate, " vs ", b.framerate);
  AKD_CHECK(a.data.cols() == b.data.cols(),
            "fuse_features: dimension mismatch ", a.data.cols(), " vs ",
            b.data.cols());
  const Eigen::Index n = std::min(a.data.rows(), b.data.rows());
  FeatureSequence out;
  out.data = a.data.topRows(n) + b.data.topRows(n);
  out.framerate = a.framerate;
  out.extraction = Extraction::fused;
  return out;
}

ad::Var fuse_features(const ad::Var& a, const ad::Var& b) {
  AKD_CHECK(a.cols() == b.cols(), "fuse_features: dimension mismatch");
  const Eigen::Index n = std::min(a.rows(), b.rows());
  return ad::add(ad::top_rows(a, n), ad::top_rows(b, n));
}

}  // namespace akd
