// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/synth.h"

#include <cmath>

namespace akd {

namespace {

void normalize_rms(Wave& w, double target_rms) {
  double acc = 0.0;
  for (double s : w) acc += s * s;
  const double rms = std::sqrt(acc / std::max<size_t>(w.size(), 1));
  if (rms < 1e-9) return;
  const double g = target_rms / rms;
  for (double& s : w) s *= g;
}

}  // namespace

Wave synth_speech_like(uint64_t seed, double seconds, int sample_rate) {
  Rng rng = rng_for(seed, "speech-like");
  const size_t n = static_cast<size_t>(seconds * sample_rate);
  Wave w(n, 0.0);

  double f0 = 90.0 + rng.uniform() * 190.0;        // pitch start
  const double formant = 500.0 + rng.uniform() * 2000.0;
  const double fw = 300.0 + rng.uniform() * 500.0;  // formant width
  const double am_rate = 3.0 + rng.uniform() * 3.0; // syllabic modulation
  const double am_phase = rng.uniform() * 2.0 * M_PI;
  const int harmonics = 8 + static_cast<int>(rng.randint(5));
  std::vector<double> phase(harmonics, 0.0);
  for (auto& p : phase) p = rng.uniform() * 2.0 * M_PI;

  double drift = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    if (i % 160 == 0) {  // pitch random walk every 10 ms
      drift = 0.9 * drift + 0.1 * (rng.normal() * 18.0);
      f0 = std::clamp(f0 + drift * 0.01, 80.0, 320.0);
    }
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      const double fh = f0 * h;
      if (fh > 7000.0) break;
      const double res =
          std::exp(-0.5 * std::pow((fh - formant) / fw, 2.0)) + 0.15;
      phase[h - 1] += 2.0 * M_PI * fh / sample_rate;
      s += res / h * std::sin(phase[h - 1]);
    }
    const double am =
        0.3 + 0.7 * 0.5 * (1.0 + std::sin(2.0 * M_PI * am_rate * t + am_phase));
    w[i] = s * am + 0.004 * rng.normal();  // low noise floor
  }
  normalize_rms(w, 0.08 * std::pow(2.0, rng.uniform() - 0.5));
  return w;
}

Wave synth_sound_like(uint64_t seed, double seconds, int sample_rate) {
  Rng rng = rng_for(seed, "sound-like");
  const size_t n = static_cast<size_t>(seconds * sample_rate);
  Wave w(n, 0.0);

  size_t pos = 0;
  while (pos < n) {
    const size_t seg =
        static_cast<size_t>((0.12 + rng.uniform() * 0.28) * sample_rate);
    const size_t end = std::min(n, pos + seg);
    const double gain = 0.25 + rng.uniform() * 0.75;
    if (rng.uniform() < 0.5) {
      // band-limited noise burst: white noise through a 2nd-order resonator
      const double fc = 200.0 + rng.uniform() * 5000.0;
      const double q = 2.0 + rng.uniform() * 6.0;
      const double wc = 2.0 * M_PI * fc / sample_rate;
      const double r = std::exp(-wc / (2.0 * q));
      const double a1 = -2.0 * r * std::cos(wc), a2 = r * r;
      double y1 = 0.0, y2 = 0.0;
      for (size_t i = pos; i < end; ++i) {
        const double x = rng.normal() * 0.15;
        const double y = x - a1 * y1 - a2 * y2;
        w[i] = gain * y * (1.0 - r);
        y2 = y1;
        y1 = y;
      }
    } else {
      // inharmonic tone complex, constant within the segment
      const int parts = 2 + static_cast<int>(rng.randint(3));
      std::vector<double> freq(parts), ph(parts);
      for (int p = 0; p < parts; ++p) {
        freq[p] = 100.0 + rng.uniform() * 5900.0;
        ph[p] = rng.uniform() * 2.0 * M_PI;
      }
      for (size_t i = pos; i < end; ++i) {
        double s = 0.0;
        for (int p = 0; p < parts; ++p)
          s += std::sin(ph[p] + 2.0 * M_PI * freq[p] *
                                    static_cast<double>(i - pos) / sample_rate);
        w[i] = gain * 0.3 * s;
      }
    }
    pos = end;
  }
  normalize_rms(w, 0.08 * std::pow(2.0, rng.uniform() - 0.5));
  return w;
}

Wave synth_domain_clip(const std::string& domain, uint64_t seed,
                       double seconds, int sample_rate) {
  if (domain == "speech") return synth_speech_like(seed, seconds, sample_rate);
  if (domain == "sound" || domain == "music")
    return synth_sound_like(seed, seconds, sample_rate);
  throw Error(str("unknown synthetic domain: ", domain));
}

FrameTaskClip synth_frame_task_clip(uint64_t seed, double seconds,
                                    int sample_rate) {
  Rng rng = rng_for(seed, "frame-task");
  const size_t n = static_cast<size_t>(seconds * sample_rate);
  FrameTaskClip out;
  out.wave.assign(n, 0.0);
  std::vector<int> sample_class(n, 2);

  size_t pos = 0;
  while (pos < n) {
    const size_t seg =
        static_cast<size_t>((0.2 + rng.uniform() * 0.4) * sample_rate);
    const size_t end = std::min(n, pos + seg);
    const int cls = static_cast<int>(rng.randint(3));
    if (cls == 0) {
      const double f = 200.0 + rng.uniform() * 1800.0;
      double ph = rng.uniform() * 2.0 * M_PI;
      for (size_t i = pos; i < end; ++i) {
        ph += 2.0 * M_PI * f / sample_rate;
        out.wave[i] = 0.12 * std::sin(ph);
      }
    } else if (cls == 1) {
      for (size_t i = pos; i < end; ++i) out.wave[i] = 0.1 * rng.normal();
    } else {
      for (size_t i = pos; i < end; ++i) out.wave[i] = 0.002 * rng.normal();
    }
    for (size_t i = pos; i < end; ++i) sample_class[i] = cls;
    pos = end;
  }
  // 50 Hz labels by segment class at the frame center
  const size_t frames = n / (static_cast<size_t>(sample_rate) / 50);
  for (size_t f = 0; f < frames; ++f) {
    const size_t center = f * (sample_rate / 50) + sample_rate / 100;
    out.labels.push_back(sample_class[std::min(center, n - 1)]);
  }
  return out;
}

Wave synth_channel_clip(uint64_t seed, int channel, double seconds,
                        int sample_rate) {
  Wave base = synth_speech_like(splitmix64(seed ^ 0xC0FFEE), seconds,
                                sample_rate);
  // fixed per-channel FIR: random log-gains over 8 bands, window design
  Rng crng = rng_for(0xABCD1234ULL + static_cast<uint64_t>(channel),
                     "channel-filter");
  constexpr int kTaps = 65;
  constexpr int kBands = 8;
  std::vector<double> gains(kBands);
  for (auto& g : gains) g = std::pow(10.0, (crng.uniform() * 18.0 - 9.0) / 20.0);
  std::vector<double> h(kTaps, 0.0);
  const int mid = kTaps / 2;
  for (int b = 0; b < kBands; ++b) {
    const double f1 = 8000.0 * b / kBands;
    const double f2 = 8000.0 * (b + 1) / kBands;
    for (int k = 0; k < kTaps; ++k) {
      const int m = k - mid;
      const double window =
          0.54 - 0.46 * std::cos(2.0 * M_PI * k / (kTaps - 1));
      double band;
      if (m == 0) {
        band = 2.0 * (f2 - f1) / sample_rate;
      } else {
        band = (std::sin(2.0 * M_PI * f2 * m / sample_rate) -
                std::sin(2.0 * M_PI * f1 * m / sample_rate)) /
               (M_PI * m);
      }
      h[k] += gains[b] * band * window;
    }
  }
  Wave out(base.size(), 0.0);
  for (size_t i = 0; i < base.size(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      const long j = static_cast<long>(i) - k;
      if (j >= 0) acc += h[k] * base[static_cast<size_t>(j)];
    }
    out[i] = acc;
  }
  normalize_rms(out, 0.08);
  return out;
}

}  // namespace akd
