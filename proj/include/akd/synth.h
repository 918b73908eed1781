// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Deterministic synthetic audio for desk-scale training and probing.
// Two domains are generated: "speech" (harmonic source with a slowly
// drifting pitch contour and syllabic amplitude modulation) and "sound"
// (piecewise-stationary noise bands and inharmonic tone complexes with
// abrupt transitions). Both share spectral range and overall level so a
// trivial loudness cue does not separate them.

#pragma once

#include <string>
#include <vector>

#include "akd/frontend.h"

namespace akd {

Wave synth_speech_like(uint64_t seed, double seconds, int sample_rate = 16000);
Wave synth_sound_like(uint64_t seed, double seconds, int sample_rate = 16000);
Wave synth_domain_clip(const std::string& domain, uint64_t seed,
                       double seconds, int sample_rate = 16000);

// Frame-level probe material: concatenated segments of {tone, noise, quiet}.
// Labels are per 20 ms frame (50 Hz), by segment class at the frame center.
struct FrameTaskClip {
  Wave wave;
  std::vector<int> labels;  // 0 = tone, 1 = noise, 2 = quiet
};
FrameTaskClip synth_frame_task_clip(uint64_t seed, double seconds,
                                    int sample_rate = 16000);

// Speaker-like channel identification: a speech-like base clip passed
// through a fixed per-channel spectral tilt (FIR filter derived from the
// channel id).
Wave synth_channel_clip(uint64_t seed, int channel, double seconds,
                        int sample_rate = 16000);

}  // namespace akd
