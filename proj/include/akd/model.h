// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The trainable student: feature extractor(s) + encoder + mask embedding,
// with all parameters registered in one named store.

#pragma once

#include <string>

#include "akd/encoder.h"
#include "akd/frontend.h"

namespace akd {

struct StudentConfig {
  EncoderConfig encoder;
  Extraction extraction = Extraction::frame;
};

class StudentModel {
 public:
  StudentModel(const StudentConfig& cfg, uint64_t seed)
      : cfg_(cfg), seed_(seed) {
    cfg_.encoder.validate();
    Rng rng = rng_for(seed, "student-init");
    const int d = cfg_.encoder.d_model;
    if (cfg_.extraction != Extraction::patch)
      frame_ = FrameEmbed(params_, "student.embed.frame", 128, d, rng,
                          cfg_.encoder.init_std);
    if (cfg_.extraction != Extraction::frame)
      patch_ = PatchEmbed(params_, "student.embed.patch", 128, d, rng,
                          cfg_.encoder.init_std);
    encoder_ = Encoder(params_, "student.enc", cfg_.encoder, rng);
    mask_embedding_ = params_.add("student.mask_emb",
                                  trunc_normal_mat(rng, 1, d, cfg_.encoder.init_std));
  }

  // Embeds normalized mel into the 50 Hz token sequence for the configured
  // extraction mode.
  ad::Var embed(const MelFrames& mel) const {
    switch (cfg_.extraction) {
      case Extraction::frame:
        return frame_.forward(mel);
      case Extraction::patch:
        return patch_.forward(mel);
      case Extraction::fused:
        return fuse_features(frame_.forward(mel), patch_.forward(mel));
    }
    throw Error("bad extraction mode");
  }

  // Token count produced for a mel sequence of the given length.
  Eigen::Index token_count(Eigen::Index mel_rows) const {
    const Eigen::Index frame_t = (mel_rows + 1) / 2;
    const Eigen::Index patch_t = (mel_rows / PatchEmbed::kPatch) * 8;
    switch (cfg_.extraction) {
      case Extraction::frame: return frame_t;
      case Extraction::patch: return patch_t;
      case Extraction::fused: return std::min(frame_t, patch_t);
    }
    return 0;
  }

  const Encoder& encoder() const { return encoder_; }
  const StudentConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  double framerate() const { return 50.0; }
  const ad::Var& mask_embedding() const { return mask_embedding_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 private:
  StudentConfig cfg_;
  uint64_t seed_ = 0;
  ad::ParamStore params_;
  FrameEmbed frame_;
  PatchEmbed patch_;
  Encoder encoder_;
  ad::Var mask_embedding_;
};

}  // namespace akd
