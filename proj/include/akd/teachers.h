// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Frozen teacher targets behind a uniform interface: either built-in
// synthetic transformer teachers (fixed-seed, frozen at construction) or
// activation dumps precomputed elsewhere. Includes the mean-pooling
// framerate adaptation used when a teacher runs at 25 Hz.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "akd/encoder.h"
#include "akd/featio.h"
#include "akd/frontend.h"

namespace akd {

struct TeacherSpec {
  enum class Source { synthetic, dump };

  std::string id = "T1";
  int n_layers = 12;
  int target_dim = 192;   // D
  double framerate = 50.0;
  Source source = Source::synthetic;
  uint64_t seed = 1;
  std::string dump_dir;
  double init_std = 0.12;  // synthetic init scale; larger than the student's
                           // so frozen targets are non-degenerate

  void validate() const;

  // "synthetic:<layers>x<dim>[@rate][#seed]" or "dump:<directory>".
  static TeacherSpec parse(const std::string& text, const std::string& id,
                           uint64_t default_seed);
  std::string describe() const;
};

struct TeacherTargets {
  std::vector<std::pair<int, Mat>> layers;  // teacher layer -> [T x D]
  double framerate = 50.0;

  const Mat& layer(int l) const {
    for (const auto& [idx, m] : layers)
      if (idx == l) return m;
    throw Error(str("teacher layer ", l, " not present in targets"));
  }
};

// Mean pooling with kernel 2 and stride 2; the trailing odd row is dropped.
Mat adapt_framerate(const Mat& seq);

// Pools every student tap when the teacher runs at 25 Hz; identity at 50.
LayerTapSet align_student_to_teacher(const LayerTapSet& student,
                                     double teacher_rate, double student_rate);
ad::Var align_tap(const ad::Var& tap, double teacher_rate, double student_rate);

class Teacher {
 public:
  explicit Teacher(const TeacherSpec& spec);

  // For the synthetic source `mel` must be the clip's raw (unnormalized)
  // log-mel; the teacher standardizes it internally so its targets do not
  // depend on corpus statistics. For the dump source only `clip_id` is used.
  TeacherTargets targets(const std::string& clip_id, const MelFrames* mel,
                         const std::vector<int>& layers) const;

  const TeacherSpec& spec() const { return spec_; }
  Eigen::Index expected_frames(Eigen::Index mel_frames) const;
  uint64_t param_hash() const;
  void set_cache_enabled(bool on) { cache_enabled_ = on; }
  const std::vector<int>& dumped_layers() const { return dump_layers_; }

 private:
  TeacherTargets compute(const std::string& clip_id, const MelFrames* mel,
                         const std::vector<int>& layers) const;

  TeacherSpec spec_;
  // synthetic source
  ad::ParamStore params_;
  FrameEmbed embed_;
  Encoder encoder_;
  // dump source
  std::map<std::string, std::string> dump_files_;
  std::vector<int> dump_layers_;
  uint64_t dump_hash_ = 0;

  bool cache_enabled_ = true;
  mutable std::mutex cache_mu_;
  mutable std::unordered_map<std::string, std::shared_ptr<const TeacherTargets>>
      cache_;
};

// Writes one clip's targets as a 3-D [n_layers x T x D] container.
void write_teacher_clip(const std::string& path, const TeacherTargets& t,
                        FeatDtype dtype = FeatDtype::f64);
// Writes the dump index for a directory of per-clip files.
void write_dump_index(const std::string& dir, const TeacherSpec& spec,
                      const std::vector<int>& layers,
                      const std::map<std::string, std::string>& clip_files);

}  // namespace akd
