// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Frozen-encoder probing on frame- and instance-level tasks, and score
// aggregation between baseline and state-of-the-art anchors.

#pragma once

#include <string>
#include <vector>

#include "akd/frontend.h"
#include "akd/model.h"

namespace akd {

enum class Granularity { frame, instance };
enum class Direction { higher_better, lower_better };

Direction direction_from_name(const std::string& s);
const char* direction_name(Direction d);

struct ScoreRow {
  std::string task;
  double value = 0.0;
  double baseline = 0.0;
  double sota = 0.0;
  Direction direction = Direction::higher_better;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

// (1000/|T|) * sum over tasks of (s - baseline) / (sota - baseline).
double superb_score(const ScoreTable& table);

// Per-clip, per-layer representations of the frozen student. Layers are the
// 1..L FFN taps followed by the final (post-norm) hidden state; instance
// granularity mean-pools each layer over time.
struct ExtractedClip {
  std::vector<Mat> layers;  // frame: [T x d]; instance: [1 x d]
};

std::vector<ExtractedClip> extract_representations(
    const StudentModel& model, const NormStats& stats,
    const std::vector<MelFrames>& raw_mels, Granularity granularity);

struct ProbeOptions {
  bool learnable_weights = true;
  int one_hot_layer = 0;  // 1-based; L+1 selects the final hidden state
  uint64_t seed = 0;
  int epochs = 250;
  double lr = 0.05;
  double weight_decay = 1e-4;
  double holdout = 0.25;
};

struct ProbeResult {
  double accuracy = 0.0;       // held-out
  Vec layer_weights;           // softmax weights actually used
  long train_examples = 0;
  long test_examples = 0;
};

// Linear probe with learnable softmax layer weighting, trained by Adam on
// standardized features. Labels must contain at least two classes.
ProbeResult train_probe(const std::vector<ExtractedClip>& clips,
                        const std::vector<std::vector<int>>& labels_per_clip,
                        Granularity granularity, const ProbeOptions& opts);

// Convenience wrapper for instance tasks (one label per clip).
ProbeResult train_probe_instance(const std::vector<ExtractedClip>& clips,
                                 const std::vector<int>& labels,
                                 const ProbeOptions& opts);

struct TaskResult {
  std::string task;
  std::string metric;
  Granularity granularity = Granularity::instance;
  Direction direction = Direction::higher_better;
  double value = 0.0;
};

struct ProbeSuiteOptions {
  uint64_t seed = 0;
  int clips_per_task = 96;
  double clip_seconds = 3.0;
  int channel_classes = 4;
  ProbeOptions probe;
};

// The desk-scale task suite: synthetic domain-ID and channel-ID instance
// tasks plus a frame-level source-class task, generated from seeds.
// The model is frozen throughout (enforced by a parameter hash check).
std::vector<TaskResult> run_probe_suite(const StudentModel& model,
                                        const NormStats& stats,
                                        const ProbeSuiteOptions& opts);

}  // namespace akd
