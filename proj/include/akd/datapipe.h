// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Corpus preparation and batch assembly: segmentation, silence filtering,
// resampling, domain-balanced mixing with integer upsampling weights,
// JSON-lines manifests, and seconds-budgeted batching.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "akd/frontend.h"
#include "akd/wavio.h"

namespace akd {

struct ManifestEntry {
  std::string id;
  std::string path;
  std::string domain;  // speech | sound | music
  double duration = 0.0;
  int sample_rate = 16000;
  int weight = 1;  // integer upsampling factor
};

struct MixtureSpec {
  struct Item {
    std::string name;
    std::string domain;
    long long clips = 0;
    int weight = 1;
    double proportion = 0.0;
  };
  std::vector<Item> items;
  long long weighted_total = 0;

  double domain_proportion(const std::string& domain) const;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  bool has_norm = false;
  NormStats norm;
  MixtureSpec mixture;  // filled in by mixing

  double total_seconds() const;
};

bool is_valid_domain(const std::string& d);

// Splits a clip into consecutive 10 s segments plus remainder; segments
// shorter than 2 s or longer than 30 s are discarded. Durations <= 30 s and
// >= 2 s pass through whole when segmentation is off (speech).
std::vector<double> segment_clip(double duration_seconds);

// True iff at least 95% of 25 ms frames have RMS below -60 dBFS.
bool detect_silence(const Wave& wave);

// Band-limited (windowed-sinc) resampling. Output length is
// round(n * to_rate / from_rate).
Wave resample(const Wave& wave, int from_rate, int to_rate = 16000);

// Mixture arithmetic over (dataset name, domain, clip count) rows with
// per-domain integer upsampling factors.
MixtureSpec mixture_from_counts(
    const std::vector<std::tuple<std::string, std::string, long long>>& rows,
    const std::map<std::string, int>& domain_factors);

// Merges per-dataset manifests, assigning each entry its domain's weight.
Manifest build_mixture(const std::vector<Manifest>& manifests,
                       const std::map<std::string, int>& domain_factors);

// Manifest JSONL I/O. The header line carries the format version plus
// normalization stats and mixture info when present.
void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

// Scans directories for .wav files, resamples to 16 kHz, segments sound and
// music into 10 s clips, drops silent or out-of-range clips, and writes the
// processed mono PCM16 clips into clips_dir.
Manifest prepare_corpus(const std::vector<std::string>& input_dirs,
                        const std::string& domain,
                        const std::string& clips_dir);

// Scalar mel-log statistics over every frame of every clip in the manifest.
NormStats compute_corpus_norm(const Manifest& m);

// Seconds-budgeted batches over the weighted clip multiset: a clip with
// weight w appears w times per epoch. Shuffling is seed-deterministic and
// clips are bucketed by duration before packing.
std::vector<std::vector<int>> batch_by_seconds(const Manifest& m,
                                               double budget_seconds,
                                               uint64_t seed);

}  // namespace akd
