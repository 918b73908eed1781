// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Versioned named-tensor checkpoint container with the resolved config JSON
// embedded. Training state is double precision so checkpoint/resume
// round-trips bit-exactly.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "akd/common.h"

namespace akd {

struct Checkpoint {
  std::string config_json;
  uint64_t config_hash = 0;
  int64_t step = 0;
  int64_t epoch = 0;
  int64_t batch_idx = 0;
  double ema_loss = 0.0;
  double initial_ema = 0.0;
  double flops_cum = 0.0;
  std::string rng_state;
  std::vector<std::pair<std::string, Mat>> tensors;

  const Mat* find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return &m;
    return nullptr;
  }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Arithmetic mean of the model tensors across checkpoints; optimizer state
// is discarded. All inputs must share the same config hash.
Checkpoint average_checkpoints(const std::vector<std::string>& paths);

}  // namespace akd
