// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "akd/common.h"
#include "akd/frontend.h"

namespace akd {

// Reads a RIFF/WAVE file (PCM16 or IEEE float32). Multichannel audio is
// downmixed by averaging. Samples are scaled to [-1, 1].
Wave read_wav(const std::string& path, int* sample_rate);

// Writes mono PCM16.
void write_wav(const std::string& path, const Wave& wave, int sample_rate);

}  // namespace akd
