// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Binary feature container shared between the frontend and the teacher
// activation dumps. Layout (little-endian):
//   magic "USADFEAT" | version u32 | ndims u32 | dims u64[ndims]
//   | framerate f32 | dtype u32 (1 = f32, 2 = f64) | row-major payload

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "akd/common.h"

namespace akd {

enum class FeatDtype : uint32_t { f32 = 1, f64 = 2 };

struct FeatData {
  std::vector<uint64_t> dims;
  double framerate = 0.0;
  FeatDtype dtype = FeatDtype::f32;
  std::vector<double> payload;  // row-major, regardless of on-disk dtype

  uint64_t count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
  }

  // Views a 2-D (or [L x T x D] slice of a 3-D) container as a matrix.
  Mat as_matrix() const;
  Mat slice2d(uint64_t index) const;  // for 3-D data: plane `index`
};

void write_usadfeat(const std::string& path, const FeatData& data);
void write_usadfeat(const std::string& path, const Mat& m, double framerate,
                    FeatDtype dtype = FeatDtype::f32);
FeatData read_usadfeat(const std::string& path);

}  // namespace akd
