// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/featio.h"

#include <cstring>
#include <fstream>

namespace akd {

namespace {

constexpr char kMagic[8] = {'U', 'S', 'A', 'D', 'F', 'E', 'A', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  AKD_CHECK(is.good(), "feature file truncated");
  return v;
}

}  // namespace

Mat FeatData::as_matrix() const {
  AKD_CHECK(dims.size() == 2, "feature container is not 2-D (ndims=",
            dims.size(), ")");
  Mat m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
  std::memcpy(m.data(), payload.data(), sizeof(double) * payload.size());
  return m;
}

Mat FeatData::slice2d(uint64_t index) const {
  AKD_CHECK(dims.size() == 3, "feature container is not 3-D");
  AKD_CHECK(index < dims[0], "plane index out of range");
  const uint64_t plane = dims[1] * dims[2];
  Mat m(static_cast<Eigen::Index>(dims[1]), static_cast<Eigen::Index>(dims[2]));
  std::memcpy(m.data(), payload.data() + index * plane, sizeof(double) * plane);
  return m;
}

void write_usadfeat(const std::string& path, const FeatData& data) {
  AKD_CHECK(!data.dims.empty(), "feature dims must be non-empty");
  AKD_CHECK(data.payload.size() == data.count(), "payload size ",
            data.payload.size(), " inconsistent with dims (", data.count(), ")");
  std::ofstream os(path, std::ios::binary);
  AKD_CHECK(os.good(), "cannot open for writing: ", path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint32_t>(data.dims.size()));
  for (uint64_t d : data.dims) write_pod(os, d);
  write_pod(os, static_cast<float>(data.framerate));
  write_pod(os, static_cast<uint32_t>(data.dtype));
  if (data.dtype == FeatDtype::f32) {
    std::vector<float> tmp(data.payload.begin(), data.payload.end());
    os.write(reinterpret_cast<const char*>(tmp.data()),
             sizeof(float) * tmp.size());
  } else {
    os.write(reinterpret_cast<const char*>(data.payload.data()),
             sizeof(double) * data.payload.size());
  }
  AKD_CHECK(os.good(), "write failed: ", path);
}

void write_usadfeat(const std::string& path, const Mat& m, double framerate,
                    FeatDtype dtype) {
  FeatData d;
  d.dims = {static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())};
  d.framerate = framerate;
  d.dtype = dtype;
  d.payload.assign(m.data(), m.data() + m.size());
  write_usadfeat(path, d);
}

FeatData read_usadfeat(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  AKD_CHECK(is.good(), "cannot open feature file: ", path);
  char magic[8];
  is.read(magic, sizeof(magic));
  AKD_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            "bad feature file magic: ", path);
  const uint32_t version = read_pod<uint32_t>(is);
  AKD_CHECK(version == kVersion, "unsupported feature file version ", version);
  const uint32_t ndims = read_pod<uint32_t>(is);
  AKD_CHECK(ndims >= 1 && ndims <= 4, "implausible ndims ", ndims);
  FeatData out;
  for (uint32_t i = 0; i < ndims; ++i)
    out.dims.push_back(read_pod<uint64_t>(is));
  out.framerate = read_pod<float>(is);
  const uint32_t tag = read_pod<uint32_t>(is);
  AKD_CHECK(tag == 1 || tag == 2, "unknown dtype tag ", tag);
  out.dtype = static_cast<FeatDtype>(tag);
  const uint64_t n = out.count();
  AKD_CHECK(n > 0 && n < (1ULL << 34), "implausible element count ", n);
  out.payload.resize(n);
  if (out.dtype == FeatDtype::f32) {
    std::vector<float> tmp(n);
    is.read(reinterpret_cast<char*>(tmp.data()), sizeof(float) * n);
    AKD_CHECK(is.gcount() == static_cast<std::streamsize>(sizeof(float) * n),
              "feature payload inconsistent with dims: ", path);
    std::copy(tmp.begin(), tmp.end(), out.payload.begin());
  } else {
    is.read(reinterpret_cast<char*>(out.payload.data()), sizeof(double) * n);
    AKD_CHECK(is.gcount() == static_cast<std::streamsize>(sizeof(double) * n),
              "feature payload inconsistent with dims: ", path);
  }
  is.peek();
  AKD_CHECK(is.eof(), "trailing bytes in feature file: ", path);
  return out;
}

}  // namespace akd
