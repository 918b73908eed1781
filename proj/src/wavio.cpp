// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/wavio.h"

#include <cstring>
#include <fstream>

namespace akd {

namespace {

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  AKD_CHECK(is.good(), "truncated wav file: ", path);
  return v;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Wave read_wav(const std::string& path, int* sample_rate) {
  std::ifstream is(path, std::ios::binary);
  AKD_CHECK(is.good(), "cannot open wav file: ", path);
  char tag[4];
  is.read(tag, 4);
  AKD_CHECK(is.good() && std::memcmp(tag, "RIFF", 4) == 0,
            "not a RIFF file: ", path);
  read_pod<uint32_t>(is, path);  // riff size
  is.read(tag, 4);
  AKD_CHECK(is.good() && std::memcmp(tag, "WAVE", 4) == 0,
            "not a WAVE file: ", path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (is.read(tag, 4)) {
    const uint32_t size = read_pod<uint32_t>(is, path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_pod<uint16_t>(is, path);
      channels = read_pod<uint16_t>(is, path);
      rate = read_pod<uint32_t>(is, path);
      read_pod<uint32_t>(is, path);  // byte rate
      read_pod<uint16_t>(is, path);  // block align
      bits = read_pod<uint16_t>(is, path);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      is.read(data.data(), size);
      AKD_CHECK(is.good(), "truncated data chunk: ", path);
      have_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
    if (have_fmt && have_data) break;
  }
  AKD_CHECK(have_fmt && have_data, "missing fmt/data chunk: ", path);
  AKD_CHECK(channels >= 1, "wav with zero channels: ", path);
  AKD_CHECK(rate > 0, "wav with zero sample rate: ", path);

  Wave out;
  if (format == 1 && bits == 16) {
    const size_t frames = data.size() / (2 * channels);
    out.resize(frames);
    const int16_t* p = reinterpret_cast<const int16_t*>(data.data());
    for (size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (uint16_t c = 0; c < channels; ++c)
        acc += static_cast<double>(p[i * channels + c]) / 32768.0;
      out[i] = acc / channels;
    }
  } else if (format == 3 && bits == 32) {
    const size_t frames = data.size() / (4 * channels);
    out.resize(frames);
    const float* p = reinterpret_cast<const float*>(data.data());
    for (size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (uint16_t c = 0; c < channels; ++c)
        acc += static_cast<double>(p[i * channels + c]);
      out[i] = acc / channels;
    }
  } else {
    throw Error(str("unsupported wav format (format=", format, ", bits=", bits,
                    "): ", path));
  }
  if (sample_rate) *sample_rate = static_cast<int>(rate);
  return out;
}

void write_wav(const std::string& path, const Wave& wave, int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  AKD_CHECK(os.good(), "cannot open wav for writing: ", path);
  const uint32_t data_size = static_cast<uint32_t>(wave.size() * 2);
  os.write("RIFF", 4);
  write_pod<uint32_t>(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_pod<uint32_t>(os, 16);
  write_pod<uint16_t>(os, 1);  // PCM
  write_pod<uint16_t>(os, 1);  // mono
  write_pod<uint32_t>(os, static_cast<uint32_t>(sample_rate));
  write_pod<uint32_t>(os, static_cast<uint32_t>(sample_rate * 2));
  write_pod<uint16_t>(os, 2);
  write_pod<uint16_t>(os, 16);
  os.write("data", 4);
  write_pod<uint32_t>(os, data_size);
  for (double s : wave) {
    const double clamped = std::max(-1.0, std::min(1.0, s));
    const int16_t v = static_cast<int16_t>(std::lround(clamped * 32767.0));
    write_pod<int16_t>(os, v);
  }
  AKD_CHECK(os.good(), "wav write failed: ", path);
}

}  // namespace akd
