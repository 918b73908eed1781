// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/checkpoint.h"

#include <cstring>
#include <fstream>

namespace akd {

namespace {

constexpr char kMagic[8] = {'A', 'K', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  AKD_CHECK(is.good(), "truncated checkpoint: ", path);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, const std::string& path) {
  const uint64_t n = read_pod<uint64_t>(is, path);
  AKD_CHECK(n < (1ULL << 30), "implausible string length in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  AKD_CHECK(is.good(), "truncated checkpoint: ", path);
  return s;
}

bool is_optimizer_tensor(const std::string& name) {
  return name.size() > 7 && (name.rfind(".adam_m") == name.size() - 7 ||
                             name.rfind(".adam_v") == name.size() - 7);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  AKD_CHECK(os.good(), "cannot write checkpoint: ", path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, 1);  // version
  write_string(os, ckpt.config_json);
  write_pod<uint64_t>(os, ckpt.config_hash);
  write_pod<int64_t>(os, ckpt.step);
  write_pod<int64_t>(os, ckpt.epoch);
  write_pod<int64_t>(os, ckpt.batch_idx);
  write_pod<double>(os, ckpt.ema_loss);
  write_pod<double>(os, ckpt.initial_ema);
  write_pod<double>(os, ckpt.flops_cum);
  write_string(os, ckpt.rng_state);
  write_pod<uint64_t>(os, ckpt.tensors.size());
  for (const auto& [name, m] : ckpt.tensors) {
    write_string(os, name);
    write_pod<uint32_t>(os, 2);  // dtype: f64
    write_pod<uint64_t>(os, static_cast<uint64_t>(m.rows()));
    write_pod<uint64_t>(os, static_cast<uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  AKD_CHECK(os.good(), "checkpoint write failed: ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  AKD_CHECK(is.good(), "cannot open checkpoint: ", path);
  char magic[8];
  is.read(magic, sizeof(magic));
  AKD_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            "bad checkpoint magic: ", path);
  const uint32_t version = read_pod<uint32_t>(is, path);
  AKD_CHECK(version == 1, "unsupported checkpoint version ", version);
  Checkpoint ckpt;
  ckpt.config_json = read_string(is, path);
  ckpt.config_hash = read_pod<uint64_t>(is, path);
  ckpt.step = read_pod<int64_t>(is, path);
  ckpt.epoch = read_pod<int64_t>(is, path);
  ckpt.batch_idx = read_pod<int64_t>(is, path);
  ckpt.ema_loss = read_pod<double>(is, path);
  ckpt.initial_ema = read_pod<double>(is, path);
  ckpt.flops_cum = read_pod<double>(is, path);
  ckpt.rng_state = read_string(is, path);
  const uint64_t n = read_pod<uint64_t>(is, path);
  AKD_CHECK(n < (1ULL << 24), "implausible tensor count in checkpoint");
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(is, path);
    const uint32_t dtype = read_pod<uint32_t>(is, path);
    AKD_CHECK(dtype == 2, "unsupported tensor dtype ", dtype, " in ", path);
    const uint64_t rows = read_pod<uint64_t>(is, path);
    const uint64_t cols = read_pod<uint64_t>(is, path);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    AKD_CHECK(is.good(), "truncated tensor payload in ", path);
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

Checkpoint average_checkpoints(const std::vector<std::string>& paths) {
  AKD_CHECK(!paths.empty(), "average_checkpoints: need at least one path");
  Checkpoint acc = load_checkpoint(paths[0]);
  // drop optimizer state from the result
  std::vector<std::pair<std::string, Mat>> model;
  for (auto& [name, m] : acc.tensors)
    if (!is_optimizer_tensor(name)) model.emplace_back(name, m);
  acc.tensors = std::move(model);

  for (size_t i = 1; i < paths.size(); ++i) {
    Checkpoint c = load_checkpoint(paths[i]);
    AKD_CHECK(c.config_hash == acc.config_hash,
              "average_checkpoints: config mismatch between ", paths[0],
              " and ", paths[i]);
    acc.step = std::max(acc.step, c.step);
    for (auto& [name, m] : acc.tensors) {
      const Mat* other = c.find(name);
      AKD_CHECK(other != nullptr, "average_checkpoints: tensor ", name,
                " missing in ", paths[i]);
      AKD_CHECK(other->rows() == m.rows() && other->cols() == m.cols(),
                "average_checkpoints: shape mismatch for ", name);
      m += *other;
    }
  }
  const double inv = 1.0 / static_cast<double>(paths.size());
  for (auto& [name, m] : acc.tensors) m *= inv;
  acc.rng_state.clear();
  return acc;
}

}  // namespace akd
