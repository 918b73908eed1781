// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/datapipe.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace akd {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_valid_domain(const std::string& d) {
  return d == "speech" || d == "sound" || d == "music";
}

double MixtureSpec::domain_proportion(const std::string& domain) const {
  double p = 0.0;
  for (const auto& it : items)
    if (it.domain == domain) p += it.proportion;
  return p;
}

double Manifest::total_seconds() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.duration * e.weight;
  return s;
}

std::vector<double> segment_clip(double duration_seconds) {
  AKD_CHECK(duration_seconds > 0.0, "segment_clip: duration must be positive");
  constexpr double kSegment = 10.0;
  constexpr double kMin = 2.0;
  constexpr double kMax = 30.0;
  std::vector<double> out;
  double remaining = duration_seconds;
  while (remaining >= kSegment) {
    out.push_back(kSegment);
    remaining -= kSegment;
  }
  if (remaining >= kMin && remaining <= kMax) out.push_back(remaining);
  return out;
}

bool detect_silence(const Wave& wave) {
  constexpr size_t kFrame = 400;  // 25 ms at 16 kHz
  constexpr double kThreshold = 1e-3;  // -60 dBFS
  if (wave.empty()) return true;
  size_t quiet = 0, frames = 0;
  for (size_t off = 0; off < wave.size(); off += kFrame) {
    const size_t end = std::min(off + kFrame, wave.size());
    double acc = 0.0;
    for (size_t i = off; i < end; ++i) acc += wave[i] * wave[i];
    const double rms = std::sqrt(acc / static_cast<double>(end - off));
    ++frames;
    if (rms < kThreshold) ++quiet;
  }
  return static_cast<double>(quiet) >= 0.95 * static_cast<double>(frames);
}

Wave resample(const Wave& wave, int from_rate, int to_rate) {
  AKD_CHECK(from_rate > 0 && to_rate > 0, "unsupported resampling ratio ",
            from_rate, " -> ", to_rate);
  if (from_rate == to_rate) return wave;
  const size_t n_out = static_cast<size_t>(
      std::llround(static_cast<double>(wave.size()) * to_rate / from_rate));
  Wave out(n_out, 0.0);
  const double ratio = static_cast<double>(from_rate) / to_rate;
  // cutoff as a fraction of the input sample rate
  const double fc = 0.5 * std::min(1.0, static_cast<double>(to_rate) / from_rate);
  constexpr int kHalfTaps = 32;
  for (size_t n = 0; n < n_out; ++n) {
    const double center = static_cast<double>(n) * ratio;
    const long k0 = static_cast<long>(std::floor(center)) - kHalfTaps + 1;
    double acc = 0.0, wsum = 0.0;
    for (long k = k0; k < k0 + 2 * kHalfTaps; ++k) {
      const double x = center - static_cast<double>(k);
      const double window =
          0.5 + 0.5 * std::cos(M_PI * x / static_cast<double>(kHalfTaps));
      double tap;
      if (std::abs(x) < 1e-12) {
        tap = 2.0 * fc;
      } else {
        tap = std::sin(2.0 * M_PI * fc * x) / (M_PI * x);
      }
      tap *= window;
      wsum += tap;
      if (k >= 0 && k < static_cast<long>(wave.size()))
        acc += tap * wave[static_cast<size_t>(k)];
    }
    // normalizing by the full tap sum preserves DC exactly
    out[n] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

MixtureSpec mixture_from_counts(
    const std::vector<std::tuple<std::string, std::string, long long>>& rows,
    const std::map<std::string, int>& domain_factors) {
  AKD_CHECK(!rows.empty(), "mixture: empty manifest list");
  MixtureSpec spec;
  for (const auto& [name, domain, clips] : rows) {
    AKD_CHECK(is_valid_domain(domain), "mixture: bad domain ", domain);
    AKD_CHECK(clips >= 0, "mixture: negative clip count");
    int w = 1;
    auto it = domain_factors.find(domain);
    if (it != domain_factors.end()) w = it->second;
    AKD_CHECK(w >= 1, "mixture: factor for ", domain, " must be >= 1");
    MixtureSpec::Item item;
    item.name = name;
    item.domain = domain;
    item.clips = clips;
    item.weight = w;
    spec.items.push_back(item);
    spec.weighted_total += clips * w;
  }
  AKD_CHECK(spec.weighted_total > 0, "mixture: no clips");
  for (auto& it : spec.items)
    it.proportion = static_cast<double>(it.clips) * it.weight /
                    static_cast<double>(spec.weighted_total);
  double sum = 0.0;
  for (const auto& it : spec.items) sum += it.proportion;
  AKD_CHECK(std::abs(sum - 1.0) < 1e-9, "mixture proportions do not sum to 1");
  return spec;
}

Manifest build_mixture(const std::vector<Manifest>& manifests,
                       const std::map<std::string, int>& domain_factors) {
  AKD_CHECK(!manifests.empty(), "mixture: empty manifest list");
  std::vector<std::tuple<std::string, std::string, long long>> rows;
  for (size_t i = 0; i < manifests.size(); ++i) {
    AKD_CHECK(!manifests[i].entries.empty(), "mixture: manifest ", i,
              " is empty");
    std::map<std::string, long long> by_domain;
    for (const auto& e : manifests[i].entries) ++by_domain[e.domain];
    for (const auto& [domain, clips] : by_domain)
      rows.emplace_back(str("m", i, ":", domain), domain, clips);
  }
  Manifest merged;
  merged.mixture = mixture_from_counts(rows, domain_factors);
  for (const auto& m : manifests) {
    for (ManifestEntry e : m.entries) {
      auto it = domain_factors.find(e.domain);
      e.weight = it != domain_factors.end() ? it->second : 1;
      merged.entries.push_back(std::move(e));
    }
  }
  return merged;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path);
  AKD_CHECK(os.good(), "cannot write manifest: ", path);
  json header;
  header["format"] = "akd-manifest";
  header["version"] = 1;
  if (m.has_norm) {
    header["norm"] = {{"mean", m.norm.mean},
                      {"std", m.norm.std_dev},
                      {"source", m.norm.source}};
  }
  if (!m.mixture.items.empty()) {
    json items = json::array();
    for (const auto& it : m.mixture.items)
      items.push_back({{"name", it.name},
                       {"domain", it.domain},
                       {"clips", it.clips},
                       {"weight", it.weight},
                       {"proportion", it.proportion}});
    header["mixture"] = {{"items", items},
                         {"weighted_total", m.mixture.weighted_total}};
  }
  os << header.dump() << "\n";
  for (const auto& e : m.entries) {
    json j = {{"id", e.id},          {"path", e.path},
              {"domain", e.domain},  {"duration", e.duration},
              {"sample_rate", e.sample_rate}, {"weight", e.weight}};
    os << j.dump() << "\n";
  }
  AKD_CHECK(os.good(), "manifest write failed: ", path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  AKD_CHECK(is.good(), "cannot open manifest: ", path);
  std::string line;
  AKD_CHECK(static_cast<bool>(std::getline(is, line)), "empty manifest: ", path);
  json header = json::parse(line);
  AKD_CHECK(header.value("format", "") == "akd-manifest",
            "not a manifest file: ", path);
  Manifest m;
  if (header.contains("norm")) {
    m.has_norm = true;
    m.norm.mean = header["norm"].at("mean").get<double>();
    m.norm.std_dev = header["norm"].at("std").get<double>();
    m.norm.source = header["norm"].value("source", "");
  }
  if (header.contains("mixture")) {
    for (const auto& j : header["mixture"].at("items")) {
      MixtureSpec::Item it;
      it.name = j.at("name").get<std::string>();
      it.domain = j.at("domain").get<std::string>();
      it.clips = j.at("clips").get<long long>();
      it.weight = j.at("weight").get<int>();
      it.proportion = j.at("proportion").get<double>();
      m.mixture.items.push_back(it);
    }
    m.mixture.weighted_total =
        header["mixture"].at("weighted_total").get<long long>();
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.domain = j.at("domain").get<std::string>();
    e.duration = j.at("duration").get<double>();
    e.sample_rate = j.at("sample_rate").get<int>();
    e.weight = j.value("weight", 1);
    AKD_CHECK(is_valid_domain(e.domain), "bad domain in manifest: ", e.domain);
    AKD_CHECK(e.duration > 0.0 && e.weight >= 1, "bad manifest entry: ", e.id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest prepare_corpus(const std::vector<std::string>& input_dirs,
                        const std::string& domain,
                        const std::string& clips_dir) {
  AKD_CHECK(is_valid_domain(domain), "unknown domain: ", domain);
  std::vector<fs::path> files;
  for (const auto& dir : input_dirs) {
    AKD_CHECK(fs::exists(dir), "input directory does not exist: ", dir);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  AKD_CHECK(!files.empty(), "no audio found under the input directories");

  fs::create_directories(clips_dir);
  Manifest m;
  size_t file_idx = 0;
  for (const auto& file : files) {
    int rate = 0;
    Wave wave = read_wav(file.string(), &rate);
    if (rate != 16000) wave = resample(wave, rate, 16000);
    const double duration = static_cast<double>(wave.size()) / 16000.0;

    std::vector<std::pair<size_t, size_t>> spans;  // [begin, end) samples
    if (domain == "speech") {
      if (duration >= 2.0 && duration <= 30.0) spans.emplace_back(0, wave.size());
    } else {
      size_t off = 0;
      for (double seg : segment_clip(duration)) {
        const size_t n = static_cast<size_t>(std::llround(seg * 16000.0));
        spans.emplace_back(off, std::min(off + n, wave.size()));
        off += n;
      }
    }

    int seg_idx = 0;
    for (const auto& [begin, end] : spans) {
      Wave clip(wave.begin() + static_cast<long>(begin),
                wave.begin() + static_cast<long>(end));
      if (detect_silence(clip)) continue;
      ManifestEntry e;
      e.id = str(domain, file_idx, "_", seg_idx++);
      e.domain = domain;
      e.duration = static_cast<double>(clip.size()) / 16000.0;
      e.sample_rate = 16000;
      e.path = (fs::path(clips_dir) / (e.id + ".wav")).string();
      write_wav(e.path, clip, 16000);
      m.entries.push_back(std::move(e));
    }
    ++file_idx;
  }
  return m;
}

NormStats compute_corpus_norm(const Manifest& m) {
  AKD_CHECK(!m.entries.empty(), "cannot compute norm stats on empty manifest");
  double sum = 0.0, sumsq = 0.0;
  long long n = 0;
  for (const auto& e : m.entries) {
    int rate = 0;
    Wave wave = read_wav(e.path, &rate);
    MelFrames mel = compute_logmel(wave, rate);
    sum += mel.data.sum();
    sumsq += mel.data.array().square().sum();
    n += mel.data.size();
  }
  NormStats stats;
  stats.mean = sum / static_cast<double>(n);
  const double var = sumsq / static_cast<double>(n) - stats.mean * stats.mean;
  stats.std_dev = std::sqrt(std::max(var, 1e-12));
  stats.source = str("corpus:", m.entries.size(), "clips");
  return stats;
}

std::vector<std::vector<int>> batch_by_seconds(const Manifest& m,
                                               double budget_seconds,
                                               uint64_t seed) {
  AKD_CHECK(!m.entries.empty(), "batching: empty manifest");
  for (const auto& e : m.entries)
    AKD_CHECK(e.duration <= budget_seconds, "clip ", e.id, " (", e.duration,
              " s) exceeds the batch budget of ", budget_seconds, " s");
  std::vector<int> expanded;
  for (size_t i = 0; i < m.entries.size(); ++i)
    for (int w = 0; w < m.entries[i].weight; ++w)
      expanded.push_back(static_cast<int>(i));

  Rng rng = rng_for(seed, "batching");
  rng.shuffle(expanded);
  // duration buckets limit padding waste inside a batch
  std::stable_sort(expanded.begin(), expanded.end(), [&](int a, int b) {
    return std::lround(m.entries[a].duration) <
           std::lround(m.entries[b].duration);
  });

  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  double used = 0.0;
  for (int idx : expanded) {
    const double d = m.entries[idx].duration;
    if (used + d > budget_seconds && !current.empty()) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0.0;
    }
    current.push_back(idx);
    used += d;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  rng.shuffle(batches);
  return batches;
}

}  // namespace akd
