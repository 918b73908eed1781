// Copyright 2026 akd authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "akd/teachers.h"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace akd {

namespace fs = std::filesystem;
using nlohmann::json;

void TeacherSpec::validate() const {
  AKD_CHECK(framerate == 25.0 || framerate == 50.0,
            "teacher framerate must be 25 or 50, got ", framerate);
  AKD_CHECK(target_dim > 0, "teacher target_dim must be positive");
  if (source == Source::synthetic) {
    AKD_CHECK(n_layers >= 1, "synthetic teacher needs n_layers >= 1");
    AKD_CHECK(target_dim % 16 == 0,
              "synthetic teacher dim must be divisible by 16, got ", target_dim);
  } else {
    AKD_CHECK(!dump_dir.empty(), "dump teacher needs a directory");
  }
}

TeacherSpec TeacherSpec::parse(const std::string& text, const std::string& id,
                               uint64_t default_seed) {
  TeacherSpec s;
  s.id = id;
  s.seed = default_seed;
  if (text.rfind("dump:", 0) == 0) {
    s.source = Source::dump;
    s.dump_dir = text.substr(5);
    AKD_CHECK(!s.dump_dir.empty(), "dump teacher spec needs a directory: ", text);
    return s;
  }
  AKD_CHECK(text.rfind("synthetic:", 0) == 0,
            "teacher spec must start with 'synthetic:' or 'dump:', got ", text);
  std::string rest = text.substr(10);
  auto hash_pos = rest.find('#');
  if (hash_pos != std::string::npos) {
    s.seed = std::stoull(rest.substr(hash_pos + 1));
    rest = rest.substr(0, hash_pos);
  }
  auto at_pos = rest.find('@');
  if (at_pos != std::string::npos) {
    s.framerate = std::stod(rest.substr(at_pos + 1));
    rest = rest.substr(0, at_pos);
  }
  auto x_pos = rest.find('x');
  AKD_CHECK(x_pos != std::string::npos,
            "synthetic teacher spec must look like synthetic:LxD, got ", text);
  s.source = Source::synthetic;
  s.n_layers = std::stoi(rest.substr(0, x_pos));
  s.target_dim = std::stoi(rest.substr(x_pos + 1));
  s.validate();
  return s;
}

std::string TeacherSpec::describe() const {
  if (source == Source::dump) return str("dump:", dump_dir);
  return str("synthetic:", n_layers, "x", target_dim, "@", framerate, "#", seed);
}

Mat adapt_framerate(const Mat& seq) {
  AKD_CHECK(seq.rows() >= 2, "adapt_framerate: need at least 2 rows, got ",
            seq.rows());
  const Eigen::Index To = seq.rows() / 2;
  Mat out(To, seq.cols());
  for (Eigen::Index i = 0; i < To; ++i)
    out.row(i) = 0.5 * (seq.row(2 * i) + seq.row(2 * i + 1));
  return out;
}

namespace {

void check_rates(double teacher_rate, double student_rate) {
  AKD_CHECK(student_rate == 50.0, "unsupported student framerate ",
            student_rate);
  AKD_CHECK(teacher_rate == 25.0 || teacher_rate == 50.0,
            "unsupported teacher framerate ", teacher_rate);
}

}  // namespace

LayerTapSet align_student_to_teacher(const LayerTapSet& student,
                                     double teacher_rate,
                                     double student_rate) {
  check_rates(teacher_rate, student_rate);
  if (teacher_rate == student_rate) return student;
  LayerTapSet out;
  for (const auto& [l, m] : student.taps) out.taps[l] = adapt_framerate(m);
  if (student.final.size() > 0) out.final = adapt_framerate(student.final);
  return out;
}

ad::Var align_tap(const ad::Var& tap, double teacher_rate,
                  double student_rate) {
  check_rates(teacher_rate, student_rate);
  if (teacher_rate == student_rate) return tap;
  return ad::mean_pool_rows2(tap);
}

namespace {

EncoderConfig synthetic_encoder_config(const TeacherSpec& spec) {
  EncoderConfig c;
  c.d_model = spec.target_dim;
  c.n_layers = spec.n_layers;
  c.n_heads = 4;
  AKD_CHECK(spec.target_dim % c.n_heads == 0,
            "synthetic teacher dim must be divisible by ", c.n_heads);
  c.dropout = 0.0;
  c.init_std = spec.init_std;
  c.rel_pos_max_distance = 160;
  return c;
}

}  // namespace

Teacher::Teacher(const TeacherSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.source == TeacherSpec::Source::synthetic) {
    Rng rng(splitmix64(spec_.seed ^ fnv1a("teacher")));
    embed_ = FrameEmbed(params_, "embed", 128, spec_.target_dim, rng,
                        spec_.init_std);
    encoder_ = Encoder(params_, "enc", synthetic_encoder_config(spec_), rng);
    params_.freeze();
    return;
  }
  // dump source: load the index
  const fs::path index_path = fs::path(spec_.dump_dir) / "index.json";
  std::ifstream is(index_path);
  AKD_CHECK(is.good(), "cannot open dump index: ", index_path.string());
  json j;
  is >> j;
  AKD_CHECK(j.value("format", "") == "usad-dump",
            "not a teacher dump index: ", index_path.string());
  spec_.framerate = j.at("framerate").get<double>();
  spec_.target_dim = j.at("target_dim").get<int>();
  spec_.n_layers = j.at("n_layers").get<int>();
  dump_layers_ = j.at("layers").get<std::vector<int>>();
  for (auto& [id, rel] : j.at("clips").items())
    dump_files_[id] = (fs::path(spec_.dump_dir) / rel.get<std::string>()).string();
  std::ifstream raw(index_path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(raw)),
                    std::istreambuf_iterator<char>());
  dump_hash_ = fnv1a(bytes);
}

Eigen::Index Teacher::expected_frames(Eigen::Index mel_frames) const {
  Eigen::Index t = (mel_frames + 1) / 2;  // stride-2 frame extractor
  if (spec_.framerate == 25.0) t /= 2;
  return t;
}

TeacherTargets Teacher::compute(const std::string& clip_id,
                                const MelFrames* mel,
                                const std::vector<int>& layers) const {
  for (int l : layers)
    AKD_CHECK(l >= 1 && l <= spec_.n_layers, "teacher layer ", l,
              " out of range [1, ", spec_.n_layers, "]");
  if (spec_.source == TeacherSpec::Source::synthetic) {
    AKD_CHECK(mel != nullptr, "synthetic teacher needs mel input (clip ",
              clip_id, ")");
    AKD_CHECK(!mel->norm_applied,
              "synthetic teacher expects raw mel; it standardizes internally");
    // Per-clip standardization keeps the teacher a fixed function of audio.
    NormStats st;
    st.mean = mel->data.mean();
    st.std_dev = std::sqrt((mel->data.array() - st.mean).square().mean());
    if (st.std_dev <= 0.0) st.std_dev = 1.0;
    st.source = "clip";
    MelFrames normed = normalize(*mel, st);
    FeatureSequence feat = embed_.apply(normed);
    Mat tokens = feat.data;
    if (spec_.framerate == 25.0) tokens = adapt_framerate(tokens);
    LayerTapSet taps = encoder_.encode(tokens, layers);
    TeacherTargets out;
    out.framerate = spec_.framerate;
    for (int l : layers) out.layers.emplace_back(l, taps.taps.at(l));
    return out;
  }
  // dump source
  auto it = dump_files_.find(clip_id);
  AKD_CHECK(it != dump_files_.end(), "no dump entry for clip '", clip_id, "'");
  FeatData fd = read_usadfeat(it->second);
  AKD_CHECK(fd.dims.size() == 3, "teacher dump for clip '", clip_id,
            "' must be [layers x T x D]");
  AKD_CHECK(fd.dims[0] == dump_layers_.size(), "dump layer count mismatch for '",
            clip_id, "'");
  AKD_CHECK(static_cast<int>(fd.dims[2]) == spec_.target_dim,
            "dump dim mismatch for '", clip_id, "': D=", fd.dims[2],
            " expected ", spec_.target_dim);
  TeacherTargets out;
  out.framerate = fd.framerate;
  for (int l : layers) {
    auto pos = std::find(dump_layers_.begin(), dump_layers_.end(), l);
    AKD_CHECK(pos != dump_layers_.end(), "layer ", l,
              " was not dumped for clip '", clip_id, "'");
    out.layers.emplace_back(
        l, fd.slice2d(static_cast<uint64_t>(pos - dump_layers_.begin())));
  }
  return out;
}

TeacherTargets Teacher::targets(const std::string& clip_id,
                                const MelFrames* mel,
                                const std::vector<int>& layers) const {
  if (!cache_enabled_) return compute(clip_id, mel, layers);
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = cache_.find(clip_id);
    if (it != cache_.end()) {
      bool same = it->second->layers.size() == layers.size();
      for (size_t i = 0; same && i < layers.size(); ++i)
        same = it->second->layers[i].first == layers[i];
      if (same) return *it->second;
    }
  }
  auto computed = std::make_shared<const TeacherTargets>(
      compute(clip_id, mel, layers));
  std::lock_guard<std::mutex> lock(cache_mu_);
  cache_[clip_id] = computed;
  return *computed;
}

uint64_t Teacher::param_hash() const {
  if (spec_.source == TeacherSpec::Source::synthetic)
    return params_.content_hash();
  return dump_hash_;
}

void write_teacher_clip(const std::string& path, const TeacherTargets& t,
                        FeatDtype dtype) {
  AKD_CHECK(!t.layers.empty(), "no layers to write");
  const Eigen::Index T = t.layers[0].second.rows();
  const Eigen::Index D = t.layers[0].second.cols();
  FeatData fd;
  fd.dims = {t.layers.size(), static_cast<uint64_t>(T),
             static_cast<uint64_t>(D)};
  fd.framerate = t.framerate;
  fd.dtype = dtype;
  fd.payload.reserve(fd.count());
  for (const auto& [l, m] : t.layers) {
    AKD_CHECK(m.rows() == T && m.cols() == D,
              "all layers must share T and D in a dump");
    fd.payload.insert(fd.payload.end(), m.data(), m.data() + m.size());
  }
  write_usadfeat(path, fd);
}

void write_dump_index(const std::string& dir, const TeacherSpec& spec,
                      const std::vector<int>& layers,
                      const std::map<std::string, std::string>& clip_files) {
  json j;
  j["format"] = "usad-dump";
  j["version"] = 1;
  j["framerate"] = spec.framerate;
  j["target_dim"] = spec.target_dim;
  j["n_layers"] = spec.n_layers;
  j["layers"] = layers;
  j["clips"] = json::object();
  for (const auto& [id, rel] : clip_files) j["clips"][id] = rel;
  std::ofstream os(fs::path(dir) / "index.json");
  AKD_CHECK(os.good(), "cannot write dump index in ", dir);
  os << j.dump(2) << "\n";
}

}  // namespace akd
