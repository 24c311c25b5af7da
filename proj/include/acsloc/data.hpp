#pragma once

// Synthetic two-stream dataset with planted action / context / background
// structure, the .f32 feature-file format, and the JSON dataset manifest.
//
// Feature file layout (one file per stream):
//   bytes 0..3   magic "ACSF"
//   bytes 4..7   uint32 version (1)
//   bytes 8..11  uint32 T (snippets)
//   bytes 12..15 uint32 D (feature dim)
//   then T*D little-endian IEEE-754 float32, row-major T x D (snippet-major).
// All header integers are little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "acsloc/evaluation.hpp"
#include "acsloc/model.hpp"
#include "acsloc/numcore.hpp"

namespace acsloc {

namespace fs = std::filesystem;

struct IoError : Error {
  using Error::Error;
};
struct BadMagicError : IoError {
  using IoError::IoError;
};
struct TruncatedError : IoError {
  using IoError::IoError;
};
struct FeatureShapeError : IoError {
  using IoError::IoError;
};
struct MissingFileError : IoError {
  using IoError::IoError;
};
struct SchemaError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct GenerationError : Error {
  using Error::Error;
};

inline constexpr std::array<char, 4> kFeatureMagic{'A', 'C', 'S', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

struct FeatureHeader {
  std::uint32_t version = kFeatureVersion;
  std::uint32_t length = 0;  // T
  std::uint32_t dim = 0;     // D
};

/// Writes a D x T tensor as a T x D float32 file.
inline void write_features(const fs::path& path, const Tensor2D& features) {
  const std::size_t D = features.rows();
  const std::size_t T = features.cols();
  std::string buf(kFeatureMagic.begin(), kFeatureMagic.end());
  buf.reserve(kFeatureHeaderBytes + 4 * D * T);
  detail::put_u32(buf, kFeatureVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(T));
  detail::put_u32(buf, static_cast<std::uint32_t>(D));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const double v = features(d, t);
      if (!std::isfinite(v)) throw NumericError("write_features: non-finite value");
      detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  detail::write_file(path, buf);
}

inline FeatureHeader parse_feature_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw TruncatedError(path.string() + ": truncated header, expected " +
                         std::to_string(kFeatureHeaderBytes) + " bytes, got " +
                         std::to_string(bytes.size()));
  }
  if (!std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin())) {
    throw BadMagicError(path.string() + ": bad magic, not an ACSF feature file");
  }
  FeatureHeader h{detail::get_u32(bytes, 4), detail::get_u32(bytes, 8), detail::get_u32(bytes, 12)};
  if (h.version != kFeatureVersion) {
    throw BadMagicError(path.string() + ": unsupported version " + std::to_string(h.version));
  }
  return h;
}

inline FeatureHeader read_feature_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("missing feature file " + path.string());
  std::string head(kFeatureHeaderBytes, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return parse_feature_header(head, path);
}

/// Reads a feature file back into a D x T tensor. Expected dimensions, when
/// given, must match the header.
inline Tensor2D read_features(const fs::path& path, std::optional<std::size_t> expected_t = {},
                              std::optional<std::size_t> expected_d = {}) {
  const std::string bytes = detail::read_file(path);
  const FeatureHeader h = parse_feature_header(bytes, path);
  if ((expected_t && *expected_t != h.length) || (expected_d && *expected_d != h.dim)) {
    throw FeatureShapeError(path.string() + ": header says T=" + std::to_string(h.length) +
                            " D=" + std::to_string(h.dim) + ", manifest expects T=" +
                            (expected_t ? std::to_string(*expected_t) : "?") +
                            " D=" + (expected_d ? std::to_string(*expected_d) : "?"));
  }
  const std::size_t T = h.length, D = h.dim;
  const std::size_t want = kFeatureHeaderBytes + 4 * T * D;
  if (bytes.size() != want) {
    throw TruncatedError(path.string() + ": expected " + std::to_string(want) + " bytes, got " +
                         std::to_string(bytes.size()));
  }
  Tensor2D out(D, T);
  std::size_t pos = kFeatureHeaderBytes;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d, pos += 4) {
      out(d, t) = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, pos)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

enum class SnippetRole : char { Background = 'B', Context = 'C', Action = 'A' };

struct VideoRecord {
  std::string video_id;
  std::string split;  // "train" or "test"
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<int> labels;
  std::vector<GroundTruthSegment> segments;
  std::string roles;  // optional, one of B/C/A per snippet
  std::string rgb_path;
  std::string flow_path;

  bool operator==(const VideoRecord&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<VideoRecord> videos;
  fs::path base_dir;  // directory the relative feature paths resolve against

  std::vector<const VideoRecord*> split(const std::string& name) const {
    std::vector<const VideoRecord*> out;
    for (const auto& v : videos) {
      if (v.split == name) out.push_back(&v);
    }
    return out;
  }
  std::vector<GroundTruthSegment> ground_truth(const std::string& split_name) const {
    std::vector<GroundTruthSegment> out;
    for (const auto& v : videos) {
      if (v.split != split_name) continue;
      out.insert(out.end(), v.segments.begin(), v.segments.end());
    }
    return out;
  }
  bool operator==(const DatasetManifest& o) const {
    return version == o.version && num_classes == o.num_classes && feature_dim == o.feature_dim &&
           videos == o.videos;
  }
};

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["num_classes"] = m.num_classes;
  j["feature_dim"] = m.feature_dim;
  j["videos"] = nlohmann::ordered_json::array();
  for (const auto& v : m.videos) {
    nlohmann::ordered_json jv;
    jv["video_id"] = v.video_id;
    jv["split"] = v.split;
    jv["T"] = v.length;
    jv["D"] = v.dim;
    jv["labels"] = v.labels;
    jv["segments"] = nlohmann::ordered_json::array();
    for (const auto& s : v.segments) {
      jv["segments"].push_back({{"class", s.cls}, {"t_start", s.start}, {"t_end", s.end}});
    }
    if (!v.roles.empty()) jv["roles"] = v.roles;
    jv["rgb"] = v.rgb_path;
    jv["flow"] = v.flow_path;
    j["videos"].push_back(std::move(jv));
  }
  return j;
}

inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
  detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

namespace detail {

template <class T>
T require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Parses and validates a manifest. With `check_files`, every referenced
/// feature file must exist and its header must match the record.
inline DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir,
                                      bool check_files = true) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  m.base_dir = base_dir;
  m.version = detail::require<int>(j, "version", "manifest");
  if (m.version != 1) throw SchemaError("manifest: unsupported version " + std::to_string(m.version));
  m.num_classes = detail::require<std::size_t>(j, "num_classes", "manifest");
  m.feature_dim = detail::require<std::size_t>(j, "feature_dim", "manifest");
  if (m.num_classes < 1) throw SchemaError("manifest: num_classes must be >= 1");
  if (!j.contains("videos") || !j["videos"].is_array()) {
    throw SchemaError("manifest: 'videos' must be an array");
  }
  std::set<std::string> ids;
  for (const auto& jv : j["videos"]) {
    VideoRecord v;
    v.video_id = detail::require<std::string>(jv, "video_id", "video");
    const std::string where = "video '" + v.video_id + "'";
    v.split = detail::require<std::string>(jv, "split", where);
    v.length = detail::require<std::size_t>(jv, "T", where);
    v.dim = detail::require<std::size_t>(jv, "D", where);
    v.labels = detail::require<std::vector<int>>(jv, "labels", where);
    v.rgb_path = detail::require<std::string>(jv, "rgb", where);
    v.flow_path = detail::require<std::string>(jv, "flow", where);
    if (jv.contains("roles")) v.roles = detail::require<std::string>(jv, "roles", where);
    if (!jv.contains("segments") || !jv["segments"].is_array()) {
      throw SchemaError(where + ": 'segments' must be an array");
    }
    for (const auto& js : jv["segments"]) {
      GroundTruthSegment s;
      s.video_id = v.video_id;
      s.cls = detail::require<int>(js, "class", where + " segment");
      s.start = detail::require<std::size_t>(js, "t_start", where + " segment");
      s.end = detail::require<std::size_t>(js, "t_end", where + " segment");
      v.segments.push_back(s);
    }

    if (!ids.insert(v.video_id).second) throw ValidationError("duplicate video id '" + v.video_id + "'");
    if (v.split != "train" && v.split != "test") {
      throw ValidationError(where + ": split must be 'train' or 'test'");
    }
    if (v.length == 0) throw ValidationError(where + ": T = 0 videos cannot be loaded");
    if (v.dim != m.feature_dim) throw ValidationError(where + ": D differs from manifest feature_dim");
    if (v.labels.empty()) throw ValidationError(where + ": label has no action class");
    std::set<int> label_set;
    for (int c : v.labels) {
      if (c < 1 || static_cast<std::size_t>(c) > m.num_classes) {
        throw ValidationError(where + ": label class " + std::to_string(c) + " out of range");
      }
      label_set.insert(c);
    }
    std::set<int> gt_set;
    for (const auto& s : v.segments) {
      if (!(s.start < s.end) || s.end > v.length) {
        throw ValidationError(where + ": segment [" + std::to_string(s.start) + "," +
                              std::to_string(s.end) + ") outside [0," + std::to_string(v.length) +
                              ")");
      }
      if (!label_set.count(s.cls)) {
        throw ValidationError(where + ": label is missing GT class " + std::to_string(s.cls));
      }
      gt_set.insert(s.cls);
    }
    if (!v.segments.empty() && gt_set != label_set) {
      throw ValidationError(where + ": label lists a class with no GT segment");
    }
    if (!v.roles.empty() && v.roles.size() != v.length) {
      throw ValidationError(where + ": roles length differs from T");
    }
    if (check_files) {
      for (const auto& rel : {v.rgb_path, v.flow_path}) {
        const fs::path p = base_dir / rel;
        if (!fs::exists(p)) throw MissingFileError(where + ": missing feature file " + p.string());
        const auto h = read_feature_header(p);
        if (h.length != v.length || h.dim != v.dim) {
          throw FeatureShapeError(where + ": " + p.string() + " has T=" + std::to_string(h.length) +
                                  " D=" + std::to_string(h.dim));
        }
      }
    }
    m.videos.push_back(std::move(v));
  }
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path, bool check_files = true) {
  if (!fs::exists(path)) throw MissingFileError("missing manifest " + path.string());
  return parse_manifest(detail::read_file(path), path.parent_path(), check_files);
}

struct VideoData {
  const VideoRecord* record = nullptr;
  StreamFeatures features;
  VideoLabel label;
};

inline VideoData load_video(const DatasetManifest& m, const VideoRecord& v) {
  Tensor2D rgb = read_features(m.base_dir / v.rgb_path, v.length, v.dim);
  Tensor2D flow = read_features(m.base_dir / v.flow_path, v.length, v.dim);
  return {&v, make_stream_features(std::move(rgb), std::move(flow)),
          VideoLabel::from_classes(m.num_classes, v.labels)};
}

inline std::vector<VideoData> load_split(const DatasetManifest& m, const std::string& split) {
  std::vector<VideoData> out;
  for (const auto* v : m.split(split)) out.push_back(load_video(m, *v));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t feature_dim = 32;
  std::size_t train_videos = 200;
  std::size_t test_videos = 100;
  std::size_t t_min = 40;
  std::size_t t_max = 120;
  double action_scale = 1.0;
  double context_scale = 1.0;
  double background_scale = 1.0;
  double noise = 0.1;
  std::size_t context_min = 4;
  std::size_t context_max = 10;
  double background_fraction = 0.7;  // target fraction of non-action snippets
  double two_class_prob = 0.25;
  std::uint64_t seed = 42;

  void validate() const {
    if (num_classes < 1) throw ConfigError("synth: num_classes must be >= 1");
    if (feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
    if (t_min < 8 || t_max < t_min) throw ConfigError("synth: require 8 <= t_min <= t_max");
    if (!(noise > 0.0)) throw ConfigError("synth: noise must be > 0");
    if (context_min < 1 || context_max < context_min) {
      throw ConfigError("synth: require 1 <= context_min <= context_max");
    }
    if (!(background_fraction > 0.0 && background_fraction < 1.0)) {
      throw ConfigError("synth: background_fraction must lie in (0,1)");
    }
    if (!(two_class_prob >= 0.0 && two_class_prob <= 1.0)) {
      throw ConfigError("synth: two_class_prob must lie in [0,1]");
    }
  }
};

/// Unit-norm prototypes. Context snippets use the class context prototype
/// in rgb and the background prototype in flow.
struct SynthPrototypes {
  std::vector<std::vector<double>> action_rgb, action_flow, context_rgb;
  std::vector<double> background_rgb, background_flow;
};

inline std::vector<double> random_unit_vector(SplitMix64& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm <= 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline SynthPrototypes make_prototypes(const SynthSpec& spec) {
  SplitMix64 rng(mix_seed(spec.seed, hash_tag("prototypes")));
  SynthPrototypes p;
  for (std::size_t n = 0; n < spec.num_classes; ++n) {
    p.action_rgb.push_back(random_unit_vector(rng, spec.feature_dim));
    p.action_flow.push_back(random_unit_vector(rng, spec.feature_dim));
    p.context_rgb.push_back(random_unit_vector(rng, spec.feature_dim));
  }
  p.background_rgb = random_unit_vector(rng, spec.feature_dim);
  p.background_flow = random_unit_vector(rng, spec.feature_dim);
  return p;
}

struct SynthVideo {
  VideoRecord record;
  Tensor2D rgb, flow;  // D x T
};

namespace detail {

struct Instance {
  int cls;
  std::size_t left, action, right;
  std::size_t span() const { return left + action + right; }
};

}  // namespace detail

/// One synthetic video: 1-3 action instances of one or two classes, each
/// flanked by context, background elsewhere.
inline SynthVideo generate_video(const SynthSpec& spec, const SynthPrototypes& protos,
                                 const std::string& split, std::size_t index) {
  SplitMix64 rng(mix_seed(spec.seed, hash_tag(split) ^ (index * 0x9e3779b97f4a7c15ULL)));
  const auto T = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.t_min),
                                                          static_cast<std::int64_t>(spec.t_max)));
  std::vector<int> classes;
  classes.push_back(static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(spec.num_classes))));
  if (spec.num_classes > 1 && rng.uniform() < spec.two_class_prob) {
    int c2 = classes[0];
    while (c2 == classes[0]) {
      c2 = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(spec.num_classes)));
    }
    classes.push_back(c2);
  }
  std::size_t k = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(classes.size()), 3));
  const double jitter = rng.uniform(0.85, 1.15);
  const std::size_t action_total = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround((1.0 - spec.background_fraction) * T * jitter)));

  std::vector<double> shares;
  for (std::size_t i = 0; i < 3; ++i) shares.push_back(rng.uniform(0.6, 1.4));
  std::vector<std::size_t> flanks;
  for (std::size_t i = 0; i < 6; ++i) {
    flanks.push_back(static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(spec.context_min), static_cast<std::int64_t>(spec.context_max))));
  }
  std::vector<int> extra_cls;
  for (std::size_t i = 0; i < 3; ++i) {
    extra_cls.push_back(classes[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(classes.size()) - 1))]);
  }

  // Drop surplus instances first, then shorten the longest context flank,
  // until the layout fits.
  std::vector<detail::Instance> inst;
  for (;;) {
    inst.clear();
    double share_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) share_sum += shares[i];
    std::size_t used = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const int cls = i < classes.size() ? classes[i] : extra_cls[i];
      const auto len = std::max<std::size_t>(
          2, static_cast<std::size_t>(std::lround(action_total * shares[i] / share_sum)));
      inst.push_back({cls, flanks[2 * i], len, flanks[2 * i + 1]});
      used += inst.back().span();
    }
    if (used + (k - 1) <= T) break;
    if (k > classes.size()) {
      --k;
      continue;
    }
    const auto longest = std::max_element(flanks.begin(), flanks.begin() + static_cast<std::ptrdiff_t>(2 * k));
    if (*longest <= 1) {
      throw GenerationError("synthetic video " + split + "/" + std::to_string(index) + " (T=" +
                            std::to_string(T) + ") cannot fit its action instances");
    }
    --*longest;
  }

  std::size_t used = 0;
  for (const auto& in : inst) used += in.span();
  std::vector<std::size_t> gaps(k + 1, 0);
  for (std::size_t g = 1; g < k; ++g) gaps[g] = 1;
  for (std::size_t r = used + (k - 1); r < T; ++r) {
    gaps[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k)))] += 1;
  }

  SynthVideo out;
  VideoRecord& rec = out.record;
  char id[64];
  std::snprintf(id, sizeof(id), "%s_%04zu", split.c_str(), index);
  rec.video_id = id;
  rec.split = split;
  rec.length = T;
  rec.dim = spec.feature_dim;
  rec.labels = classes;
  std::sort(rec.labels.begin(), rec.labels.end());
  rec.roles.assign(T, static_cast<char>(SnippetRole::Background));
  std::vector<int> snippet_cls(T, 0);
  std::size_t t = gaps[0];
  for (std::size_t i = 0; i < k; ++i) {
    const auto& in = inst[i];
    for (std::size_t j = 0; j < in.left; ++j, ++t) {
      rec.roles[t] = static_cast<char>(SnippetRole::Context);
      snippet_cls[t] = in.cls;
    }
    rec.segments.push_back({rec.video_id, in.cls, t, t + in.action});
    for (std::size_t j = 0; j < in.action; ++j, ++t) {
      rec.roles[t] = static_cast<char>(SnippetRole::Action);
      snippet_cls[t] = in.cls;
    }
    for (std::size_t j = 0; j < in.right; ++j, ++t) {
      rec.roles[t] = static_cast<char>(SnippetRole::Context);
      snippet_cls[t] = in.cls;
    }
    t += gaps[i + 1];
  }

  const std::size_t D = spec.feature_dim;
  out.rgb = Tensor2D(D, T);
  out.flow = Tensor2D(D, T);
  for (std::size_t s = 0; s < T; ++s) {
    const std::vector<double>* prgb = &protos.background_rgb;
    const std::vector<double>* pflow = &protos.background_flow;
    double srgb = spec.background_scale, sflow = spec.background_scale;
    const auto c = static_cast<std::size_t>(std::max(snippet_cls[s], 1) - 1);
    if (rec.roles[s] == static_cast<char>(SnippetRole::Action)) {
      prgb = &protos.action_rgb[c];
      pflow = &protos.action_flow[c];
      srgb = sflow = spec.action_scale;
    } else if (rec.roles[s] == static_cast<char>(SnippetRole::Context)) {
      prgb = &protos.context_rgb[c];
      srgb = spec.context_scale;
    }
    for (std::size_t d = 0; d < D; ++d) out.rgb(d, s) = srgb * (*prgb)[d] + spec.noise * rng.normal();
    for (std::size_t d = 0; d < D; ++d) out.flow(d, s) = sflow * (*pflow)[d] + spec.noise * rng.normal();
  }
  return out;
}

struct SynthStats {
  std::size_t videos = 0;
  std::size_t instances = 0;
  std::size_t snippets = 0;
  std::size_t action_snippets = 0;
  std::size_t context_snippets = 0;
  std::size_t background_snippets = 0;

  double non_action_fraction() const {
    return snippets ? 1.0 - static_cast<double>(action_snippets) / snippets : 0.0;
  }
  double background_only_fraction() const {
    return snippets ? static_cast<double>(background_snippets) / snippets : 0.0;
  }
  double instances_per_video() const {
    return videos ? static_cast<double>(instances) / videos : 0.0;
  }
};

inline SynthStats manifest_stats(const DatasetManifest& m, const std::string& split = "") {
  SynthStats s;
  for (const auto& v : m.videos) {
    if (!split.empty() && v.split != split) continue;
    ++s.videos;
    s.instances += v.segments.size();
    s.snippets += v.length;
    for (char r : v.roles) {
      if (r == 'A') ++s.action_snippets;
      else if (r == 'C') ++s.context_snippets;
      else ++s.background_snippets;
    }
    if (v.roles.empty()) {
      for (const auto& g : v.segments) s.action_snippets += g.end - g.start;
      s.background_snippets += v.length;
    }
  }
  return s;
}

/// Generates both splits in memory.
inline std::vector<SynthVideo> generate_videos(const SynthSpec& spec) {
  spec.validate();
  const auto protos = make_prototypes(spec);
  std::vector<SynthVideo> out;
  for (std::size_t i = 0; i < spec.train_videos; ++i) out.push_back(generate_video(spec, protos, "train", i));
  for (std::size_t i = 0; i < spec.test_videos; ++i) out.push_back(generate_video(spec, protos, "test", i));
  return out;
}

/// Writes manifest.json and features/<id>.{rgb,flow}.f32 under `out_dir`.
inline DatasetManifest generate_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  auto videos = generate_videos(spec);
  DatasetManifest m;
  m.num_classes = spec.num_classes;
  m.feature_dim = spec.feature_dim;
  m.base_dir = out_dir;
  for (auto& v : videos) {
    v.record.rgb_path = "features/" + v.record.video_id + ".rgb.f32";
    v.record.flow_path = "features/" + v.record.video_id + ".flow.f32";
    write_features(out_dir / v.record.rgb_path, v.rgb);
    write_features(out_dir / v.record.flow_path, v.flow);
    m.videos.push_back(v.record);
  }
  write_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace acsloc
