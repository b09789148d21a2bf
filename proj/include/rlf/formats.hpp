#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "rlf/descriptor.hpp"
#include "rlf/error.hpp"
#include "rlf/eval.hpp"
#include "rlf/keypoints.hpp"
#include "rlf/spotting.hpp"
#include "rlf/synth.hpp"

// Text and binary interchange formats used by the command-line tool.
namespace rlf::io {

using json = nlohmann::ordered_json;

// ---- JSON lines ----------------------------------------------------------

inline json keypoint_json(const Keypoint& k) {
  return {{"x", k.x}, {"y", k.y}, {"kind", std::string(kind_name(k.kind))}, {"response", k.response}};
}

inline void write_keypoints_jsonl(std::ostream& os, std::span<const Keypoint> kps) {
  for (const Keypoint& k : kps) os << keypoint_json(k).dump() << '\n';
}

inline void write_descriptors_jsonl(std::ostream& os, std::span<const Keypoint> kps,
                                    std::span<const RlfDescriptor> descs) {
  if (kps.size() != descs.size()) throw InvalidInput("write_descriptors_jsonl: size mismatch");
  for (std::size_t i = 0; i < kps.size(); ++i) {
    json j{{"x", kps[i].x}, {"y", kps[i].y}, {"kind", std::string(kind_name(kps[i].kind))}};
    j["desc"] = descs[i].values;
    os << j.dump() << '\n';
  }
}

/// One ranked result as exchanged between `spot` and `evaluate`.
struct ResultRecord {
  std::string query_id;
  std::string page_id;
  BBox bbox;
  double score = 0.0;
};

inline void write_result_jsonl(std::ostream& os, const ResultRecord& r) {
  const json j{{"query_id", r.query_id}, {"page", r.page_id}, {"x", r.bbox.x}, {"y", r.bbox.y},
               {"w", r.bbox.w},          {"h", r.bbox.h},      {"score", r.score}};
  os << j.dump() << '\n';
}

namespace detail {

template <typename Fn>
void for_each_json_line(std::istream& is, const std::string& source, Fn&& fn) {
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(source + ": line " + std::to_string(number) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError(source + ": line " + std::to_string(number) + ": " + e.what());
    }
  }
}

inline BBox read_box(const json& j) {
  const BBox b{j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
  if (!b.valid()) throw InvalidInput("box needs positive width and height");
  return b;
}

}  // namespace detail

/// Parses result lines; a malformed line raises FormatError naming its number.
inline std::vector<ResultRecord> read_results_jsonl(std::istream& is, const std::string& source = "results") {
  std::vector<ResultRecord> out;
  detail::for_each_json_line(is, source, [&](const json& j) {
    out.push_back({j.at("query_id").get<std::string>(), j.at("page").get<std::string>(), detail::read_box(j),
                   j.at("score").get<double>()});
  });
  return out;
}

inline std::vector<GroundTruthEntry> read_ground_truth_jsonl(std::istream& is,
                                                             const std::string& source = "ground truth") {
  std::vector<GroundTruthEntry> out;
  detail::for_each_json_line(is, source, [&](const json& j) {
    out.push_back({j.at("page").get<std::string>(), detail::read_box(j), j.at("label").get<std::string>()});
  });
  return out;
}

inline void write_ground_truth_jsonl(std::ostream& os, std::span<const GroundTruthEntry> gts) {
  for (const auto& g : gts) {
    const json j{{"page", g.page_id}, {"x", g.bbox.x}, {"y", g.bbox.y}, {"w", g.bbox.w}, {"h", g.bbox.h}, {"label", g.label}};
    os << j.dump() << '\n';
  }
}

inline json report_json(const EvalReport& r) {
  json queries = json::array();
  for (const auto& q : r.per_query) {
    queries.push_back({{"query_id", q.query_id}, {"ap", q.ap ? json(*q.ap) : json(nullptr)}, {"relevant", q.relevant}});
  }
  return {{"mAP", r.mean_ap}, {"queries", queries}};
}

inline std::string report_table(const EvalReport& r) {
  std::size_t width = 8;
  for (const auto& q : r.per_query) width = std::max(width, q.query_id.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "query" << "  " << std::right << std::setw(8) << "AP"
     << "  " << std::setw(8) << "relevant" << '\n';
  for (const auto& q : r.per_query) {
    os << std::left << std::setw(static_cast<int>(width)) << q.query_id << "  " << std::right << std::setw(8);
    if (q.ap) {
      os << std::fixed << std::setprecision(4) << *q.ap;
    } else {
      os << "n/a";
    }
    os << "  " << std::setw(8) << q.relevant << '\n';
  }
  os << std::left << std::setw(static_cast<int>(width)) << "mAP" << "  " << std::right << std::setw(8) << std::fixed
     << std::setprecision(4) << r.mean_ap << '\n';
  return os.str();
}

// ---- binary helpers --------------------------------------------------------

namespace detail {

class LeWriter {
 public:
  explicit LeWriter(std::ostream& os) : os_(os) {}
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    os_.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
  }
  void bytes(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class LeReader {
 public:
  LeReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}
  template <typename T>
  T get() {
    std::array<unsigned char, sizeof(T)> b;
    if (!is_.read(reinterpret_cast<char*>(b.data()), sizeof(T))) throw FormatError(source_ + ": truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
  }
  void expect_magic(const char (&magic)[5]) {
    char m[4];
    if (!is_.read(m, 4) || std::memcmp(m, magic, 4) != 0) throw FormatError(source_ + ": bad magic");
  }

 private:
  std::istream& is_;
  std::string source_;
};

}  // namespace detail

inline constexpr std::uint32_t kDescriptorBinaryVersion = 1;

/// "RLFD", u32 version, u32 count, then count records of 32-bit floats.
inline void write_descriptor_binary(std::ostream& os, std::span<const RlfDescriptor> descs) {
  detail::LeWriter w(os);
  w.bytes("RLFD", 4);
  w.put<std::uint32_t>(kDescriptorBinaryVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(descs.size()));
  const std::size_t dim = descs.empty() ? 0 : descs.front().size();
  for (const auto& d : descs) {
    if (d.size() != dim) throw InvalidInput("write_descriptor_binary: mixed descriptor dimensions");
    for (double v : d.values) w.put<float>(static_cast<float>(v));
  }
}

inline std::vector<RlfDescriptor> read_descriptor_binary(std::istream& is, std::size_t dim = 32,
                                                         const std::string& source = "descriptors") {
  detail::LeReader r(is, source);
  r.expect_magic("RLFD");
  if (r.get<std::uint32_t>() != kDescriptorBinaryVersion) throw FormatError(source + ": unsupported version");
  const std::uint32_t count = r.get<std::uint32_t>();
  std::vector<RlfDescriptor> out(count);
  for (auto& d : out) {
    d.values.resize(dim);
    for (double& v : d.values) v = r.get<float>();
  }
  return out;
}

// ---- page index cache ------------------------------------------------------

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Canonical text of every setting that influences a page index.
inline std::string index_fingerprint(const SpotParams& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto& pp = p.preprocess;
  os << "pre " << pp.fine_factor << ' ' << pp.coarse_factor << ' ' << pp.mask_threshold << ' '
     << pp.sigma_fine.value_or(-1) << ' ' << pp.sigma_coarse.value_or(-1) << ' ' << pp.core_height.value_or(-1) << '\n';
  os << "det " << p.sigma_factor << ' ' << p.harris_kappa << ' ' << p.corner_threshold << ' ' << p.blob_threshold << ' '
     << p.saddle_threshold << ' ' << p.edge_threshold << '\n';
  const auto& d = p.descriptor;
  os << "desc " << d.lines << ' ' << d.rings << ' ' << d.r_min << ' ' << d.radius_factor << ' ' << d.interp_sigma;
  for (int k : d.frequencies) os << ' ' << k;
  os << '\n';
  return os.str();
}

inline constexpr std::uint32_t kIndexCacheVersion = 1;

/// "RLFI", u32 version, u64 key, u32 width, u32 height, f64 core height,
/// u32 count, u32 dim, count keypoint records (f64 x, f64 y, u8 kind,
/// f64 response), then the descriptor block as f64.
inline void write_page_index(std::ostream& os, const PageIndex& idx, std::uint64_t key) {
  detail::LeWriter w(os);
  w.bytes("RLFI", 4);
  w.put<std::uint32_t>(kIndexCacheVersion);
  w.put<std::uint64_t>(key);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.height));
  w.put<double>(idx.core_height);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(idx.keypoints.size()));
  const std::size_t dim = idx.descriptors.empty() ? 0 : idx.descriptors.front().size();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
  for (const Keypoint& k : idx.keypoints) {
    w.put<double>(k.x);
    w.put<double>(k.y);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(k.kind));
    w.put<double>(k.response);
  }
  for (const auto& d : idx.descriptors) {
    for (double v : d.values) w.put<double>(v);
  }
}

/// Returns nullopt when the stored key differs from `key`.
inline std::optional<PageIndex> read_page_index(std::istream& is, std::uint64_t key, std::string page_id,
                                                const std::string& source = "index cache") {
  detail::LeReader r(is, source);
  r.expect_magic("RLFI");
  if (r.get<std::uint32_t>() != kIndexCacheVersion) return std::nullopt;
  if (r.get<std::uint64_t>() != key) return std::nullopt;
  PageIndex idx;
  idx.page_id = std::move(page_id);
  idx.width = static_cast<int>(r.get<std::uint32_t>());
  idx.height = static_cast<int>(r.get<std::uint32_t>());
  idx.core_height = r.get<double>();
  const std::uint32_t count = r.get<std::uint32_t>();
  const std::uint32_t dim = r.get<std::uint32_t>();
  idx.keypoints.resize(count);
  for (Keypoint& k : idx.keypoints) {
    k.x = r.get<double>();
    k.y = r.get<double>();
    const auto kind = r.get<std::uint8_t>();
    if (kind >= kAllKinds.size()) throw FormatError(source + ": bad keypoint kind");
    k.kind = static_cast<KeypointKind>(kind);
    k.response = r.get<double>();
  }
  idx.descriptors.resize(count);
  for (auto& d : idx.descriptors) {
    d.values.resize(dim);
    for (double& v : d.values) v = r.get<double>();
  }
  idx.rebuild_grid();
  return idx;
}

/// Index for `page_path`, read from `cache_dir` when a matching entry exists
/// and written there otherwise. `cache_hit` reports which happened.
inline PageIndex cached_page_index(const std::filesystem::path& page_path, const GrayImage& page, std::string page_id,
                                   const SpotParams& params, const std::filesystem::path& cache_dir,
                                   bool* cache_hit = nullptr) {
  std::ifstream src(page_path, std::ios::binary);
  std::ostringstream bytes;
  bytes << src.rdbuf();
  const std::uint64_t key = fnv1a(index_fingerprint(params), fnv1a(bytes.str()));
  char name[32];
  std::snprintf(name, sizeof(name), "%016llx.rlfi", static_cast<unsigned long long>(key));
  const std::filesystem::path entry = cache_dir / name;
  if (std::ifstream in(entry, std::ios::binary); in) {
    try {
      if (auto idx = read_page_index(in, key, page_id, entry.string())) {
        if (cache_hit) *cache_hit = true;
        return std::move(*idx);
      }
    } catch (const FormatError&) {
      // stale or corrupt entry: rebuild below
    }
  }
  if (cache_hit) *cache_hit = false;
  PageIndex idx = build_page_index(page, std::move(page_id), params);
  std::filesystem::create_directories(cache_dir);
  const std::filesystem::path tmp = entry.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write index cache " + tmp.string());
    write_page_index(out, idx, key);
  }
  std::filesystem::rename(tmp, entry);
  return idx;
}

// ---- synthetic corpus spec ---------------------------------------------------

/// Reads a synthetic corpus description. Unknown keys are rejected so typos
/// do not silently fall back to defaults.
inline synth::SyntheticSpec synth_spec_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("synthetic spec must be a JSON object");
  synth::SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "page_width") s.page_width = value.get<int>();
      else if (key == "page_height") s.page_height = value.get<int>();
      else if (key == "pages") s.pages = value.get<int>();
      else if (key == "x_height") s.x_height = value.get<double>();
      else if (key == "distractors") s.distractors = value.get<int>();
      else if (key == "lexicon") s.lexicon = value.get<std::vector<std::string>>();
      else if (key == "scale_jitter") s.scale_jitter = value.get<double>();
      else if (key == "contrast_jitter") s.contrast_jitter = value.get<double>();
      else if (key == "noise_sigma") s.noise_sigma = value.get<double>();
      else if (key == "stains") s.stains = value.get<int>();
      else if (key == "background_gradient") s.background_gradient = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "planted") {
        for (const auto& p : value) s.planted.push_back({p.at("text").get<std::string>(), p.value("count", 1)});
      } else {
        throw FormatError("unknown synthetic spec key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError("synthetic spec key '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

inline synth::SyntheticSpec read_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read synthetic spec " + path.string());
  try {
    return synth_spec_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace rlf::io
