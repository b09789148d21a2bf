#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/spotting.hpp"

namespace rlf {

/// Run-wide settings: every pipeline tunable plus execution knobs.
struct RunConfig {
  SpotParams spot;
  int jobs = 1;

  void validate() const {
    spot.validate();
    require_param(jobs >= 1, "jobs must be >= 1");
  }
};

/// A settable key of RunConfig.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw InvalidParameter(std::string(key) + ": not a number: '" + t + "'");
  }
  return v;
}

inline int parse_int(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw InvalidParameter(std::string(key) + ": not an integer: '" + t + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename Member>
ConfigKey real_key(std::string name, std::string help, Member member) {
  return {name, std::move(help),
          [member, name](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_double(name, v); },
          [member](const RunConfig& c) { return format_double(std::invoke(member, c)); }};
}

template <typename Member>
ConfigKey int_key(std::string name, std::string help, Member member) {
  return {name, std::move(help),
          [member, name](RunConfig& c, std::string_view v) { std::invoke(member, c) = parse_int(name, v); },
          [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

// Optional reals: empty value or "auto" clears the override.
template <typename Member>
ConfigKey optional_key(std::string name, std::string help, Member member) {
  return {name, std::move(help),
          [member, name](RunConfig& c, std::string_view v) {
            const std::string t = trim(v);
            if (t.empty() || t == "auto") {
              std::invoke(member, c).reset();
            } else {
              std::invoke(member, c) = parse_double(name, t);
            }
          },
          [member](const RunConfig& c) {
            const auto& o = std::invoke(member, c);
            return o ? format_double(*o) : std::string("auto");
          }};
}

}  // namespace detail

/// Every key accepted in config files and as `--<key-with-dashes>` flags.
inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(real_key("fine_factor", "fine band sigma, core heights",
                         [](auto& c) -> auto& { return c.spot.preprocess.fine_factor; }));
    k.push_back(real_key("coarse_factor", "coarse band sigma, core heights",
                         [](auto& c) -> auto& { return c.spot.preprocess.coarse_factor; }));
    k.push_back(real_key("mask_threshold", "text mask threshold, fraction of coarse band maximum",
                         [](auto& c) -> auto& { return c.spot.preprocess.mask_threshold; }));
    k.push_back(optional_key("sigma_fine", "fixed fine band sigma in pixels",
                             [](auto& c) -> auto& { return c.spot.preprocess.sigma_fine; }));
    k.push_back(optional_key("sigma_coarse", "fixed coarse band sigma in pixels",
                             [](auto& c) -> auto& { return c.spot.preprocess.sigma_coarse; }));
    k.push_back(optional_key("core_height", "fixed core text height in pixels",
                             [](auto& c) -> auto& { return c.spot.preprocess.core_height; }));
    k.push_back(real_key("sigma_factor", "derivative sigma, core heights",
                         [](auto& c) -> auto& { return c.spot.sigma_factor; }));
    k.push_back(real_key("harris_kappa", "Harris trace weight", [](auto& c) -> auto& { return c.spot.harris_kappa; }));
    k.push_back(real_key("corner_threshold", "relative corner threshold",
                         [](auto& c) -> auto& { return c.spot.corner_threshold; }));
    k.push_back(real_key("blob_threshold", "relative blob threshold",
                         [](auto& c) -> auto& { return c.spot.blob_threshold; }));
    k.push_back(real_key("saddle_threshold", "relative saddle threshold",
                         [](auto& c) -> auto& { return c.spot.saddle_threshold; }));
    k.push_back(real_key("edge_threshold", "relative edge threshold",
                         [](auto& c) -> auto& { return c.spot.edge_threshold; }));
    k.push_back(int_key("lines", "descriptor radial lines", [](auto& c) -> auto& { return c.spot.descriptor.lines; }));
    k.push_back(int_key("rings", "descriptor rings", [](auto& c) -> auto& { return c.spot.descriptor.rings; }));
    k.push_back({"frequencies", "descriptor DFT frequencies, comma separated",
                 [](RunConfig& c, std::string_view v) {
                   std::vector<int> ks;
                   std::string item;
                   std::istringstream is{std::string(v)};
                   while (std::getline(is, item, ',')) ks.push_back(parse_int("frequencies", item));
                   if (ks.empty()) throw InvalidParameter("frequencies: empty list");
                   c.spot.descriptor.frequencies = std::move(ks);
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (int f : c.spot.descriptor.frequencies) s += (s.empty() ? "" : ",") + std::to_string(f);
                   return s;
                 }});
    k.push_back(real_key("r_min", "innermost ring radius, pixels",
                         [](auto& c) -> auto& { return c.spot.descriptor.r_min; }));
    k.push_back(real_key("descriptor_radius_factor", "outermost ring radius, core heights",
                         [](auto& c) -> auto& { return c.spot.descriptor.radius_factor; }));
    k.push_back(real_key("interp_sigma", "sampling interpolation sigma, pixels",
                         [](auto& c) -> auto& { return c.spot.descriptor.interp_sigma; }));
    k.push_back(real_key("ratio_threshold", "nearest-neighbour ratio test (1 disables)",
                         [](auto& c) -> auto& { return c.spot.ratio_threshold; }));
    k.push_back(real_key("bin_factor", "displacement histogram bin, core heights",
                         [](auto& c) -> auto& { return c.spot.bin_factor; }));
    k.push_back(real_key("inlier_radius_factor", "inlier radius, core heights",
                         [](auto& c) -> auto& { return c.spot.radius_factor; }));
    k.push_back(int_key("min_inliers", "minimum preconditioner inliers",
                        [](auto& c) -> auto& { return c.spot.min_inliers; }));
    k.push_back(int_key("min_inliers_per_part", "minimum inliers per query part",
                        [](auto& c) -> auto& { return c.spot.min_inliers_per_part; }));
    k.push_back(real_key("consistency_factor", "allowed part centre spread, inlier radii",
                         [](auto& c) -> auto& { return c.spot.consistency_factor; }));
    k.push_back(real_key("part_width_factor", "query part width, core heights",
                         [](auto& c) -> auto& { return c.spot.part_width_factor; }));
    k.push_back(int_key("max_parts", "upper bound on query parts", [](auto& c) -> auto& { return c.spot.max_parts; }));
    k.push_back(int_key("parts", "force this many query parts (0 = by width)",
                        [](auto& c) -> auto& { return c.spot.forced_parts; }));
    k.push_back(real_key("window_step", "sliding step, fraction of window size",
                         [](auto& c) -> auto& { return c.spot.window_step; }));
    k.push_back(real_key("strip_slack", "part strip widening, core heights",
                         [](auto& c) -> auto& { return c.spot.strip_slack; }));
    k.push_back(real_key("vertical_slack", "window vertical widening, core heights",
                         [](auto& c) -> auto& { return c.spot.vertical_slack; }));
    k.push_back(real_key("bbox_pad", "result box padding, core heights",
                         [](auto& c) -> auto& { return c.spot.bbox_pad; }));
    k.push_back(real_key("dedup_overlap", "overlap that marks a duplicate result",
                         [](auto& c) -> auto& { return c.spot.dedup_overlap; }));
    k.push_back(int_key("jobs", "worker threads", [](auto& c) -> auto& { return c.jobs; }));
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

inline void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const ConfigKey* k = find_config_key(key);
  if (k == nullptr) throw InvalidParameter("unknown setting '" + std::string(key) + "'");
  k->set(cfg, value);
}

/// Applies `key = value` lines; '#' starts a comment. Does not validate.
inline void apply_config_text(RunConfig& cfg, std::istream& is, const std::string& source = "config") {
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InvalidParameter(source + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      apply_setting(cfg, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const InvalidParameter& e) {
      throw InvalidParameter(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  apply_config_text(cfg, in, path.string());
}

/// Defaults, then the optional file, then explicit overrides in order; the
/// result is validated.
inline RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (file) apply_config_file(cfg, *file);
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

/// Current values as a config file.
inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace rlf
