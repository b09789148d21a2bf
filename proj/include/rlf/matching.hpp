#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "rlf/descriptor.hpp"
#include "rlf/error.hpp"
#include "rlf/image.hpp"
#include "rlf/keypoints.hpp"

namespace rlf {

struct Correspondence {
  std::size_t query_index = 0;
  std::size_t target_index = 0;
  Keypoint query_kp;
  Keypoint target_kp;
  double distance = 0.0;
};

/// A vertical strip of the query word. Keypoints are referenced by index
/// into the query's keypoint array.
struct QueryPart {
  int index = 0;
  double x_begin = 0.0;
  double x_end = 0.0;
  std::vector<std::size_t> keypoints;
};

struct PreconditionerParams {
  double bin_width = 10.0;
  double inlier_radius = 20.0;
  int min_inliers = 3;

  void validate() const {
    require_param(bin_width > 0.0, "bin_width must be > 0");
    require_param(inlier_radius >= bin_width, "inlier_radius must be >= bin_width");
    require_param(min_inliers >= 1, "min_inliers must be >= 1");
  }

  static PreconditionerParams for_core_height(double core_height) {
    require_param(core_height > 0.0, "core height must be > 0");
    return {0.5 * core_height, core_height, 3};
  }
};

inline int part_count(double query_width, double core_height, double part_width_factor = 2.5, int max_parts = 4) {
  require_param(query_width > 0.0 && core_height > 0.0, "part_count: width and core height must be > 0");
  require_param(part_width_factor > 0.0 && max_parts >= 1, "part_count: invalid partition settings");
  const double raw = std::round(query_width / (part_width_factor * core_height));
  return static_cast<int>(std::clamp(raw, 1.0, static_cast<double>(max_parts)));
}

/// Splits [x_origin, x_origin + query_width) into equal-width strips, the
/// count growing with word length, and assigns each keypoint to the strip
/// holding its x coordinate.
inline std::vector<QueryPart> partition_query(std::span<const Keypoint> keypoints, double query_width,
                                              double core_height, double x_origin = 0.0,
                                              double part_width_factor = 2.5, int max_parts = 4) {
  const int count = part_count(query_width, core_height, part_width_factor, max_parts);
  const double strip = query_width / count;
  std::vector<QueryPart> parts(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    parts[i].index = i;
    parts[i].x_begin = x_origin + i * strip;
    parts[i].x_end = x_origin + (i + 1) * strip;
  }
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const int slot = static_cast<int>(std::floor((keypoints[k].x - x_origin) / strip));
    parts[std::clamp(slot, 0, count - 1)].keypoints.push_back(k);
  }
  return parts;
}

namespace detail {

// Nearest and second-nearest target of the query's kind, ties broken by
// (y, x) of the target. `dist(qi, ti)` supplies descriptor distances.
template <typename Distance>
void nn_match_into(std::vector<Correspondence>& out, std::span<const Keypoint> query_kps,
                   std::span<const std::size_t> query_indices, std::span<const Keypoint> target_kps,
                   std::span<const std::size_t> target_indices, double ratio_threshold, Distance&& dist) {
  for (std::size_t qi : query_indices) {
    const Keypoint& q = query_kps[qi];
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double best = kInf, second = kInf;
    std::size_t best_t = 0;
    bool found = false;
    for (std::size_t ti : target_indices) {
      const Keypoint& t = target_kps[ti];
      if (t.kind != q.kind) continue;
      const double d = dist(qi, ti);
      const bool better =
          !found || d < best ||
          (d == best && std::tie(t.y, t.x) < std::tie(target_kps[best_t].y, target_kps[best_t].x));
      if (better) {
        if (found) second = std::min(second, best);
        best = d;
        best_t = ti;
        found = true;
      } else {
        second = std::min(second, d);
      }
    }
    if (!found) continue;
    const bool unique = second == kInf;
    if (unique || ratio_threshold >= 1.0 || best < ratio_threshold * second) {
      out.push_back({qi, best_t, q, target_kps[best_t], best});
    }
  }
}

}  // namespace detail

/// Kind-restricted nearest-neighbour matching with a ratio test. A single
/// candidate of the kind is accepted outright; ratio_threshold = 1 disables
/// the test.
inline std::vector<Correspondence> nn_match(std::span<const Keypoint> query_kps,
                                            std::span<const RlfDescriptor> query_descs,
                                            std::span<const Keypoint> target_kps,
                                            std::span<const RlfDescriptor> target_descs, double ratio_threshold) {
  require_param(ratio_threshold > 0.0 && ratio_threshold <= 1.0, "ratio_threshold must lie in (0,1]");
  if (query_kps.size() != query_descs.size() || target_kps.size() != target_descs.size()) {
    throw InvalidInput("nn_match: keypoint and descriptor counts differ");
  }
  std::vector<std::size_t> qi(query_kps.size()), ti(target_kps.size());
  for (std::size_t i = 0; i < qi.size(); ++i) qi[i] = i;
  for (std::size_t i = 0; i < ti.size(); ++i) ti[i] = i;
  std::vector<Correspondence> out;
  detail::nn_match_into(out, query_kps, qi, target_kps, ti, ratio_threshold, [&](std::size_t a, std::size_t b) {
    return descriptor_distance(query_descs[a], target_descs[b]);
  });
  return out;
}

struct PreconditionResult {
  std::vector<Correspondence> inliers;
  Point2 cluster_center;
};

inline Point2 displacement(const Correspondence& c, double query_scale = 1.0, Point2 query_offset = {}) {
  return {c.target_kp.x - (query_offset.x + query_scale * c.query_kp.x),
          c.target_kp.y - (query_offset.y + query_scale * c.query_kp.y)};
}

/// Deterministic displacement-cluster inlier filter. Displacements
/// target - (offset + scale * query) are binned on a 2D grid; the densest 3x3
/// block of bins defines the cluster centre (centroid of its members) and
/// every correspondence within inlier_radius of it is an inlier. Fewer than
/// min_inliers yields an empty inlier set.
inline PreconditionResult precondition_filter(std::span<const Correspondence> corrs, const PreconditionerParams& p,
                                              double query_scale = 1.0, Point2 query_offset = {}) {
  p.validate();
  PreconditionResult result;
  if (corrs.empty()) return result;

  using Bin = std::pair<long long, long long>;  // (row, col)
  std::vector<Point2> disp(corrs.size());
  std::vector<Bin> bin_of(corrs.size());
  std::map<Bin, int> histogram;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    disp[i] = displacement(corrs[i], query_scale, query_offset);
    bin_of[i] = {static_cast<long long>(std::floor(disp[i].y / p.bin_width)),
                 static_cast<long long>(std::floor(disp[i].x / p.bin_width))};
    ++histogram[bin_of[i]];
  }

  Bin best_bin{};
  int best_mass = -1;
  for (const auto& [bin, count] : histogram) {
    int mass = 0;
    for (long long dy = -1; dy <= 1; ++dy) {
      for (long long dx = -1; dx <= 1; ++dx) {
        auto it = histogram.find({bin.first + dy, bin.second + dx});
        if (it != histogram.end()) mass += it->second;
      }
    }
    if (mass > best_mass) {  // map order makes ties resolve to the smallest (row, col)
      best_mass = mass;
      best_bin = bin;
    }
  }

  double sx = 0.0, sy = 0.0;
  int members = 0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (std::abs(bin_of[i].first - best_bin.first) <= 1 && std::abs(bin_of[i].second - best_bin.second) <= 1) {
      sx += disp[i].x;
      sy += disp[i].y;
      ++members;
    }
  }
  result.cluster_center = {sx / members, sy / members};

  const double r2 = p.inlier_radius * p.inlier_radius;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const double dx = disp[i].x - result.cluster_center.x, dy = disp[i].y - result.cluster_center.y;
    if (dx * dx + dy * dy <= r2) result.inliers.push_back(corrs[i]);
  }
  if (static_cast<int>(result.inliers.size()) < p.min_inliers) result.inliers.clear();
  return result;
}

struct MatchParams {
  double ratio_threshold = 0.9;
  PreconditionerParams preconditioner;
  int min_inliers_per_part = 2;
  double consistency_factor = 1.5;  // allowed spread of part cluster centres, in inlier radii

  void validate() const {
    require_param(ratio_threshold > 0.0 && ratio_threshold <= 1.0, "ratio_threshold must lie in (0,1]");
    preconditioner.validate();
    require_param(min_inliers_per_part >= 1, "min_inliers_per_part must be >= 1");
    require_param(consistency_factor > 0.0, "consistency_factor must be > 0");
  }
};

/// Placement of the query inside a search window: a query point q maps to
/// origin + scale * (q - query_origin). Part strips are widened by slack on
/// each side.
struct WindowFrame {
  Point2 origin;
  Point2 query_origin;
  double scale = 1.0;
  double slack = 0.0;
};

struct PartMatch {
  int inliers = 0;
  Point2 center;
  std::vector<Correspondence> correspondences;
};

struct MatchOutcome {
  bool hit = false;
  int total_inliers = 0;
  std::vector<PartMatch> parts;
  std::vector<std::size_t> matched_targets;  // sorted, unique
  std::optional<BBox> extent;
};

/// Part-based matching of a query against the target keypoints of one
/// window (`window_targets` indexes `target_kps`). Each part is matched only
/// against targets inside its proportionally mapped strip. The window is a
/// hit when every part reaches min_inliers_per_part and the part cluster
/// centres agree within consistency_factor * inlier_radius.
template <typename Distance>
MatchOutcome match_parts(std::span<const QueryPart> parts, std::span<const Keypoint> query_kps,
                         std::span<const Keypoint> target_kps, std::span<const std::size_t> window_targets,
                         const WindowFrame& frame, const MatchParams& p, Distance&& dist) {
  MatchOutcome out;
  if (parts.empty() || window_targets.empty()) return out;

  std::vector<std::size_t> strip;
  bool all_parts_pass = true;
  for (const QueryPart& part : parts) {
    const double x0 = frame.origin.x + frame.scale * (part.x_begin - frame.query_origin.x) - frame.slack;
    const double x1 = frame.origin.x + frame.scale * (part.x_end - frame.query_origin.x) + frame.slack;
    strip.clear();
    for (std::size_t t : window_targets) {
      if (target_kps[t].x >= x0 && target_kps[t].x <= x1) strip.push_back(t);
    }
    std::vector<Correspondence> corrs;
    detail::nn_match_into(corrs, query_kps, part.keypoints, target_kps, strip, p.ratio_threshold, dist);
    PartMatch pm;
    if (!corrs.empty()) {
      const Point2 offset{frame.origin.x - frame.scale * frame.query_origin.x,
                          frame.origin.y - frame.scale * frame.query_origin.y};
      PreconditionResult pr = precondition_filter(corrs, p.preconditioner, frame.scale, offset);
      pm.center = pr.cluster_center;
      pm.inliers = static_cast<int>(pr.inliers.size());
      pm.correspondences = std::move(pr.inliers);
    }
    if (pm.inliers < p.min_inliers_per_part) all_parts_pass = false;
    out.total_inliers += pm.inliers;
    out.parts.push_back(std::move(pm));
  }

  bool consistent = true;
  const double limit = p.consistency_factor * p.preconditioner.inlier_radius;
  for (std::size_t i = 0; i < out.parts.size() && consistent; ++i) {
    for (std::size_t j = i + 1; j < out.parts.size(); ++j) {
      const double dx = out.parts[i].center.x - out.parts[j].center.x;
      const double dy = out.parts[i].center.y - out.parts[j].center.y;
      if (std::hypot(dx, dy) > limit) {
        consistent = false;
        break;
      }
    }
  }
  out.hit = all_parts_pass && consistent;

  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const PartMatch& pm : out.parts) {
    for (const Correspondence& c : pm.correspondences) {
      out.matched_targets.push_back(c.target_index);
      x0 = std::min(x0, c.target_kp.x);
      y0 = std::min(y0, c.target_kp.y);
      x1 = std::max(x1, c.target_kp.x);
      y1 = std::max(y1, c.target_kp.y);
    }
  }
  std::sort(out.matched_targets.begin(), out.matched_targets.end());
  out.matched_targets.erase(std::unique(out.matched_targets.begin(), out.matched_targets.end()),
                            out.matched_targets.end());
  if (!out.matched_targets.empty()) out.extent = bbox_from_extent(x0, y0, x1, y1);
  return out;
}

inline MatchOutcome match_parts(std::span<const QueryPart> parts, std::span<const Keypoint> query_kps,
                                std::span<const RlfDescriptor> query_descs, std::span<const Keypoint> target_kps,
                                std::span<const RlfDescriptor> target_descs,
                                std::span<const std::size_t> window_targets, const WindowFrame& frame,
                                const MatchParams& p) {
  p.validate();
  return match_parts(parts, query_kps, target_kps, window_targets, frame, p, [&](std::size_t a, std::size_t b) {
    return descriptor_distance(query_descs[a], target_descs[b]);
  });
}

}  // namespace rlf
