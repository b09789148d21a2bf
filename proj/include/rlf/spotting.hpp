#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "rlf/descriptor.hpp"
#include "rlf/error.hpp"
#include "rlf/image.hpp"
#include "rlf/keypoints.hpp"
#include "rlf/matching.hpp"
#include "rlf/preprocess.hpp"

namespace rlf {

/// Every tunable of the spotting pipeline. Scale-dependent quantities are
/// stored as factors of the core text height and resolved per image.
struct SpotParams {
  PreprocessOptions preprocess;

  // detector
  double sigma_factor = 0.1;  // sigma_d = sigma_factor * core height, sigma_i = 2 sigma_d
  double harris_kappa = 0.04;
  double corner_threshold = DetectorParams{}.corner_threshold;
  double blob_threshold = DetectorParams{}.blob_threshold;
  double saddle_threshold = DetectorParams{}.saddle_threshold;
  double edge_threshold = DetectorParams{}.edge_threshold;

  DescriptorParams descriptor;

  // matching
  double ratio_threshold = 0.9;
  double bin_factor = 0.5;     // histogram bin = bin_factor * core height
  double radius_factor = 1.0;  // inlier radius = radius_factor * core height
  int min_inliers = 3;
  int min_inliers_per_part = 2;
  double consistency_factor = 1.5;
  double part_width_factor = 2.5;
  int max_parts = 4;
  int forced_parts = 0;  // > 0 overrides the width-based part count

  // sliding window
  double window_step = 0.5;
  double strip_slack = 1.0;     // horizontal part slack, core heights
  double vertical_slack = 0.5;  // window vertical slack, core heights
  double bbox_pad = 0.5;        // candidate box padding, core heights
  double dedup_overlap = 0.5;   // drop candidates overlapping an accepted box by more than this

  void validate() const {
    preprocess.validate();
    require_param(sigma_factor > 0.0, "sigma_factor must be > 0");
    require_param(harris_kappa >= 0.0 && harris_kappa < 0.25, "harris_kappa must lie in [0, 0.25)");
    for (double t : {corner_threshold, blob_threshold, saddle_threshold, edge_threshold}) {
      require_param(t >= 0.0, "detector thresholds must be >= 0");
    }
    descriptor.validate();
    require_param(ratio_threshold > 0.0 && ratio_threshold <= 1.0, "ratio_threshold must lie in (0,1]");
    require_param(bin_factor > 0.0 && radius_factor >= bin_factor, "need radius_factor >= bin_factor > 0");
    require_param(min_inliers >= 1 && min_inliers_per_part >= 1, "inlier minimums must be >= 1");
    require_param(consistency_factor > 0.0, "consistency_factor must be > 0");
    require_param(part_width_factor > 0.0 && max_parts >= 1, "invalid part settings");
    require_param(forced_parts >= 0, "forced part count must be >= 0");
    require_param(window_step > 0.0 && window_step <= 1.0, "window_step must lie in (0,1]");
    require_param(strip_slack >= 0.0 && vertical_slack >= 0.0 && bbox_pad >= 0.0, "slack and padding must be >= 0");
    require_param(dedup_overlap > 0.0 && dedup_overlap <= 1.0, "dedup_overlap must lie in (0,1]");
  }

  DetectorParams detector_for(double core_height) const {
    DetectorParams d = DetectorParams::for_core_height(core_height, sigma_factor);
    d.harris_kappa = harris_kappa;
    d.corner_threshold = corner_threshold;
    d.blob_threshold = blob_threshold;
    d.saddle_threshold = saddle_threshold;
    d.edge_threshold = edge_threshold;
    return d;
  }

  MatchParams match_for(double core_height) const {
    MatchParams m;
    m.ratio_threshold = ratio_threshold;
    m.preconditioner = {bin_factor * core_height, radius_factor * core_height, min_inliers};
    m.min_inliers_per_part = min_inliers_per_part;
    m.consistency_factor = consistency_factor;
    return m;
  }
};

/// Uniform bucketing of keypoint indices.
class SpatialGrid {
 public:
  SpatialGrid() = default;

  SpatialGrid(std::span<const Keypoint> kps, int width, int height, double cell)
      : cell_(std::max(1.0, cell)),
        cols_(std::max(1, static_cast<int>(std::ceil(width / cell_)))),
        rows_(std::max(1, static_cast<int>(std::ceil(height / cell_)))),
        cells_(static_cast<std::size_t>(cols_) * rows_) {
    for (std::size_t i = 0; i < kps.size(); ++i) cells_[cell_index(kps[i].x, kps[i].y)].push_back(i);
  }

  /// Indices of keypoints inside [x0,x1] x [y0,y1], ascending.
  std::vector<std::size_t> query(std::span<const Keypoint> kps, double x0, double y0, double x1, double y1) const {
    std::vector<std::size_t> out;
    if (cells_.empty()) return out;
    const int c0 = std::clamp(static_cast<int>(std::floor(x0 / cell_)), 0, cols_ - 1);
    const int c1 = std::clamp(static_cast<int>(std::floor(x1 / cell_)), 0, cols_ - 1);
    const int r0 = std::clamp(static_cast<int>(std::floor(y0 / cell_)), 0, rows_ - 1);
    const int r1 = std::clamp(static_cast<int>(std::floor(y1 / cell_)), 0, rows_ - 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        for (std::size_t i : cells_[static_cast<std::size_t>(r) * cols_ + c]) {
          const Keypoint& k = kps[i];
          if (k.x >= x0 && k.x <= x1 && k.y >= y0 && k.y <= y1) out.push_back(i);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  double cell() const { return cell_; }
  std::size_t cell_count() const { return cells_.size(); }
  const std::vector<std::size_t>& cell_at(std::size_t i) const { return cells_[i]; }

 private:
  std::size_t cell_index(double x, double y) const {
    const int c = std::clamp(static_cast<int>(x / cell_), 0, cols_ - 1);
    const int r = std::clamp(static_cast<int>(y / cell_), 0, rows_ - 1);
    return static_cast<std::size_t>(r) * cols_ + c;
  }

  double cell_ = 1.0;
  int cols_ = 0;
  int rows_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

struct PageIndex {
  std::string page_id;
  int width = 0;
  int height = 0;
  double core_height = 0.0;
  std::vector<Keypoint> keypoints;
  std::vector<RlfDescriptor> descriptors;
  SpatialGrid grid;

  void rebuild_grid() { grid = SpatialGrid(keypoints, width, height, core_height > 0.0 ? core_height : 1.0); }
};

struct Query {
  GrayImage image;
  std::vector<Keypoint> keypoints;
  std::vector<RlfDescriptor> descriptors;
  std::vector<QueryPart> parts;
  double core_height = 0.0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  // keypoint extent
};

struct CandidateRegion {
  std::string page_id;
  BBox bbox;
  double score = 0.0;
  std::vector<std::size_t> matched;  // page keypoint indices consumed by this candidate
};

/// Keypoints and descriptors of a cleaned image at its core height.
struct Features {
  GrayImage cleaned;
  double core_height = 0.0;
  std::vector<Keypoint> keypoints;
  std::vector<RlfDescriptor> descriptors;
};

/// preprocess -> core height -> detect_all -> describe. Returns an empty
/// feature set when the image has no ink.
inline Features extract_features(const GrayImage& img, const SpotParams& params) {
  params.validate();
  if (img.empty()) throw InvalidInput("extract_features: empty image");
  Features f;
  PreparedImage prepared;
  try {
    prepared = prepare_image(img, params.preprocess);
  } catch (const NoTextError&) {
    return f;
  }
  f.cleaned = std::move(prepared.cleaned);
  f.core_height = prepared.core_height;
  f.keypoints = detect_all(f.cleaned, params.detector_for(f.core_height));
  f.descriptors = describe_keypoints(f.cleaned, f.keypoints, f.core_height, params.descriptor);
  return f;
}

inline PageIndex build_page_index(const GrayImage& page, std::string page_id, const SpotParams& params) {
  Features f = extract_features(page, params);
  PageIndex idx;
  idx.page_id = std::move(page_id);
  idx.width = page.width();
  idx.height = page.height();
  idx.core_height = f.core_height;
  idx.keypoints = std::move(f.keypoints);
  idx.descriptors = std::move(f.descriptors);
  idx.rebuild_grid();
  return idx;
}

inline Query prepare_query(const GrayImage& img, const SpotParams& params) {
  Features f = extract_features(img, params);
  if (f.keypoints.empty()) throw EmptyQueryError("query image yields no keypoints");
  Query q;
  q.image = img;
  q.core_height = f.core_height;
  q.keypoints = std::move(f.keypoints);
  q.descriptors = std::move(f.descriptors);
  q.x0 = q.y0 = std::numeric_limits<double>::infinity();
  q.x1 = q.y1 = -q.x0;
  for (const Keypoint& k : q.keypoints) {
    q.x0 = std::min(q.x0, k.x);
    q.y0 = std::min(q.y0, k.y);
    q.x1 = std::max(q.x1, k.x);
    q.y1 = std::max(q.y1, k.y);
  }
  const double width = std::max(1.0, q.x1 - q.x0);
  if (params.forced_parts > 0) {
    q.parts = partition_query(q.keypoints, width, width / (params.forced_parts * params.part_width_factor), q.x0,
                              params.part_width_factor, params.forced_parts);
  } else {
    q.parts = partition_query(q.keypoints, width, q.core_height, q.x0, params.part_width_factor, params.max_parts);
  }
  return q;
}

/// Descending score, ties by (page_id, y, x).
inline void sort_candidates(std::vector<CandidateRegion>& cands) {
  std::stable_sort(cands.begin(), cands.end(), [](const CandidateRegion& a, const CandidateRegion& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.page_id, a.bbox.y, a.bbox.x) < std::tie(b.page_id, b.bbox.y, b.bbox.x);
  });
}

namespace detail {

// Query-by-page descriptor distances for same-kind pairs.
class DistanceTable {
 public:
  DistanceTable(const Query& q, const PageIndex& page) : cols_(page.keypoints.size()) {
    table_.assign(q.keypoints.size() * cols_, std::numeric_limits<float>::infinity());
    for (std::size_t i = 0; i < q.keypoints.size(); ++i) {
      const auto& qd = q.descriptors[i].values;
      for (std::size_t j = 0; j < cols_; ++j) {
        if (page.keypoints[j].kind != q.keypoints[i].kind) continue;
        const auto& td = page.descriptors[j].values;
        double acc = 0.0;
        for (std::size_t k = 0; k < qd.size(); ++k) {
          const double d = qd[k] - td[k];
          acc += d * d;
        }
        table_[i * cols_ + j] = static_cast<float>(std::sqrt(acc));
      }
    }
  }

  double operator()(std::size_t qi, std::size_t tj) const { return table_[qi * cols_ + tj]; }

 private:
  std::size_t cols_;
  std::vector<float> table_;
};

struct WindowEval {
  std::size_t window = 0;
  double score = 0.0;
  BBox bbox;
  std::vector<std::size_t> matched;
};

}  // namespace detail

/// Scale-adapted sliding-window search of one page. Windows are scored
/// against the full keypoint set, then accepted greedily in descending score;
/// an accepted window consumes its matched keypoints and any window whose
/// matches were consumed is re-evaluated on what remains.
inline std::vector<CandidateRegion> slide_and_match(const Query& query, const PageIndex& page,
                                                    const SpotParams& params) {
  params.validate();
  std::vector<CandidateRegion> out;
  if (page.keypoints.empty() || query.keypoints.empty() || page.core_height <= 0.0) return out;

  const double h = page.core_height;
  const double scale = page.core_height / query.core_height;
  const double win_w = std::max(1.0, scale * (query.x1 - query.x0));
  const double win_h = std::max(1.0, scale * (query.y1 - query.y0));
  const double step_x = std::max(1.0, params.window_step * win_w);
  const double step_y = std::max(1.0, params.window_step * win_h);
  const double vslack = params.vertical_slack * h;
  const MatchParams mp = params.match_for(h);
  const int parts = static_cast<int>(query.parts.size());
  const std::size_t min_viable =
      static_cast<std::size_t>(parts) * static_cast<std::size_t>(std::max(mp.min_inliers_per_part, mp.preconditioner.min_inliers));

  double kx0 = std::numeric_limits<double>::infinity(), ky0 = kx0, kx1 = -kx0, ky1 = -kx0;
  for (const Keypoint& k : page.keypoints) {
    kx0 = std::min(kx0, k.x);
    ky0 = std::min(ky0, k.y);
    kx1 = std::max(kx1, k.x);
    ky1 = std::max(ky1, k.y);
  }

  struct Window {
    Point2 origin;
    std::vector<std::size_t> targets;
  };
  std::vector<Window> windows;
  const long long cx0 = static_cast<long long>(std::floor((kx0 - win_w) / step_x));
  const long long cx1 = static_cast<long long>(std::ceil(kx1 / step_x));
  const long long cy0 = static_cast<long long>(std::floor((ky0 - win_h) / step_y));
  const long long cy1 = static_cast<long long>(std::ceil(ky1 / step_y));
  for (long long cy = cy0; cy <= cy1; ++cy) {
    for (long long cx = cx0; cx <= cx1; ++cx) {
      const Point2 o{cx * step_x, cy * step_y};
      auto targets = page.grid.query(page.keypoints, o.x - params.strip_slack * h, o.y - vslack,
                                     o.x + win_w + params.strip_slack * h, o.y + win_h + vslack);
      if (targets.size() < min_viable) continue;
      windows.push_back({o, std::move(targets)});
    }
  }
  if (windows.empty()) return out;

  const detail::DistanceTable dist(query, page);
  auto evaluate = [&](std::size_t w, const std::vector<char>& consumed) -> std::optional<detail::WindowEval> {
    const Window& win = windows[w];
    std::vector<std::size_t> available;
    available.reserve(win.targets.size());
    for (std::size_t t : win.targets) {
      if (!consumed[t]) available.push_back(t);
    }
    if (available.size() < min_viable) return std::nullopt;
    const WindowFrame frame{win.origin, {query.x0, query.y0}, scale, params.strip_slack * h};
    MatchOutcome m = match_parts(query.parts, query.keypoints, page.keypoints, available, frame, mp, dist);
    if (!m.hit || !m.extent) return std::nullopt;
    detail::WindowEval e;
    e.window = w;
    e.score = std::clamp(static_cast<double>(m.total_inliers) / std::max<std::size_t>(1, query.keypoints.size()), 0.0, 1.0);
    const BBox& ext = *m.extent;
    BBox b = bbox_from_extent(ext.x, ext.y, ext.right(), ext.bottom(), params.bbox_pad * h);
    const int bx0 = std::max(0, b.x), by0 = std::max(0, b.y);
    const int bx1 = std::min(page.width, b.right()), by1 = std::min(page.height, b.bottom());
    e.bbox = BBox{bx0, by0, std::max(1, bx1 - bx0), std::max(1, by1 - by0)};
    e.matched = std::move(m.matched_targets);
    return e;
  };

  auto worse = [](const detail::WindowEval& a, const detail::WindowEval& b) {
    if (a.score != b.score) return a.score < b.score;
    return std::tie(a.bbox.y, a.bbox.x, a.window) > std::tie(b.bbox.y, b.bbox.x, b.window);
  };
  std::priority_queue<detail::WindowEval, std::vector<detail::WindowEval>, decltype(worse)> heap(worse);
  std::vector<char> consumed(page.keypoints.size(), 0);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (auto e = evaluate(w, consumed)) heap.push(std::move(*e));
  }

  while (!heap.empty()) {
    detail::WindowEval top = heap.top();
    heap.pop();
    const bool stale = std::any_of(top.matched.begin(), top.matched.end(), [&](std::size_t t) { return consumed[t]; });
    if (stale) {
      if (auto e = evaluate(top.window, consumed)) heap.push(std::move(*e));
      continue;
    }
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const CandidateRegion& c) {
      const double inter = static_cast<double>(intersection_area(c.bbox, top.bbox));
      return inter > params.dedup_overlap * static_cast<double>(std::min(c.bbox.area(), top.bbox.area()));
    });
    if (duplicate) continue;
    for (std::size_t t : top.matched) consumed[t] = 1;
    out.push_back({page.page_id, top.bbox, top.score, std::move(top.matched)});
  }

  sort_candidates(out);
  return out;
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    }));
  }
  for (auto& f : futures) f.get();
}

/// Searches every indexed page and merges the candidates into one ranking.
inline std::vector<CandidateRegion> spot(const Query& query, std::span<const PageIndex> pages, const SpotParams& params,
                                         int jobs = 1) {
  if (pages.empty()) throw InvalidInput("spot: empty corpus");
  std::vector<std::vector<CandidateRegion>> per_page(pages.size());
  parallel_for(pages.size(), jobs, [&](std::size_t i) { per_page[i] = slide_and_match(query, pages[i], params); });
  std::vector<CandidateRegion> all;
  for (auto& v : per_page) {
    for (auto& c : v) all.push_back(std::move(c));
  }
  sort_candidates(all);
  return all;
}

inline std::vector<CandidateRegion> spot(const GrayImage& query_img, std::span<const GrayImage> pages,
                                         const SpotParams& params) {
  const Query q = prepare_query(query_img, params);
  std::vector<PageIndex> indexes;
  indexes.reserve(pages.size());
  for (std::size_t i = 0; i < pages.size(); ++i) indexes.push_back(build_page_index(pages[i], std::to_string(i), params));
  return spot(q, indexes, params);
}

}  // namespace rlf
