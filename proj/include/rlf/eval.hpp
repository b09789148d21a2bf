#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/image.hpp"

namespace rlf {

struct GroundTruthEntry {
  std::string page_id;
  BBox bbox;
  std::string label;
};

/// A ranked retrieval hit as seen by the evaluator.
struct RankedRegion {
  std::string page_id;
  BBox bbox;
  double score = 0.0;
};

enum class OverlapRule {
  GroundTruthArea,  // |c ∩ g| / |g| > 0.5
  IoU,              // |c ∩ g| / |c ∪ g| > 0.5
};

inline double overlap_ratio(const BBox& candidate, const BBox& gt, OverlapRule rule = OverlapRule::GroundTruthArea) {
  const double inter = static_cast<double>(intersection_area(candidate, gt));
  if (rule == OverlapRule::IoU) {
    const double uni = static_cast<double>(candidate.area() + gt.area()) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
  }
  return inter / static_cast<double>(gt.area());
}

/// Positive iff on the same page and the overlap ratio strictly exceeds one half.
inline bool is_positive(const RankedRegion& candidate, const GroundTruthEntry& gt,
                        OverlapRule rule = OverlapRule::GroundTruthArea) {
  if (candidate.page_id != gt.page_id) return false;
  return overlap_ratio(candidate.bbox, gt.bbox, rule) > 0.5;
}

/// Average precision of a ranking. Each candidate claims the highest-overlap
/// unclaimed ground truth it is positive for; positives for already-claimed
/// ground truth count as false positives. Returns nullopt when `gts` is empty.
inline std::optional<double> average_precision(std::span<const RankedRegion> ranked,
                                               std::span<const GroundTruthEntry> gts,
                                               OverlapRule rule = OverlapRule::GroundTruthArea) {
  if (gts.empty()) return std::nullopt;
  std::vector<char> claimed(gts.size(), 0);
  int true_positives = 0;
  double precision_sum = 0.0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    std::optional<std::size_t> best;
    double best_overlap = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g] || !is_positive(ranked[r], gts[g], rule)) continue;
      const double ov = overlap_ratio(ranked[r].bbox, gts[g].bbox, rule);
      if (!best || ov > best_overlap) {
        best = g;
        best_overlap = ov;
      }
    }
    if (!best) continue;
    claimed[*best] = 1;
    ++true_positives;
    precision_sum += static_cast<double>(true_positives) / static_cast<double>(r + 1);
  }
  return precision_sum / static_cast<double>(gts.size());
}

struct QueryResult {
  std::string query_id;
  std::optional<double> ap;
  int relevant = 0;
};

struct EvalReport {
  std::vector<QueryResult> per_query;
  double mean_ap = 0.0;

  std::vector<std::string> undefined_queries() const {
    std::vector<std::string> out;
    for (const auto& q : per_query) {
      if (!q.ap) out.push_back(q.query_id);
    }
    return out;
  }
};

/// Arithmetic mean over defined APs; throws when none is defined.
inline double mean_ap(std::span<const std::optional<double>> aps) {
  double sum = 0.0;
  int defined = 0;
  for (const auto& ap : aps) {
    if (!ap) continue;
    sum += *ap;
    ++defined;
  }
  if (defined == 0) throw EvaluationError("mean_ap: no query has relevant ground truth");
  return sum / defined;
}

struct QueryRanking {
  std::string query_id;
  std::vector<RankedRegion> ranked;  // already in rank order
};

/// Evaluates each query against the ground truth sharing its label
/// (query_id == label).
inline EvalReport evaluate(std::span<const QueryRanking> queries, std::span<const GroundTruthEntry> gts,
                           OverlapRule rule = OverlapRule::GroundTruthArea) {
  EvalReport report;
  std::vector<std::optional<double>> aps;
  for (const auto& q : queries) {
    std::vector<GroundTruthEntry> relevant;
    for (const auto& g : gts) {
      if (g.label == q.query_id) relevant.push_back(g);
    }
    QueryResult r{q.query_id, average_precision(q.ranked, relevant, rule), static_cast<int>(relevant.size())};
    aps.push_back(r.ap);
    report.per_query.push_back(std::move(r));
  }
  report.mean_ap = mean_ap(aps);
  return report;
}

}  // namespace rlf
