#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/filters.hpp"
#include "rlf/image.hpp"

namespace rlf {

enum class KeypointKind : std::uint8_t { Corner = 0, Blob = 1, Saddle = 2, Edge = 3 };

inline constexpr std::array<KeypointKind, 4> kAllKinds{KeypointKind::Corner, KeypointKind::Blob,
                                                       KeypointKind::Saddle, KeypointKind::Edge};

inline std::string_view kind_name(KeypointKind k) {
  switch (k) {
    case KeypointKind::Corner: return "corner";
    case KeypointKind::Blob: return "blob";
    case KeypointKind::Saddle: return "saddle";
    case KeypointKind::Edge: return "edge";
  }
  return "unknown";
}

inline std::optional<KeypointKind> kind_from_name(std::string_view name) {
  for (KeypointKind k : kAllKinds) {
    if (kind_name(k) == name) return k;
  }
  return std::nullopt;
}

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  KeypointKind kind = KeypointKind::Corner;
  double response = 0.0;

  bool operator==(const Keypoint&) const = default;
};

/// Detection parameters. Per-kind thresholds are fractions of a reference
/// response level (the `reference_quantile` of that kind's candidate maxima
/// on the image), so they transfer across scan contrast. A threshold of 0
/// keeps every positive local maximum.
struct DetectorParams {
  double sigma_d = 2.0;
  double sigma_i = 4.0;
  double harris_kappa = 0.04;
  double corner_threshold = 0.02;
  double blob_threshold = 0.02;
  double saddle_threshold = 0.05;
  double edge_threshold = 0.1;
  double nms_radius = 2.0;
  double reference_quantile = 0.9;

  void validate() const {
    require_param(sigma_d > 0.0, "sigma_d must be > 0");
    require_param(sigma_i >= sigma_d, "sigma_i must be >= sigma_d");
    require_param(nms_radius >= 1.0, "nms_radius must be >= 1");
    require_param(harris_kappa >= 0.0 && harris_kappa < 0.25, "harris_kappa must lie in [0, 0.25)");
    for (double t : {corner_threshold, blob_threshold, saddle_threshold, edge_threshold}) {
      require_param(t >= 0.0, "detector thresholds must be >= 0");
    }
    require_param(reference_quantile > 0.0 && reference_quantile <= 1.0, "reference_quantile must lie in (0,1]");
  }

  double threshold_for(KeypointKind k) const {
    switch (k) {
      case KeypointKind::Corner: return corner_threshold;
      case KeypointKind::Blob: return blob_threshold;
      case KeypointKind::Saddle: return saddle_threshold;
      case KeypointKind::Edge: return edge_threshold;
    }
    return 0.0;
  }

  /// Single detection scale tied to core text height.
  static DetectorParams for_core_height(double core_height, double sigma_factor = 0.1) {
    require_param(core_height > 0.0, "core height must be > 0");
    DetectorParams p;
    p.sigma_d = std::max(0.5, sigma_factor * core_height);
    p.sigma_i = 2.0 * p.sigma_d;
    p.nms_radius = std::max(1.0, p.sigma_d);
    return p;
  }
};

/// Gaussian-derivative responses at one scale.
struct DerivativeFields {
  GrayImage ix, iy, ixx, ixy, iyy;
};

inline DerivativeFields derivatives(const GrayImage& img, double sigma_d) {
  require_param(sigma_d > 0.0, "derivatives: sigma_d must be > 0");
  const Kernel1D g = gaussian_kernel(sigma_d);
  const Kernel1D d1 = gaussian_d1_kernel(sigma_d);
  const Kernel1D d2 = gaussian_d2_kernel(sigma_d);
  return DerivativeFields{
      convolve_separable(img, d1, g), convolve_separable(img, g, d1), convolve_separable(img, d2, g),
      convolve_separable(img, d1, d1), convolve_separable(img, g, d2),
  };
}

/// Structure tensor components smoothed at the integration scale.
struct StructureTensor {
  GrayImage sxx, sxy, syy;
};

inline StructureTensor structure_tensor(const DerivativeFields& d, double sigma_i) {
  const int w = d.ix.width(), h = d.ix.height();
  GrayImage xx(w, h), xy(w, h), yy(w, h);
  for (std::size_t i = 0; i < d.ix.size(); ++i) {
    const double gx = d.ix.pixels()[i], gy = d.iy.pixels()[i];
    xx.pixels()[i] = gx * gx;
    xy.pixels()[i] = gx * gy;
    yy.pixels()[i] = gy * gy;
  }
  return {gaussian_blur(xx, sigma_i), gaussian_blur(xy, sigma_i), gaussian_blur(yy, sigma_i)};
}

/// det(M) - kappa * trace(M)^2
inline GrayImage harris_response(const StructureTensor& m, double kappa) {
  GrayImage r(m.sxx.width(), m.sxx.height());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = m.sxx.pixels()[i], b = m.sxy.pixels()[i], c = m.syy.pixels()[i];
    r.pixels()[i] = a * c - b * b - kappa * (a + c) * (a + c);
  }
  return r;
}

/// Determinant of the Hessian, Ixx * Iyy - Ixy^2 (signed).
inline GrayImage hessian_determinant(const DerivativeFields& d) {
  GrayImage r(d.ixx.width(), d.ixx.height());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double xy = d.ixy.pixels()[i];
    r.pixels()[i] = d.ixx.pixels()[i] * d.iyy.pixels()[i] - xy * xy;
  }
  return r;
}

/// Eigenvalue asymmetry ((l1 - l2) / (l1 + l2 + eps))^2 * (l1 + l2): large on
/// elongated stroke edges, small on corners, blobs and flat ground.
inline GrayImage edge_asymmetry(const StructureTensor& m) {
  constexpr double kEps = 1e-12;
  GrayImage r(m.sxx.width(), m.sxx.height());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = m.sxx.pixels()[i], b = m.sxy.pixels()[i], c = m.syy.pixels()[i];
    const double trace = a + c;
    const double spread = std::sqrt((a - c) * (a - c) + 4.0 * b * b);
    const double ratio = spread / (trace + kEps);
    r.pixels()[i] = ratio * ratio * trace;
  }
  return r;
}

namespace detail {

inline constexpr double kResponseFloor = 1e-24;
inline constexpr double kRelativeFloor = 1e-9;

struct Candidate {
  int x = 0;
  int y = 0;
  double response = 0.0;
};

// 3x3 local maxima with value > 0. Plateaus resolve to their first pixel in
// raster order: earlier neighbours must be strictly smaller.
inline std::vector<Candidate> local_maxima(const GrayImage& r) {
  std::vector<Candidate> out;
  const int w = r.width(), h = r.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = r(x, y);
      if (!(v > 0.0)) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (!r.contains(nx, ny)) continue;
          const double n = r(nx, ny);
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > v || (earlier && n == v)) {
            peak = false;
            break;
          }
        }
      }
      if (peak) out.push_back({x, y, v});
    }
  }
  return out;
}

// Maxima of `r` along the dominant structure-tensor direction (gradient
// direction), quantized to 8 neighbours.
inline std::vector<Candidate> ridge_maxima(const GrayImage& r, const StructureTensor& m) {
  std::vector<Candidate> out;
  const int w = r.width(), h = r.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = r(x, y);
      if (!(v > 0.0)) continue;
      const double theta = 0.5 * std::atan2(2.0 * m.sxy(x, y), m.sxx(x, y) - m.syy(x, y));
      const int dx = static_cast<int>(std::lround(std::cos(theta)));
      const int dy = static_cast<int>(std::lround(std::sin(theta)));
      const double ahead = r.clamped(x + dx, y + dy);
      const double behind = r.clamped(x - dx, y - dy);
      if (v > ahead && v >= behind) out.push_back({x, y, v});
    }
  }
  return out;
}

inline double parabola_offset(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

inline double reference_level(const std::vector<Candidate>& cands, double q) {
  if (cands.empty()) return 0.0;
  std::vector<double> values;
  values.reserve(cands.size());
  for (const auto& c : cands) values.push_back(c.response);
  const auto k = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

// Threshold, sub-pixel refinement, then greedy radius suppression in
// descending response order (ties by raster position).
inline std::vector<Keypoint> finalize(const GrayImage& r, std::vector<Candidate> cands, KeypointKind kind,
                                      double rel_threshold, double reference_quantile, double nms_radius) {
  // Rounding residue in flat or purely one-dimensional structure must not
  // become keypoints, so the relative threshold never drops below a floor
  // tied to the field's own magnitude.
  double peak = 0.0;
  for (double v : r.pixels()) peak = std::max(peak, std::abs(v));
  const double floor = std::max(kResponseFloor, kRelativeFloor * peak);
  const double threshold = std::max(floor, rel_threshold * reference_level(cands, reference_quantile));
  std::erase_if(cands, [&](const Candidate& c) { return !(c.response > threshold); });
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });

  const int w = r.width(), h = r.height();
  const double cell = nms_radius;
  const int gw = static_cast<int>(std::ceil(w / cell)) + 1;
  const int gh = static_cast<int>(std::ceil(h / cell)) + 1;
  std::vector<std::vector<std::size_t>> grid(static_cast<std::size_t>(gw) * gh);
  std::vector<Keypoint> kept;
  const double r2 = nms_radius * nms_radius;

  for (const auto& c : cands) {
    double fx = c.x, fy = c.y;
    if (c.x > 0 && c.x < w - 1) fx += parabola_offset(r(c.x - 1, c.y), c.response, r(c.x + 1, c.y));
    if (c.y > 0 && c.y < h - 1) fy += parabola_offset(r(c.x, c.y - 1), c.response, r(c.x, c.y + 1));
    fx = std::clamp(fx, 0.0, std::nextafter(static_cast<double>(w), 0.0));
    fy = std::clamp(fy, 0.0, std::nextafter(static_cast<double>(h), 0.0));

    const int cx = static_cast<int>(fx / cell), cy = static_cast<int>(fy / cell);
    bool suppressed = false;
    for (int gy = std::max(0, cy - 1); gy <= std::min(gh - 1, cy + 1) && !suppressed; ++gy) {
      for (int gx = std::max(0, cx - 1); gx <= std::min(gw - 1, cx + 1) && !suppressed; ++gx) {
        for (std::size_t idx : grid[static_cast<std::size_t>(gy) * gw + gx]) {
          const double ddx = kept[idx].x - fx, ddy = kept[idx].y - fy;
          if (ddx * ddx + ddy * ddy <= r2) {
            suppressed = true;
            break;
          }
        }
      }
    }
    if (suppressed) continue;
    grid[static_cast<std::size_t>(cy) * gw + cx].push_back(kept.size());
    kept.push_back({fx, fy, kind, c.response});
  }
  return kept;
}

inline GrayImage squared_positive(const GrayImage& doh) {
  GrayImage r(doh.width(), doh.height());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double v = doh.pixels()[i];
    r.pixels()[i] = v > 0.0 ? v * v : 0.0;
  }
  return r;
}

inline GrayImage negated(const GrayImage& doh) {
  GrayImage r(doh.width(), doh.height());
  for (std::size_t i = 0; i < r.size(); ++i) r.pixels()[i] = std::max(0.0, -doh.pixels()[i]);
  return r;
}

}  // namespace detail

/// Largest gradient, in units of sigma_d * sqrt(-DoH), at which a saddle
/// candidate still counts as stationary.
inline constexpr double kSaddleStationarity = 1.0;

/// Response fields shared by all four detectors.
struct DetectorResponses {
  GrayImage gradient;  // |grad I| at sigma_d
  GrayImage harris;
  GrayImage doh;
  GrayImage asymmetry;
  StructureTensor tensor;
};

inline DetectorResponses detector_responses(const GrayImage& img, const DetectorParams& p) {
  p.validate();
  if (img.empty()) throw InvalidInput("detector: empty image");
  DetectorResponses out;
  {
    const DerivativeFields d = derivatives(img, p.sigma_d);
    out.doh = hessian_determinant(d);
    out.gradient = GrayImage(img.width(), img.height());
    for (std::size_t i = 0; i < img.size(); ++i) out.gradient.pixels()[i] = std::hypot(d.ix.pixels()[i], d.iy.pixels()[i]);
    out.tensor = structure_tensor(d, p.sigma_i);
  }
  out.harris = harris_response(out.tensor, p.harris_kappa);
  out.asymmetry = edge_asymmetry(out.tensor);
  return out;
}

inline std::vector<Keypoint> harris_corners(const DetectorResponses& r, const DetectorParams& p) {
  return detail::finalize(r.harris, detail::local_maxima(r.harris), KeypointKind::Corner, p.corner_threshold,
                          p.reference_quantile, p.nms_radius);
}

/// Maxima of DoH^2 restricted to DoH > 0, so dark and bright blobs respond equally.
inline std::vector<Keypoint> doh_blobs(const DetectorResponses& r, const DetectorParams& p) {
  const GrayImage sq = detail::squared_positive(r.doh);
  return detail::finalize(sq, detail::local_maxima(sq), KeypointKind::Blob, p.blob_threshold, p.reference_quantile,
                          p.nms_radius);
}

/// Maxima of -DoH (most negative determinant) at near-stationary points:
/// the gradient may not exceed sigma_d * sqrt(-DoH), which keeps the
/// crossing of a saddle and drops the negative-DoH flanks of blobs and
/// strokes.
inline std::vector<Keypoint> saddle_points(const DetectorResponses& r, const DetectorParams& p) {
  const GrayImage neg = detail::negated(r.doh);
  std::vector<detail::Candidate> cands = detail::local_maxima(neg);
  std::erase_if(cands, [&](const detail::Candidate& c) {
    return r.gradient(c.x, c.y) > kSaddleStationarity * p.sigma_d * std::sqrt(c.response);
  });
  return detail::finalize(neg, std::move(cands), KeypointKind::Saddle, p.saddle_threshold, p.reference_quantile,
                          p.nms_radius);
}

inline std::vector<Keypoint> edge_points(const DetectorResponses& r, const DetectorParams& p) {
  return detail::finalize(r.asymmetry, detail::ridge_maxima(r.asymmetry, r.tensor), KeypointKind::Edge,
                          p.edge_threshold, p.reference_quantile, p.nms_radius);
}

inline std::vector<Keypoint> harris_corners(const GrayImage& img, const DetectorParams& p) {
  return harris_corners(detector_responses(img, p), p);
}
inline std::vector<Keypoint> doh_blobs(const GrayImage& img, const DetectorParams& p) {
  return doh_blobs(detector_responses(img, p), p);
}
inline std::vector<Keypoint> saddle_points(const GrayImage& img, const DetectorParams& p) {
  return saddle_points(detector_responses(img, p), p);
}
inline std::vector<Keypoint> edge_points(const GrayImage& img, const DetectorParams& p) {
  return edge_points(detector_responses(img, p), p);
}

/// Union of the four detectors, no cross-kind suppression, sorted by (y, x, kind).
inline std::vector<Keypoint> detect_all(const GrayImage& img, const DetectorParams& p) {
  const DetectorResponses r = detector_responses(img, p);
  std::vector<Keypoint> all;
  for (auto&& part : {harris_corners(r, p), doh_blobs(r, p), saddle_points(r, p), edge_points(r, p)}) {
    all.insert(all.end(), part.begin(), part.end());
  }
  std::sort(all.begin(), all.end(), [](const Keypoint& a, const Keypoint& b) {
    return std::tie(a.y, a.x, a.kind) < std::tie(b.y, b.x, b.kind);
  });
  return all;
}

}  // namespace rlf
