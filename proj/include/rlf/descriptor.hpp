#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/image.hpp"
#include "rlf/keypoints.hpp"

namespace rlf {

/// Log-polar resampling of a disc: row a is the radial line at angle
/// 2*pi*a/lines (from +x, counter-clockwise in x/y coordinates), column j is
/// the ring at radius r_min * (r_max/r_min)^(j/(rings-1)).
struct LogPolarPatch {
  int lines = 16;
  int rings = 16;
  std::vector<double> samples;  // lines x rings, row-major
  Point2 center;
  double r_min = 1.0;
  double r_max = 2.0;

  std::span<const double> line(int a) const {
    return std::span<const double>(samples).subspan(static_cast<std::size_t>(a) * rings, rings);
  }
  std::span<double> line(int a) {
    return std::span<double>(samples).subspan(static_cast<std::size_t>(a) * rings, rings);
  }
  double& at(int a, int j) { return samples[static_cast<std::size_t>(a) * rings + j]; }
  double at(int a, int j) const { return samples[static_cast<std::size_t>(a) * rings + j]; }
};

struct RlfDescriptor {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const RlfDescriptor&) const = default;
};

struct DescriptorParams {
  int lines = 16;
  int rings = 16;
  std::vector<int> frequencies{2, 4};
  double r_min = 1.0;
  double radius_factor = 0.75;  // r_max = radius_factor * core height
  double interp_sigma = 0.5;

  std::size_t dimension() const { return static_cast<std::size_t>(lines) * frequencies.size(); }

  void validate() const {
    require_param(lines >= 1, "descriptor lines must be >= 1");
    require_param(rings >= 2, "descriptor rings must be >= 2");
    require_param(!frequencies.empty(), "descriptor needs at least one frequency");
    for (int k : frequencies) require_param(k >= 0 && k < rings, "descriptor frequency must lie in [0, rings)");
    require_param(r_min > 0.0, "r_min must be > 0");
    require_param(radius_factor > 0.0, "radius_factor must be > 0");
    require_param(interp_sigma > 0.0, "interp_sigma must be > 0");
  }
};

namespace detail {

// Separable 3x3 Gaussian weights around the nearest pixel centre.
inline double gaussian_interpolate(const GrayImage& img, double px, double py, double inv_two_sigma2) {
  const int cx = static_cast<int>(std::lround(px));
  const int cy = static_cast<int>(std::lround(py));
  std::array<double, 3> wx{}, wy{};
  for (int i = 0; i < 3; ++i) {
    const double dx = (cx + i - 1) - px;
    const double dy = (cy + i - 1) - py;
    wx[i] = std::exp(-dx * dx * inv_two_sigma2);
    wy[i] = std::exp(-dy * dy * inv_two_sigma2);
  }
  const double norm = (wx[0] + wx[1] + wx[2]) * (wy[0] + wy[1] + wy[2]);
  double acc = 0.0;
  const bool interior = cx >= 1 && cy >= 1 && cx < img.width() - 1 && cy < img.height() - 1;
  for (int j = 0; j < 3; ++j) {
    double row = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double v = interior ? img(cx + i - 1, cy + j - 1) : img.clamped(cx + i - 1, cy + j - 1);
      row += wx[i] * v;
    }
    acc += wy[j] * row;
  }
  return acc / norm;
}

}  // namespace detail

inline LogPolarPatch log_polar_sample(const GrayImage& img, Point2 center, double r_min, double r_max, int lines = 16,
                                      int rings = 16, double interp_sigma = 0.5) {
  require_param(r_min > 0.0 && r_max > r_min, "log_polar_sample: need r_max > r_min > 0");
  require_param(lines >= 1 && rings >= 2, "log_polar_sample: need lines >= 1 and rings >= 2");
  require_param(interp_sigma > 0.0, "log_polar_sample: interp_sigma must be > 0");
  if (img.empty()) throw InvalidInput("log_polar_sample: empty image");

  LogPolarPatch patch;
  patch.lines = lines;
  patch.rings = rings;
  patch.center = center;
  patch.r_min = r_min;
  patch.r_max = r_max;
  patch.samples.resize(static_cast<std::size_t>(lines) * rings);

  std::vector<double> radii(static_cast<std::size_t>(rings));
  const double growth = r_max / r_min;
  for (int j = 0; j < rings; ++j) radii[j] = r_min * std::pow(growth, static_cast<double>(j) / (rings - 1));
  const double inv = 1.0 / (2.0 * interp_sigma * interp_sigma);
  for (int a = 0; a < lines; ++a) {
    const double theta = 2.0 * std::numbers::pi * a / lines;
    const double c = std::cos(theta), s = std::sin(theta);
    for (int j = 0; j < rings; ++j) {
      patch.at(a, j) = detail::gaussian_interpolate(img, center.x + radii[j] * c, center.y + radii[j] * s, inv);
    }
  }
  return patch;
}

/// One DFT element, sum f(n) cos(2 pi n k / N) - i sum f(n) sin(2 pi n k / N),
/// with the twiddle factors advanced by the Chebyshev recurrence
/// t(n+1) = 2 cos(phi) t(n) - t(n-1).
inline std::complex<double> dft_element(std::span<const double> f, int k) {
  const int n_total = static_cast<int>(f.size());
  require_param(n_total >= 1, "dft_element: empty sequence");
  require_param(k >= 0 && k < n_total, "dft_element: k must lie in [0, N)");
  const double phi = 2.0 * std::numbers::pi * k / n_total;
  const double two_cos = 2.0 * std::cos(phi);
  double c_prev = std::cos(phi), c = 1.0;   // cos(-phi), cos(0)
  double s_prev = -std::sin(phi), s = 0.0;  // sin(-phi), sin(0)
  double re = 0.0, im = 0.0;
  for (int n = 0; n < n_total; ++n) {
    re += f[n] * c;
    im -= f[n] * s;
    const double c_next = two_cos * c - c_prev;
    const double s_next = two_cos * s - s_prev;
    c_prev = c;
    c = c_next;
    s_prev = s;
    s = s_next;
  }
  return {re, im};
}

inline double dft_amplitude(std::span<const double> f, int k) {
  const std::complex<double> e = dft_element(f, k);
  return std::sqrt(e.real() * e.real() + e.imag() * e.imag());
}

inline void l2_normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm <= 0.0) return;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

/// Per radial line, DFT amplitudes at each selected frequency, laid out in
/// frequency blocks: values[b * lines + a] = |F[line a](k_b)|. Unnormalized.
inline RlfDescriptor rlf_amplitudes(const LogPolarPatch& patch, std::span<const int> frequencies) {
  RlfDescriptor d;
  d.values.resize(static_cast<std::size_t>(patch.lines) * frequencies.size());
  for (std::size_t b = 0; b < frequencies.size(); ++b) {
    for (int a = 0; a < patch.lines; ++a) {
      d.values[b * patch.lines + a] = dft_amplitude(patch.line(a), frequencies[b]);
    }
  }
  return d;
}

/// Amplitude norm, relative to rings * max|sample|, below which a patch
/// counts as flat: rounding residue is not normalized up to unit length.
inline constexpr double kFlatPatchTolerance = 1e-12;

inline RlfDescriptor rlf_describe(const LogPolarPatch& patch, std::span<const int> frequencies) {
  RlfDescriptor d = rlf_amplitudes(patch, frequencies);
  double peak = 0.0, norm = 0.0;
  for (double v : patch.samples) peak = std::max(peak, std::abs(v));
  for (double v : d.values) norm += v * v;
  if (std::sqrt(norm) <= kFlatPatchTolerance * patch.rings * peak) {
    std::fill(d.values.begin(), d.values.end(), 0.0);
    return d;
  }
  l2_normalize(d.values);
  return d;
}

inline RlfDescriptor rlf_describe(const LogPolarPatch& patch) {
  static constexpr std::array<int, 2> kDefault{2, 4};
  return rlf_describe(patch, kDefault);
}

inline std::vector<RlfDescriptor> describe_keypoints(const GrayImage& img, std::span<const Keypoint> kps,
                                                     double core_height, const DescriptorParams& p = {}) {
  p.validate();
  require_param(core_height > 0.0, "describe_keypoints: core height must be > 0");
  const double r_max = p.radius_factor * core_height;
  require_param(r_max > p.r_min, "describe_keypoints: core height too small for r_min");
  std::vector<RlfDescriptor> out;
  out.reserve(kps.size());
  for (const Keypoint& kp : kps) {
    const LogPolarPatch patch = log_polar_sample(img, {kp.x, kp.y}, p.r_min, r_max, p.lines, p.rings, p.interp_sigma);
    out.push_back(rlf_describe(patch, p.frequencies));
  }
  return out;
}

inline double descriptor_distance(const RlfDescriptor& a, const RlfDescriptor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace rlf
