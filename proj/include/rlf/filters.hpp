#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/image.hpp"

namespace rlf {

/// Odd-length 1D kernel centered at index `radius`.
struct Kernel1D {
  std::vector<double> taps;
  int radius = 0;

  double at(int offset) const { return taps[static_cast<std::size_t>(offset + radius)]; }
};

inline int gaussian_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

/// Sampled Gaussian truncated at ceil(3 sigma), normalized to unit sum.
inline Kernel1D gaussian_kernel(double sigma) {
  require_param(sigma > 0.0 && std::isfinite(sigma), "gaussian sigma must be > 0");
  Kernel1D k;
  k.radius = gaussian_radius(sigma);
  k.taps.resize(2 * k.radius + 1);
  for (int i = -k.radius; i <= k.radius; ++i) k.taps[i + k.radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.taps.begin(), k.taps.end(), 0.0);
  for (double& t : k.taps) t /= sum;
  return k;
}

/// First-derivative-of-Gaussian kernel, scaled so that convolving the ramp
/// f(x) = x yields exactly 1.
inline Kernel1D gaussian_d1_kernel(double sigma) {
  Kernel1D k = gaussian_kernel(sigma);
  double moment = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    k.taps[i + k.radius] *= -i / (sigma * sigma);
    moment -= i * k.taps[i + k.radius];
  }
  for (double& t : k.taps) t /= moment;
  return k;
}

/// Second-derivative-of-Gaussian kernel with zero sum and unit response to x^2/2.
inline Kernel1D gaussian_d2_kernel(double sigma) {
  Kernel1D k = gaussian_kernel(sigma);
  const double s2 = sigma * sigma;
  for (int i = -k.radius; i <= k.radius; ++i) k.taps[i + k.radius] *= (i * i - s2) / (s2 * s2);
  const double mean = std::accumulate(k.taps.begin(), k.taps.end(), 0.0) / static_cast<double>(k.taps.size());
  double moment = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    k.taps[i + k.radius] -= mean;
    moment += 0.5 * i * i * k.taps[i + k.radius];
  }
  for (double& t : k.taps) t /= moment;
  return k;
}

namespace detail {

// out[i] = sum_k kernel(k) * in[clamp(i - k)]
inline void convolve_line(std::span<const double> in, std::span<double> out, const Kernel1D& kernel,
                          std::vector<double>& scratch) {
  const int n = static_cast<int>(in.size());
  const int r = kernel.radius;
  scratch.resize(static_cast<std::size_t>(n + 2 * r));
  for (int i = 0; i < n + 2 * r; ++i) scratch[i] = in[std::clamp(i - r, 0, n - 1)];
  const double* taps = kernel.taps.data();
  const int len = 2 * r + 1;
  for (int i = 0; i < n; ++i) {
    // scratch[i + r - k] for k in [-r, r]  ==  scratch[i + 2r - j] for j = k + r
    const double* src = scratch.data() + i + 2 * r;
    double acc = 0.0;
    for (int j = 0; j < len; ++j) acc += taps[j] * src[-j];
    out[i] = acc;
  }
}

}  // namespace detail

/// Convolves every row with `kx` then every column with `ky`; borders replicate edges.
inline GrayImage convolve_separable(const GrayImage& img, const Kernel1D& kx, const Kernel1D& ky) {
  const int w = img.width();
  const int h = img.height();
  GrayImage tmp(w, h);
  std::vector<double> scratch;
  for (int y = 0; y < h; ++y) detail::convolve_line(img.row(y), tmp.row(y), kx, scratch);

  GrayImage out(w, h);
  const int r = ky.radius;
  for (int y = 0; y < h; ++y) {
    std::span<double> dst = out.row(y);
    for (int k = -r; k <= r; ++k) {
      const double tap = ky.at(k);
      std::span<const double> src = tmp.row(std::clamp(y - k, 0, h - 1));
      for (int x = 0; x < w; ++x) dst[x] += tap * src[x];
    }
  }
  return out;
}

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  require_param(sigma > 0.0 && std::isfinite(sigma), "gaussian_blur: sigma must be > 0");
  const Kernel1D k = gaussian_kernel(sigma);
  return convolve_separable(img, k, k);
}

}  // namespace rlf
