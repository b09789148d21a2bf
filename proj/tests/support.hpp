#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlf/filters.hpp"
#include "rlf/image.hpp"

namespace rlf::fixtures {

inline GrayImage random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  GrayImage img(w, h);
  for (double& v : img.pixels()) v = u(rng);
  return img;
}

/// Smooth random field: a few random low-frequency cosines.
inline GrayImage smooth_image(int w, int h, std::uint64_t seed, int terms = 6, double max_freq = 0.08) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> f(-max_freq, max_freq), ph(0.0, 2.0 * std::numbers::pi), amp(0.05, 0.2);
  struct Term {
    double fx, fy, phase, amp;
  };
  std::vector<Term> t;
  for (int i = 0; i < terms; ++i) t.push_back({f(rng), f(rng), ph(rng), amp(rng)});
  GrayImage img(w, h, 0.5);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (const auto& c : t) img(x, y) += c.amp * std::cos(2.0 * std::numbers::pi * (c.fx * x + c.fy * y) + c.phase);
    }
  }
  return img;
}

/// Direct 2D convolution with the outer product of two 1D kernels and edge
/// replication, summed term by term.
inline GrayImage dense_convolve(const GrayImage& img, const Kernel1D& kx, const Kernel1D& ky) {
  GrayImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int t = -ky.radius; t <= ky.radius; ++t) {
        for (int s = -kx.radius; s <= kx.radius; ++s) acc += kx.at(s) * ky.at(t) * img.clamped(x - s, y - t);
      }
      out(x, y) = acc;
    }
  }
  return out;
}

/// Naive DFT element with per-term trigonometric evaluation.
inline std::complex<double> naive_dft(std::span<const double> f, int k) {
  const double n_total = static_cast<double>(f.size());
  double re = 0.0, im = 0.0;
  for (std::size_t n = 0; n < f.size(); ++n) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(n) * k / n_total;
    re += f[n] * std::cos(a);
    im -= f[n] * std::sin(a);
  }
  return {re, im};
}

inline double max_abs_diff(const GrayImage& a, const GrayImage& b, int border = 0) {
  double m = 0.0;
  for (int y = border; y < a.height() - border; ++y) {
    for (int x = border; x < a.width() - border; ++x) m = std::max(m, std::abs(a(x, y) - b(x, y)));
  }
  return m;
}

inline void fill_rect(GrayImage& img, int x0, int y0, int w, int h, double v) {
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      if (img.contains(x, y)) img(x, y) = v;
    }
  }
}

inline GrayImage shifted(const GrayImage& img, int dx, int dy, double fill) {
  GrayImage out(img.width(), img.height(), fill);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (out.contains(x + dx, y + dy)) out(x + dx, y + dy) = img(x, y);
    }
  }
  return out;
}

/// Bilinear resampling by factor s.
inline GrayImage rescaled(const GrayImage& img, double s) {
  const int w = std::max(1, static_cast<int>(std::lround(img.width() * s)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height() * s)));
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = std::clamp((x + 0.5) / s - 0.5, 0.0, img.width() - 1.0);
      const double sy = std::clamp((y + 0.5) / s - 0.5, 0.0, img.height() - 1.0);
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(img.width() - 1, x0 + 1), y1 = std::min(img.height() - 1, y0 + 1);
      const double fx = sx - x0, fy = sy - y0;
      out(x, y) = (1 - fy) * ((1 - fx) * img(x0, y0) + fx * img(x1, y0)) + fy * ((1 - fx) * img(x0, y1) + fx * img(x1, y1));
    }
  }
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rlf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rlf::fixtures
