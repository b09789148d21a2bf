#pragma once

#include <algorithm>
#include <utility>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/filters.hpp"
#include "rlf/image.hpp"

namespace rlf {

struct PreprocessParams {
  double sigma_fine = 4.0;
  double sigma_coarse = 40.0;
  double mask_threshold = 0.05;

  void validate() const {
    require_param(sigma_fine > 0.0, "sigma_fine must be > 0");
    require_param(sigma_coarse > sigma_fine, "sigma_coarse must exceed sigma_fine");
    require_param(mask_threshold >= 0.0 && mask_threshold <= 1.0, "mask_threshold must lie in [0,1]");
  }

  /// Filter bands tied to the core text height.
  static PreprocessParams for_core_height(double core_height, double fine_factor = 0.2, double coarse_factor = 2.0,
                                          double mask_threshold = 0.05) {
    require_param(core_height > 0.0, "core height must be > 0");
    return PreprocessParams{fine_factor * core_height, coarse_factor * core_height, mask_threshold};
  }
};

/// Coarse-band magnitude below which an image counts as flat.
inline constexpr double kFlatTolerance = 1e-12;

/// Level that background pixels take in a cleaned image.
inline constexpr double kNeutralBackground = 1.0;

/// Two band-pass background removal. The fine band (img - blur_fine) carries
/// stroke detail with its gray-level gradations; the coarse band
/// (blur_fine - blur_coarse) gates it so regions with no text evidence
/// collapse to the neutral background.
inline GrayImage remove_background(const GrayImage& img, const PreprocessParams& p) {
  p.validate();
  if (img.empty()) throw InvalidInput("remove_background: empty image");
  const GrayImage fine_blur = gaussian_blur(img, p.sigma_fine);
  const GrayImage coarse_blur = gaussian_blur(img, p.sigma_coarse);

  double max_coarse = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    max_coarse = std::max(max_coarse, std::abs(fine_blur.pixels()[i] - coarse_blur.pixels()[i]));
  }
  const double gate = p.mask_threshold * max_coarse;

  GrayImage out(img.width(), img.height(), kNeutralBackground);
  if (max_coarse <= kFlatTolerance) return out;
  auto src = img.pixels();
  auto fb = fine_blur.pixels();
  auto cb = coarse_blur.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (std::abs(fb[i] - cb[i]) >= gate) dst[i] = kNeutralBackground + (src[i] - fb[i]);
  }
  return out;
}

namespace detail {

inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

// Robust pixel noise level from horizontal first differences.
inline double noise_sigma(const GrayImage& img) {
  if (img.width() < 2) return 0.0;
  std::vector<double> diffs;
  diffs.reserve(img.size());
  for (int y = 0; y < img.height(); ++y) {
    auto r = img.row(y);
    for (int x = 1; x < img.width(); ++x) diffs.push_back(std::abs(r[x] - r[x - 1]));
  }
  return quantile(std::move(diffs), 0.5) / (0.6745 * std::sqrt(2.0));
}

struct Run {
  int begin = 0;
  int end = 0;  // exclusive
  int length() const { return end - begin; }
};

template <typename Pred>
std::vector<Run> runs_where(int begin, int end, Pred pred) {
  std::vector<Run> runs;
  int start = -1;
  for (int i = begin; i < end; ++i) {
    if (pred(i)) {
      if (start < 0) start = i;
    } else if (start >= 0) {
      runs.push_back({start, i});
      start = -1;
    }
  }
  if (start >= 0) runs.push_back({start, end});
  return runs;
}

}  // namespace detail

/// Minimum ink contrast (in normalized luminance) for a page to count as containing text.
inline constexpr double kMinInkContrast = 0.05;

/// Per-row stroke energy: summed horizontal intensity differences above a
/// floor of three noise sigmas or a fifth of the typical edge contrast
/// (upper decile of the per-row peak differences), whichever is larger. Smooth shading such as stains or illumination
/// gradients contributes almost nothing.
inline std::vector<double> ink_profile(const GrayImage& img) {
  if (img.empty()) throw InvalidInput("ink_profile: empty image");
  std::vector<double> profile(static_cast<std::size_t>(img.height()), 0.0);
  if (img.width() < 2) throw NoTextError("image too narrow for text");
  std::vector<double> diffs;
  diffs.reserve(img.size());
  for (int y = 0; y < img.height(); ++y) {
    auto r = img.row(y);
    for (int x = 1; x < img.width(); ++x) diffs.push_back(std::abs(r[x] - r[x - 1]));
  }
  const double noise = 3.0 * std::sqrt(2.0) * detail::noise_sigma(img);
  const std::size_t stride = static_cast<std::size_t>(img.width() - 1);
  std::vector<double> peaks;
  for (int y = 0; y < img.height(); ++y) {
    const auto first = diffs.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * stride);
    const double peak = *std::max_element(first, first + static_cast<std::ptrdiff_t>(stride));
    if (peak > noise) peaks.push_back(peak);
  }
  const double contrast = detail::quantile(std::move(peaks), 0.9);
  if (contrast - noise < kMinInkContrast) throw NoTextError("no strokes above background");
  const double floor = std::max(noise, 0.2 * contrast);
  for (int y = 0; y < img.height(); ++y) {
    const double* row = diffs.data() + static_cast<std::size_t>(y) * stride;
    for (std::size_t x = 0; x < stride; ++x) {
      if (row[x] > floor) profile[y] += row[x] - floor;
    }
  }
  return profile;
}

/// Core (x-height) estimate from the horizontal projection profile. Text-line
/// bands are maximal runs where the smoothed profile exceeds half its mean;
/// inside each band the core zone is the longest run at or above half the
/// band's peak ink, which drops sparse ascender and descender rows and does
/// not depend on how much blank space surrounds the line. Returns the
/// ink-weighted median core-zone height, so faint fragments barely count.
inline double estimate_core_height(const GrayImage& img) {
  const std::vector<double> raw = ink_profile(img);
  const int n = static_cast<int>(raw.size());
  const Kernel1D k = gaussian_kernel(1.0);
  std::vector<double> smooth(raw.size(), 0.0);
  for (int y = 0; y < n; ++y) {
    for (int t = -k.radius; t <= k.radius; ++t) smooth[y] += k.at(t) * raw[std::clamp(y - t, 0, n - 1)];
  }
  double mean = 0.0;
  for (double v : smooth) mean += v;
  mean /= static_cast<double>(n);
  if (mean <= 0.0) throw NoTextError("blank image: empty ink profile");

  std::vector<std::pair<double, double>> cores;  // (height, band ink)
  double total = 0.0;
  for (const auto& band : detail::runs_where(0, n, [&](int y) { return smooth[y] > 0.5 * mean; })) {
    if (band.length() < 2) continue;
    double mass = 0.0;
    for (int y = band.begin; y < band.end; ++y) mass += raw[y];
    const double level = 0.5 * *std::max_element(raw.begin() + band.begin, raw.begin() + band.end);
    detail::Run longest;
    for (const auto& run : detail::runs_where(band.begin, band.end, [&](int y) { return raw[y] >= level; })) {
      if (run.length() > longest.length()) longest = run;
    }
    if (longest.length() > 0 && mass > 0.0) {
      // Sub-row ends: linear crossing of the level between the edge rows.
      const auto crossing = [&](int inside, int outside) {
        if (outside < 0 || outside >= n) return 0.5;
        const double span = raw[inside] - raw[outside];
        return span > 0.0 ? std::clamp((raw[inside] - level) / span, 0.0, 1.0) : 0.5;
      };
      const double core = longest.length() - 1 + crossing(longest.begin, longest.begin - 1) +
                          crossing(longest.end - 1, longest.end);
      cores.emplace_back(core, mass);
      total += mass;
    }
  }
  if (cores.empty()) throw NoTextError("no text-line bands found");
  std::sort(cores.begin(), cores.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < cores.size(); ++i) {
    acc += cores[i].second;
    if (acc == 0.5 * total && i + 1 < cores.size()) return 0.5 * (cores[i].first + cores[i + 1].first);
    if (acc > 0.5 * total) return cores[i].first;
  }
  return cores.back().first;
}

struct PreprocessOptions {
  double fine_factor = 0.2;
  double coarse_factor = 2.0;
  double mask_threshold = 0.05;
  std::optional<double> sigma_fine;    // fixed override, pixels
  std::optional<double> sigma_coarse;  // fixed override, pixels
  std::optional<double> core_height;   // skip estimation when set

  PreprocessParams params_for(double core_height) const {
    PreprocessParams p = PreprocessParams::for_core_height(core_height, fine_factor, coarse_factor, mask_threshold);
    if (sigma_fine) p.sigma_fine = *sigma_fine;
    if (sigma_coarse) p.sigma_coarse = *sigma_coarse;
    return p;
  }

  void validate() const {
    require_param(fine_factor > 0.0 && coarse_factor > fine_factor, "preprocess factors must satisfy 0 < fine < coarse");
    require_param(mask_threshold >= 0.0 && mask_threshold <= 1.0, "mask_threshold must lie in [0,1]");
    if (sigma_fine) require_param(*sigma_fine > 0.0, "sigma_fine must be > 0");
    if (sigma_coarse) require_param(*sigma_coarse > 0.0, "sigma_coarse must be > 0");
    if (sigma_fine && sigma_coarse) require_param(*sigma_coarse > *sigma_fine, "sigma_coarse must exceed sigma_fine");
    if (core_height) require_param(*core_height > 0.0, "core_height must be > 0");
  }
};

struct PreparedImage {
  GrayImage cleaned;
  double core_height = 0.0;
};

/// Bootstrap pipeline: estimate core height on the raw image, clean with bands
/// tied to it, then refine the estimate on the cleaned image.
/// Throws NoTextError when the raw image holds no ink.
inline PreparedImage prepare_image(const GrayImage& raw, const PreprocessOptions& opt) {
  opt.validate();
  if (opt.core_height) {
    return {remove_background(raw, opt.params_for(*opt.core_height)), *opt.core_height};
  }
  const double bootstrap = estimate_core_height(raw);
  PreparedImage out{remove_background(raw, opt.params_for(bootstrap)), bootstrap};
  try {
    out.core_height = estimate_core_height(out.cleaned);
  } catch (const NoTextError&) {
    // keep the bootstrap estimate
  }
  return out;
}

}  // namespace rlf
