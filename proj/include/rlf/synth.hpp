#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rlf/error.hpp"
#include "rlf/eval.hpp"
#include "rlf/image.hpp"

// Synthetic handwriting-like pages for desk-scale experiments: a small
// stroke font, word rendering with anti-aliased strokes, and seeded page
// layout with planted words, distractors and degradations.
namespace rlf::synth {

/// Glyph geometry in x-height units: baseline at y = 0, y grows upward,
/// ascenders reach 1.7 and descenders -0.6.
struct Glyph {
  std::vector<std::vector<Point2>> strokes;
  double advance = 1.0;
};

namespace detail {

inline std::vector<Point2> arc(double cx, double cy, double rx, double ry, double deg0, double deg1, int n = 24) {
  std::vector<Point2> pts;
  for (int i = 0; i <= n; ++i) {
    const double t = (deg0 + (deg1 - deg0) * i / n) * std::numbers::pi / 180.0;
    pts.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return pts;
}

inline std::vector<Point2> bowl(double cx) { return arc(cx, 0.5, 0.34, 0.5, 0.0, 360.0, 32); }

inline std::vector<Point2> line(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y1}}; }

inline std::vector<Point2> arch(double x0, double w) {
  return {{x0, 0.55}, {x0 + 0.12 * w, 0.85}, {x0 + 0.45 * w, 1.0}, {x0 + 0.8 * w, 0.9}, {x0 + w, 0.65}, {x0 + w, 0.0}};
}

inline std::map<char, Glyph> build_font() {
  std::map<char, Glyph> f;
  f['a'] = {{bowl(0.4), line(0.78, 1.0, 0.78, 0.0)}, 1.0};
  f['b'] = {{line(0.06, 1.7, 0.06, 0.0), arc(0.42, 0.5, 0.36, 0.5, 0.0, 360.0, 32)}, 0.9};
  f['c'] = {{arc(0.4, 0.5, 0.34, 0.5, 40.0, 320.0)}, 0.8};
  f['d'] = {{bowl(0.4), line(0.78, 1.7, 0.78, 0.0)}, 1.0};
  {
    auto e = arc(0.4, 0.5, 0.34, 0.5, 0.0, 320.0);
    e.insert(e.begin(), Point2{0.06, 0.5});
    f['e'] = {{e}, 0.9};
  }
  f['f'] = {{{{0.62, 1.55}, {0.48, 1.68}, {0.32, 1.65}, {0.24, 1.45}, {0.24, 0.0}}, line(0.0, 1.0, 0.52, 1.0)}, 0.7};
  {
    std::vector<Point2> tail{{0.76, 1.0}, {0.76, -0.35}};
    auto hook = arc(0.46, -0.35, 0.3, 0.22, 0.0, -170.0, 12);
    tail.insert(tail.end(), hook.begin() + 1, hook.end());
    f['g'] = {{bowl(0.4), tail}, 1.0};
  }
  f['h'] = {{line(0.06, 1.7, 0.06, 0.0), arch(0.06, 0.62)}, 0.85};
  f['i'] = {{line(0.12, 1.0, 0.12, 0.0), line(0.12, 1.32, 0.12, 1.4)}, 0.4};
  {
    std::vector<Point2> stem{{0.3, 1.0}, {0.3, -0.35}};
    auto hook = arc(0.1, -0.35, 0.2, 0.2, 0.0, -170.0, 10);
    stem.insert(stem.end(), hook.begin() + 1, hook.end());
    f['j'] = {{stem, line(0.3, 1.32, 0.3, 1.4)}, 0.5};
  }
  f['k'] = {{line(0.06, 1.7, 0.06, 0.0), {{0.6, 1.0}, {0.06, 0.42}, {0.64, 0.0}}}, 0.8};
  f['l'] = {{line(0.12, 1.7, 0.12, 0.0)}, 0.4};
  f['m'] = {{line(0.06, 1.0, 0.06, 0.0), arch(0.06, 0.5), arch(0.56, 0.5)}, 1.25};
  f['n'] = {{line(0.06, 1.0, 0.06, 0.0), arch(0.06, 0.62)}, 0.85};
  f['o'] = {{arc(0.42, 0.5, 0.36, 0.5, 0.0, 360.0, 32)}, 0.9};
  f['p'] = {{line(0.06, 1.0, 0.06, -0.6), arc(0.42, 0.5, 0.36, 0.5, 0.0, 360.0, 32)}, 0.9};
  f['q'] = {{bowl(0.4), line(0.78, 1.0, 0.78, -0.6)}, 1.0};
  f['r'] = {{line(0.06, 1.0, 0.06, 0.0), {{0.06, 0.6}, {0.2, 0.88}, {0.4, 1.0}, {0.58, 0.95}}}, 0.7};
  f['s'] = {{{{0.62, 0.88}, {0.48, 1.0}, {0.22, 1.0}, {0.06, 0.86}, {0.1, 0.66}, {0.32, 0.55}, {0.54, 0.44},
              {0.64, 0.24}, {0.54, 0.05}, {0.32, 0.0}, {0.12, 0.04}, {0.02, 0.16}}},
            0.75};
  f['t'] = {{{{0.24, 1.4}, {0.24, 0.18}, {0.32, 0.03}, {0.5, 0.0}}, line(0.0, 1.0, 0.5, 1.0)}, 0.6};
  f['u'] = {{{{0.06, 1.0}, {0.06, 0.35}, {0.14, 0.1}, {0.34, 0.0}, {0.56, 0.1}, {0.68, 0.35}}, line(0.68, 1.0, 0.68, 0.0)},
            0.85};
  f['v'] = {{{{0.0, 1.0}, {0.38, 0.0}, {0.76, 1.0}}}, 0.85};
  f['w'] = {{{{0.0, 1.0}, {0.28, 0.0}, {0.55, 0.8}, {0.82, 0.0}, {1.1, 1.0}}}, 1.2};
  f['x'] = {{line(0.0, 1.0, 0.66, 0.0), line(0.66, 1.0, 0.0, 0.0)}, 0.8};
  f['y'] = {{line(0.0, 1.0, 0.38, 0.05), {{0.76, 1.0}, {0.22, -0.52}, {0.02, -0.5}}}, 0.85};
  f['z'] = {{{{0.04, 1.0}, {0.64, 1.0}, {0.04, 0.0}, {0.68, 0.0}}}, 0.8};
  return f;
}

inline double segment_distance(double px, double py, const Point2& a, const Point2& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

inline const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = detail::build_font();
  return f;
}

inline constexpr double kLetterSpacing = 0.35;
inline constexpr double kStrokeWidth = 0.15;

/// Ink coverage raster of a word (0 = paper, 1 = full ink). The word's
/// baseline sits at `baseline` pixels from the top; x-height is `x_height`
/// pixels. Characters outside a-z are rendered as spaces.
struct WordRaster {
  GrayImage coverage;
  BBox ink_box;  // tight box of coverage >= 0.25, in raster coordinates
};

inline WordRaster render_word(const std::string& text, double x_height, double margin = 0.5) {
  require_param(x_height > 2.0, "render_word: x-height must exceed 2 px");
  const auto& glyphs = font();
  std::vector<std::pair<Point2, Point2>> segments;
  double pen = 0.0;
  for (char ch : text) {
    auto it = glyphs.find(ch);
    if (it == glyphs.end()) {
      pen += 0.6 + kLetterSpacing;
      continue;
    }
    for (const auto& stroke : it->second.strokes) {
      for (std::size_t i = 1; i < stroke.size(); ++i) {
        segments.push_back({{pen + stroke[i - 1].x, stroke[i - 1].y}, {pen + stroke[i].x, stroke[i].y}});
      }
    }
    pen += it->second.advance + kLetterSpacing;
  }
  const double half = 0.5 * kStrokeWidth * x_height;
  const double top_units = 1.7 + margin, bottom_units = 0.6 + margin;
  const int width = static_cast<int>(std::ceil((pen - kLetterSpacing + 2.0 * margin) * x_height)) + 2;
  const int height = static_cast<int>(std::ceil((top_units + bottom_units) * x_height)) + 2;
  WordRaster out{GrayImage(std::max(1, width), height, 0.0), {}};
  const double ox = margin * x_height + 1.0;
  const double baseline = top_units * x_height + 1.0;

  for (const auto& [a0, b0] : segments) {
    const Point2 a{ox + a0.x * x_height, baseline - a0.y * x_height};
    const Point2 b{ox + b0.x * x_height, baseline - b0.y * x_height};
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half - 1)));
    const int x1 = std::min(out.coverage.width() - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + half + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half - 1)));
    const int y1 = std::min(out.coverage.height() - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + half + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double cov = std::clamp(half + 0.5 - detail::segment_distance(x, y, a, b), 0.0, 1.0);
        out.coverage(x, y) = std::max(out.coverage(x, y), cov);
      }
    }
  }

  int bx0 = out.coverage.width(), by0 = out.coverage.height(), bx1 = -1, by1 = -1;
  for (int y = 0; y < out.coverage.height(); ++y) {
    for (int x = 0; x < out.coverage.width(); ++x) {
      if (out.coverage(x, y) < 0.25) continue;
      bx0 = std::min(bx0, x);
      by0 = std::min(by0, y);
      bx1 = std::max(bx1, x);
      by1 = std::max(by1, y);
    }
  }
  out.ink_box = bx1 < 0 ? BBox{0, 0, 1, 1} : BBox{bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1};
  return out;
}

inline constexpr double kPaperLevel = 0.88;
inline constexpr double kInkLevel = 0.18;

/// A clean query exemplar: the word on plain paper.
inline GrayImage render_query(const std::string& text, double x_height, double margin = 0.5) {
  const WordRaster w = render_word(text, x_height, margin);
  GrayImage img(w.coverage.width(), w.coverage.height(), kPaperLevel);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.pixels()[i] = kPaperLevel - (kPaperLevel - kInkLevel) * w.coverage.pixels()[i];
  }
  return img;
}

struct PlantedWord {
  std::string text;
  int count = 1;
};

struct SyntheticSpec {
  int page_width = 1200;
  int page_height = 900;
  int pages = 1;
  double x_height = 20.0;
  std::vector<PlantedWord> planted;
  int distractors = 0;
  std::vector<std::string> lexicon;  // distractor vocabulary; built-in list when empty
  double scale_jitter = 0.0;         // instance scale drawn from [1 - j, 1 + j]
  double contrast_jitter = 0.0;      // ink contrast drawn from [1 - j, 1 + j] x nominal
  double noise_sigma = 0.0;
  int stains = 0;
  double background_gradient = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    require_param(page_width > 0 && page_height > 0, "page size must be positive");
    require_param(pages >= 1, "need at least one page");
    require_param(x_height > 2.0, "x_height must exceed 2 px");
    for (const auto& p : planted) {
      require_param(!p.text.empty() && p.count >= 0, "planted words need text and a non-negative count");
    }
    require_param(distractors >= 0 && stains >= 0, "counts must be >= 0");
    require_param(scale_jitter >= 0.0 && scale_jitter < 1.0, "scale_jitter must lie in [0,1)");
    require_param(contrast_jitter >= 0.0 && contrast_jitter < 1.0, "contrast_jitter must lie in [0,1)");
    require_param(noise_sigma >= 0.0 && background_gradient >= 0.0, "noise and gradient must be >= 0");
  }
};

inline const std::vector<std::string>& default_lexicon() {
  static const std::vector<std::string> words{
      "mode",   "river",  "sound",   "quick",  "cover",   "wrung",   "vox",    "crow",   "jury",   "size",
      "moon",   "rune",   "zero",    "grove",  "queen",   "spruce",  "wax",    "comer",  "verse",  "onus",
      "mercy",  "sum",    "yours",   "zone",   "wove",    "coin",    "ocean",  "summer", "groups", "venom",
      "norm",   "sync",   "curious", "mower",  "scorn",   "gum",     "ruse",   "envy",   "nerve",  "rescue",
  };
  return words;
}

struct SyntheticPage {
  std::string page_id;
  GrayImage image;
};

struct SyntheticCorpus {
  std::vector<SyntheticPage> pages;
  std::vector<GroundTruthEntry> ground_truth;  // planted words only
};

/// Seeded corpus generation: words are shuffled across pages and laid out
/// in text lines; planted instances get ground-truth boxes.
inline SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  struct Instance {
    std::string text;
    bool planted = false;
  };
  std::vector<Instance> words;
  for (const auto& p : spec.planted) {
    for (int i = 0; i < p.count; ++i) words.push_back({p.text, true});
  }
  const auto& lexicon = spec.lexicon.empty() ? default_lexicon() : spec.lexicon;
  for (int i = 0; i < spec.distractors; ++i) {
    words.push_back({lexicon[std::uniform_int_distribution<std::size_t>(0, lexicon.size() - 1)(rng)], false});
  }
  std::shuffle(words.begin(), words.end(), rng);

  std::vector<std::vector<Instance>> per_page(static_cast<std::size_t>(spec.pages));
  for (std::size_t i = 0; i < words.size(); ++i) per_page[i % per_page.size()].push_back(words[i]);

  SyntheticCorpus corpus;
  const double xh = spec.x_height;
  for (int p = 0; p < spec.pages; ++p) {
    char name[32];
    std::snprintf(name, sizeof(name), "page_%03d", p);
    GrayImage img(spec.page_width, spec.page_height, kPaperLevel);
    const double gx = uniform(-1.0, 1.0), gy = uniform(-1.0, 1.0);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const double u = (x / static_cast<double>(img.width()) - 0.5) * gx + (y / static_cast<double>(img.height()) - 0.5) * gy;
        img(x, y) += spec.background_gradient * u;
      }
    }
    for (int s = 0; s < spec.stains; ++s) {
      const double cx = uniform(0, img.width()), cy = uniform(0, img.height());
      const double radius = uniform(2.0, 5.0) * xh, depth = uniform(0.05, 0.15);
      const int x0 = std::max(0, static_cast<int>(cx - 3 * radius)), x1 = std::min(img.width() - 1, static_cast<int>(cx + 3 * radius));
      const int y0 = std::max(0, static_cast<int>(cy - 3 * radius)), y1 = std::min(img.height() - 1, static_cast<int>(cy + 3 * radius));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
          img(x, y) -= depth * std::exp(-0.5 * d2);
        }
      }
    }

    const int left = static_cast<int>(std::round(1.5 * xh));
    const double line_pitch = 3.6 * xh;
    double pen_x = left;
    double line_top = 1.0 * xh;
    for (const Instance& inst : per_page[p]) {
      const double scale = spec.scale_jitter > 0.0 ? uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter) : 1.0;
      const double contrast =
          spec.contrast_jitter > 0.0 ? uniform(1.0 - spec.contrast_jitter, 1.0 + spec.contrast_jitter) : 1.0;
      const WordRaster w = render_word(inst.text, xh * scale);
      if (pen_x + w.coverage.width() > img.width() - left) {
        pen_x = left;
        line_top += line_pitch;
      }
      if (line_top + w.coverage.height() > img.height()) {
        throw InvalidParameter("synthetic page too small for its words; enlarge pages or reduce word counts");
      }
      const int ox = static_cast<int>(pen_x);
      // Align baselines across scales: raster baseline sits (1.7 + 0.5) * x-height below its top.
      const int oy = static_cast<int>(std::round(line_top + 2.2 * xh - 2.2 * xh * scale));
      const double ink = (kPaperLevel - kInkLevel) * std::min(contrast, kPaperLevel / (kPaperLevel - kInkLevel));
      for (int y = 0; y < w.coverage.height(); ++y) {
        for (int x = 0; x < w.coverage.width(); ++x) {
          const double c = w.coverage(x, y);
          if (c > 0.0 && img.contains(ox + x, oy + y)) img(ox + x, oy + y) -= ink * c;
        }
      }
      if (inst.planted) {
        corpus.ground_truth.push_back(
            {name, BBox{ox + w.ink_box.x, oy + w.ink_box.y, w.ink_box.w, w.ink_box.h}, inst.text});
      }
      pen_x += w.coverage.width() + uniform(0.6, 1.4) * xh;
    }

    if (spec.noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (double& v : img.pixels()) v += noise(rng);
    }
    for (double& v : img.pixels()) v = std::clamp(v, 0.0, 1.0);
    corpus.pages.push_back({name, std::move(img)});
  }
  return corpus;
}

}  // namespace rlf::synth
