// rlf: command-line front end for the word spotting pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rlf/rlf.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitProcessing = 2;

// Thrown for problems that are the caller's fault and map to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config keys exposed as --dashed-name flags on a subcommand.
struct ConfigFlags {
  std::optional<std::string> file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value settings file (flags override it)");
    for (const auto& k : rlf::config_keys()) {
      std::string flag = k.name;
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd->add_option("--" + flag, values[k.name], k.help)->group("Pipeline settings");
    }
  }

  rlf::RunConfig resolve(const CLI::App* cmd) const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& k : rlf::config_keys()) {
      std::string flag = k.name;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (cmd->count("--" + flag) > 0) overrides.emplace_back(k.name, values.at(k.name));
    }
    try {
      return rlf::resolve_config(file ? std::optional<fs::path>(*file) : std::nullopt, overrides);
    } catch (const rlf::Error& e) {
      throw UsageError(e.what());
    }
  }
};

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rlf::IoError("cannot write '" + path + "'");
  return out;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::vector<fs::path> list_pages(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw rlf::IoError("corpus directory not found: " + dir.string());
  std::vector<fs::path> pages;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) pages.push_back(e.path());
  }
  std::sort(pages.begin(), pages.end());
  return pages;
}

std::optional<fs::path> default_cache_dir(const std::optional<std::string>& flag) {
  if (flag) return fs::path(*flag);
  if (const char* env = std::getenv("RLF_CACHE_DIR"); env != nullptr && *env != '\0') return fs::path(env);
  return std::nullopt;
}

// ---- subcommands -------------------------------------------------------------

struct PreprocessCmd {
  std::string input, output;
  ConfigFlags cfg;

  int run(const CLI::App* cmd) const {
    const rlf::RunConfig c = cfg.resolve(cmd);
    const rlf::GrayImage raw = rlf::load_gray(input);
    const rlf::PreparedImage prep = rlf::prepare_image(raw, c.spot.preprocess);
    rlf::save_gray(prep.cleaned, output);
    std::cerr << "core height " << prep.core_height << " px\n";
    return 0;
  }
};

struct DetectCmd {
  std::string input, output;
  ConfigFlags cfg;

  int run(const CLI::App* cmd) const {
    const rlf::RunConfig c = cfg.resolve(cmd);
    const rlf::Features f = rlf::extract_features(rlf::load_gray(input), c.spot);
    if (output.empty()) {
      rlf::io::write_keypoints_jsonl(std::cout, f.keypoints);
    } else {
      auto out = open_output(output);
      rlf::io::write_keypoints_jsonl(out, f.keypoints);
    }
    std::cerr << f.keypoints.size() << " keypoints, core height " << f.core_height << " px\n";
    return 0;
  }
};

struct DescribeCmd {
  std::string input, output, binary;
  ConfigFlags cfg;

  int run(const CLI::App* cmd) const {
    const rlf::RunConfig c = cfg.resolve(cmd);
    const rlf::Features f = rlf::extract_features(rlf::load_gray(input), c.spot);
    if (output.empty()) {
      rlf::io::write_descriptors_jsonl(std::cout, f.keypoints, f.descriptors);
    } else {
      auto out = open_output(output);
      rlf::io::write_descriptors_jsonl(out, f.keypoints, f.descriptors);
    }
    if (!binary.empty()) {
      auto out = open_output(binary);
      rlf::io::write_descriptor_binary(out, f.descriptors);
    }
    std::cerr << f.descriptors.size() << " descriptors\n";
    return 0;
  }
};

struct SpotCmd {
  std::string query, corpus, output, query_id, render_dir;
  std::optional<std::string> cache_dir;
  ConfigFlags cfg;

  int run(const CLI::App* cmd) const {
    const rlf::RunConfig c = cfg.resolve(cmd);
    const std::string qid = query_id.empty() ? fs::path(query).stem().string() : query_id;
    const rlf::Query q = rlf::prepare_query(rlf::load_gray(query), c.spot);
    const std::vector<fs::path> paths = list_pages(corpus);
    const auto cache = default_cache_dir(cache_dir);

    std::vector<std::optional<rlf::PageIndex>> slots(paths.size());
    std::vector<std::string> warnings(paths.size());
    rlf::parallel_for(paths.size(), c.jobs, [&](std::size_t i) {
      const std::string id = paths[i].stem().string();
      try {
        const rlf::GrayImage page = rlf::load_gray(paths[i]);
        slots[i] = cache ? rlf::io::cached_page_index(paths[i], page, id, c.spot, *cache)
                         : rlf::build_page_index(page, id, c.spot);
      } catch (const rlf::IoError& e) {
        warnings[i] = e.what();
      } catch (const rlf::FormatError& e) {
        warnings[i] = e.what();
      } catch (const rlf::InvalidInput& e) {
        warnings[i] = e.what();
      }
    });
    std::vector<rlf::PageIndex> pages;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (!warnings[i].empty()) std::cerr << "warning: skipping " << paths[i].string() << ": " << warnings[i] << '\n';
      if (slots[i]) pages.push_back(std::move(*slots[i]));
    }
    if (pages.empty()) throw rlf::InvalidInput("no readable pages in " + corpus);

    const auto results = rlf::spot(q, pages, c.spot, c.jobs);
    std::ofstream file;
    if (!output.empty()) file = open_output(output);
    std::ostream& os = output.empty() ? std::cout : file;
    for (const auto& r : results) rlf::io::write_result_jsonl(os, {qid, r.page_id, r.bbox, r.score});

    if (!render_dir.empty()) render(results, paths);
    std::cerr << results.size() << " candidates over " << pages.size() << " pages\n";
    return 0;
  }

  void render(const std::vector<rlf::CandidateRegion>& results, const std::vector<fs::path>& paths) const {
    fs::create_directories(render_dir);
    for (const auto& path : paths) {
      const std::string id = path.stem().string();
      std::vector<rlf::OverlayRegion> regions;
      for (const auto& r : results) {
        if (r.page_id == id) regions.push_back({r.bbox, r.score});
      }
      if (regions.empty()) continue;
      const auto overlay = rlf::render_overlay(rlf::load_gray(path), regions);
      for (const auto& w : overlay.warnings) std::cerr << "warning: " << id << ": " << w << '\n';
      rlf::save_gray(overlay.image, fs::path(render_dir) / (id + ".png"));
    }
  }
};

struct EvaluateCmd {
  std::string results, groundtruth, output;
  bool iou = false;

  int run() const {
    std::ifstream rin(results);
    if (!rin) throw rlf::IoError("cannot read '" + results + "'");
    std::ifstream gin(groundtruth);
    if (!gin) throw rlf::IoError("cannot read '" + groundtruth + "'");
    const auto records = rlf::io::read_results_jsonl(rin, results);
    const auto gts = rlf::io::read_ground_truth_jsonl(gin, groundtruth);

    // Queries come from the results; with no results every gt label is a query.
    std::vector<rlf::QueryRanking> queries;
    std::map<std::string, std::size_t> slot;
    auto query_for = [&](const std::string& id) -> rlf::QueryRanking& {
      auto [it, fresh] = slot.emplace(id, queries.size());
      if (fresh) queries.push_back({id, {}});
      return queries[it->second];
    };
    for (const auto& r : records) query_for(r.query_id).ranked.push_back({r.page_id, r.bbox, r.score});
    if (records.empty()) {
      std::set<std::string> labels;
      for (const auto& g : gts) labels.insert(g.label);
      for (const auto& label : labels) query_for(label);
    }
    for (auto& q : queries) {
      std::stable_sort(q.ranked.begin(), q.ranked.end(),
                       [](const rlf::RankedRegion& a, const rlf::RankedRegion& b) { return a.score > b.score; });
    }

    const auto report =
        rlf::evaluate(queries, gts, iou ? rlf::OverlapRule::IoU : rlf::OverlapRule::GroundTruthArea);
    const std::string json = rlf::io::report_json(report).dump(2);
    if (output.empty()) {
      std::cout << json << '\n';
    } else {
      open_output(output) << json << '\n';
    }
    std::cerr << rlf::io::report_table(report);
    for (const auto& id : report.undefined_queries()) std::cerr << "note: query '" << id << "' has no relevant ground truth\n";
    return 0;
  }
};

struct SynthCmd {
  std::string spec, output_dir;

  int run() const {
    rlf::synth::SyntheticSpec s;
    try {
      s = rlf::io::read_synth_spec(spec);
    } catch (const rlf::Error& e) {
      throw UsageError(e.what());
    }
    const rlf::synth::SyntheticCorpus corpus = rlf::synth::generate_corpus(s);
    const fs::path root(output_dir);
    fs::create_directories(root / "pages");
    fs::create_directories(root / "queries");
    for (const auto& p : corpus.pages) rlf::save_gray(p.image, root / "pages" / (p.page_id + ".png"));
    {
      auto out = open_output((root / "groundtruth.jsonl").string());
      rlf::io::write_ground_truth_jsonl(out, corpus.ground_truth);
    }
    std::set<std::string> words;
    for (const auto& p : s.planted) words.insert(p.text);
    for (const auto& w : words) rlf::save_gray(rlf::synth::render_query(w, s.x_height), root / "queries" / (w + ".png"));
    std::cerr << corpus.pages.size() << " pages, " << corpus.ground_truth.size() << " ground-truth boxes\n";
    return 0;
  }
};

struct RenderCmd {
  std::string image, results, output, page_id, query_id;

  int run() const {
    std::ifstream rin(results);
    if (!rin) throw rlf::IoError("cannot read '" + results + "'");
    const std::string page = page_id.empty() ? fs::path(image).stem().string() : page_id;
    std::vector<rlf::OverlayRegion> regions;
    for (const auto& r : rlf::io::read_results_jsonl(rin, results)) {
      if (r.page_id == page && (query_id.empty() || r.query_id == query_id)) regions.push_back({r.bbox, r.score});
    }
    const auto overlay = rlf::render_overlay(rlf::load_gray(image), regions);
    for (const auto& w : overlay.warnings) std::cerr << "warning: " << w << '\n';
    rlf::save_gray(overlay.image, output);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation-free word spotting with radial line Fourier descriptors"};
  app.require_subcommand(1);

  PreprocessCmd pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Remove background and write the cleaned image");
  pre_cmd->add_option("input", pre.input, "page image")->required();
  pre_cmd->add_option("-o,--output", pre.output, "cleaned image (.png or netpbm)")->required();
  pre.cfg.attach(pre_cmd);

  DetectCmd det;
  auto* det_cmd = app.add_subcommand("detect", "Detect keypoints and print them as JSON lines");
  det_cmd->add_option("input", det.input, "page or word image")->required();
  det_cmd->add_option("-o,--output", det.output, "JSON lines file (default stdout)");
  det.cfg.attach(det_cmd);

  DescribeCmd desc;
  auto* desc_cmd = app.add_subcommand("describe", "Detect keypoints and print their descriptors as JSON lines");
  desc_cmd->add_option("input", desc.input, "page or word image")->required();
  desc_cmd->add_option("-o,--output", desc.output, "JSON lines file (default stdout)");
  desc_cmd->add_option("--binary", desc.binary, "also write the binary descriptor file");
  desc.cfg.attach(desc_cmd);

  SpotCmd spot;
  auto* spot_cmd = app.add_subcommand("spot", "Search a directory of pages for a query word image");
  spot_cmd->add_option("query", spot.query, "query word image")->required();
  spot_cmd->add_option("corpus", spot.corpus, "directory of page images")->required();
  spot_cmd->add_option("-o,--output", spot.output, "results JSON lines (default stdout)");
  spot_cmd->add_option("--query-id", spot.query_id, "id written to results (default: query file stem)");
  spot_cmd->add_option("--cache-dir", spot.cache_dir, "page index cache directory (default $RLF_CACHE_DIR)");
  spot_cmd->add_option("--render-dir", spot.render_dir, "write result overlays per page here");
  spot.cfg.attach(spot_cmd);

  EvaluateCmd eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score results against ground truth (mAP)");
  eval_cmd->add_option("results", eval.results, "results JSON lines")->required();
  eval_cmd->add_option("groundtruth", eval.groundtruth, "ground-truth JSON lines")->required();
  eval_cmd->add_option("-o,--output", eval.output, "report JSON file (default stdout)");
  eval_cmd->add_flag("--iou", eval.iou, "count a hit by intersection over union instead of ground-truth coverage");

  SynthCmd syn;
  auto* syn_cmd = app.add_subcommand("synth", "Generate a synthetic corpus from a JSON description");
  syn_cmd->add_option("spec", syn.spec, "JSON corpus description")->required();
  syn_cmd->add_option("output_dir", syn.output_dir, "output directory")->required();

  RenderCmd ren;
  auto* ren_cmd = app.add_subcommand("render", "Draw ranked results onto a page image");
  ren_cmd->add_option("image", ren.image, "page image")->required();
  ren_cmd->add_option("results", ren.results, "results JSON lines")->required();
  ren_cmd->add_option("-o,--output", ren.output, "overlay image")->required();
  ren_cmd->add_option("--page", ren.page_id, "page id in the results (default: image file stem)");
  ren_cmd->add_option("--query-id", ren.query_id, "only draw results of this query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (pre_cmd->parsed()) return pre.run(pre_cmd);
    if (det_cmd->parsed()) return det.run(det_cmd);
    if (desc_cmd->parsed()) return desc.run(desc_cmd);
    if (spot_cmd->parsed()) return spot.run(spot_cmd);
    if (eval_cmd->parsed()) return eval.run();
    if (syn_cmd->parsed()) return syn.run();
    if (ren_cmd->parsed()) return ren.run();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProcessing;
  }
  return kExitUsage;
}
