#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "rlf/eval.hpp"
#include "rlf/formats.hpp"
#include "rlf/imageio.hpp"
#include "rlf/synth.hpp"
#include "support.hpp"

using namespace rlf;
namespace fs = std::filesystem;
namespace fx = rlf::fixtures;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
  double seconds = 0.0;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

CliRun rlf_cli(const std::vector<std::string>& args, const fs::path& dir, const std::string& env = {}) {
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += quoted(RLF_CLI_PATH);
  for (const auto& a : args) cmd += " " + quoted(a);
  cmd += " >" + quoted((dir / "stdout.txt").string()) + " 2>" + quoted((dir / "stderr.txt").string());
  const auto t0 = std::chrono::steady_clock::now();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Synthesizes a corpus with `rlf synth` under dir/corpus.
fs::path synth_corpus(const fs::path& dir, const std::string& spec_json) {
  write_text(dir / "spec.json", spec_json);
  const CliRun r = rlf_cli({"synth", (dir / "spec.json").string(), (dir / "corpus").string()}, dir);
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "corpus";
}

const char* kOnePlant =
    R"({"page_width": 700, "page_height": 320, "planted": [{"text": "bentham", "count": 1}],
        "distractors": 6, "seed": 4})";

}  // namespace

TEST(CliBasics, NoSubcommandIsAUsageError) {
  const auto dir = fx::scratch_dir("cli_usage");
  EXPECT_EQ(rlf_cli({}, dir).code, 1);
  EXPECT_EQ(rlf_cli({"frobnicate"}, dir).code, 1);
  EXPECT_EQ(rlf_cli({"--help"}, dir).code, 0);
}

TEST(CliPreprocess, WritesOutputAndExitsZero) {
  const auto dir = fx::scratch_dir("cli_pre");
  const auto corpus = synth_corpus(dir, kOnePlant);
  const auto page = corpus / "pages" / "page_000.png";
  const CliRun r = rlf_cli({"preprocess", page.string(), "-o", (dir / "clean.png").string()}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const GrayImage cleaned = load_gray(dir / "clean.png");
  EXPECT_EQ(cleaned.width(), 700);
  EXPECT_EQ(cleaned.height(), 320);
}

TEST(CliPreprocess, MissingInputFailsWithDiagnostic) {
  const auto dir = fx::scratch_dir("cli_pre_missing");
  const CliRun r = rlf_cli({"preprocess", (dir / "nope.png").string(), "-o", (dir / "x.png").string()}, dir);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "x.png"));
}

TEST(CliPreprocess, InvalidSettingFailsBeforeProcessing) {
  const auto dir = fx::scratch_dir("cli_pre_sigma");
  const CliRun r =
      rlf_cli({"preprocess", (dir / "nope.png").string(), "-o", (dir / "x.png").string(), "--sigma-fine", "0"}, dir);
  // Exit 1 rather than the missing-file exit 2 shows validation ran first.
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("sigma"), std::string::npos) << r.err;
}

TEST(CliConfig, FlagBeatsFileBeatsDefault) {
  const auto dir = fx::scratch_dir("cli_cfg");
  write_text(dir / "bad.cfg", "sigma_fine = 0\n");
  write_text(dir / "ok.cfg", "sigma_fine = 2\n");
  const std::string missing = (dir / "nope.png").string();
  const std::string out = (dir / "x.png").string();
  // Validation failures exit 1; a valid config reaches the missing file and exits 2.
  EXPECT_EQ(rlf_cli({"preprocess", missing, "-o", out}, dir).code, 2);
  EXPECT_EQ(rlf_cli({"preprocess", missing, "-o", out, "--config", (dir / "bad.cfg").string()}, dir).code, 1);
  EXPECT_EQ(
      rlf_cli({"preprocess", missing, "-o", out, "--config", (dir / "bad.cfg").string(), "--sigma-fine", "2"}, dir).code,
      2);
  EXPECT_EQ(
      rlf_cli({"preprocess", missing, "-o", out, "--config", (dir / "ok.cfg").string(), "--sigma-fine", "0"}, dir).code,
      1);
  write_text(dir / "typo.cfg", "sigma_fine = 2\nsigma_fnie = 3\n");
  const CliRun typo = rlf_cli({"preprocess", missing, "-o", out, "--config", (dir / "typo.cfg").string()}, dir);
  EXPECT_EQ(typo.code, 1);
  EXPECT_NE(typo.err.find(":2"), std::string::npos) << typo.err;
}

TEST(CliSynth, SameSpecTwiceIsBitIdentical) {
  const auto a = fx::scratch_dir("cli_synth_a");
  const auto b = fx::scratch_dir("cli_synth_b");
  const std::string spec = R"({"page_width": 500, "page_height": 300, "pages": 2,
      "planted": [{"text": "ocean", "count": 2}], "distractors": 5, "noise_sigma": 0.02, "stains": 2, "seed": 11})";
  const auto ca = synth_corpus(a, spec);
  const auto cb = synth_corpus(b, spec);
  for (const char* rel : {"pages/page_000.png", "pages/page_001.png", "groundtruth.jsonl", "queries/ocean.png"}) {
    ASSERT_TRUE(fs::exists(ca / rel)) << rel;
    EXPECT_EQ(slurp(ca / rel), slurp(cb / rel)) << rel;
  }
}

TEST(CliSynth, ThreePlacementsGiveThreeEntries) {
  const auto dir = fx::scratch_dir("cli_synth_three");
  const auto corpus = synth_corpus(
      dir, R"({"page_width": 800, "page_height": 400, "planted": [{"text": "mercy", "count": 3}], "distractors": 4, "seed": 2})");
  std::ifstream in(corpus / "groundtruth.jsonl");
  const auto gts = io::read_ground_truth_jsonl(in);
  ASSERT_EQ(gts.size(), 3u);
  for (const auto& g : gts) EXPECT_EQ(g.label, "mercy");
}

TEST(CliSynth, ZeroPlacementsGiveBlankPagesAndEmptyGroundTruth) {
  const auto dir = fx::scratch_dir("cli_synth_zero");
  const auto corpus = synth_corpus(dir, R"({"page_width": 200, "page_height": 120, "pages": 2, "seed": 5})");
  EXPECT_EQ(slurp(corpus / "groundtruth.jsonl"), "");
  for (const char* p : {"page_000.png", "page_001.png"}) {
    const GrayImage page = load_gray(corpus / "pages" / p);
    double lo = 1.0, hi = 0.0;
    for (double v : page.pixels()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_LT(hi - lo, 1e-9) << p;
  }
}

TEST(CliSynth, UnknownKeyIsAUsageError) {
  const auto dir = fx::scratch_dir("cli_synth_bad");
  write_text(dir / "spec.json", R"({"pagez": 2})");
  const CliRun r = rlf_cli({"synth", (dir / "spec.json").string(), (dir / "out").string()}, dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("pagez"), std::string::npos);
}

TEST(CliEvaluate, PerfectResultsScoreOne) {
  const auto dir = fx::scratch_dir("cli_eval_perfect");
  const std::vector<GroundTruthEntry> gts{{"p0", {10, 10, 40, 20}, "alpha"}, {"p1", {5, 50, 30, 20}, "alpha"},
                                          {"p0", {100, 10, 30, 20}, "beta"}};
  {
    std::ofstream g(dir / "gt.jsonl");
    io::write_ground_truth_jsonl(g, gts);
    std::ofstream r(dir / "res.jsonl");
    io::write_result_jsonl(r, {"alpha", "p0", {10, 10, 40, 20}, 0.9});
    io::write_result_jsonl(r, {"alpha", "p1", {5, 50, 30, 20}, 0.8});
    io::write_result_jsonl(r, {"beta", "p0", {100, 10, 30, 20}, 0.7});
  }
  const CliRun r = rlf_cli({"evaluate", (dir / "res.jsonl").string(), (dir / "gt.jsonl").string()}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = io::json::parse(r.out);
  EXPECT_EQ(j.at("mAP").get<double>(), 1.0);
  EXPECT_EQ(j.at("queries").size(), 2u);
  EXPECT_NE(r.err.find("mAP"), std::string::npos);
}

TEST(CliEvaluate, EmptyResultsScoreZero) {
  const auto dir = fx::scratch_dir("cli_eval_empty");
  {
    std::ofstream g(dir / "gt.jsonl");
    io::write_ground_truth_jsonl(g, std::vector<GroundTruthEntry>{{"p0", {10, 10, 40, 20}, "alpha"}});
    std::ofstream r(dir / "res.jsonl");
  }
  const CliRun r = rlf_cli({"evaluate", (dir / "res.jsonl").string(), (dir / "gt.jsonl").string()}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::json::parse(r.out).at("mAP").get<double>(), 0.0);
}

TEST(CliEvaluate, MalformedLineIsNamed) {
  const auto dir = fx::scratch_dir("cli_eval_bad");
  write_text(dir / "gt.jsonl", R"({"page":"p0","x":1,"y":1,"w":5,"h":5,"label":"a"})" "\n");
  write_text(dir / "res.jsonl",
             R"({"query_id":"a","page":"p0","x":1,"y":1,"w":5,"h":5,"score":1})" "\n" R"({"query_id":"a", oops})" "\n");
  const CliRun r = rlf_cli({"evaluate", (dir / "res.jsonl").string(), (dir / "gt.jsonl").string()}, dir);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(CliEvaluate, IouFlagSwitchesTheRule) {
  const auto dir = fx::scratch_dir("cli_eval_iou");
  {
    std::ofstream g(dir / "gt.jsonl");
    io::write_ground_truth_jsonl(g, std::vector<GroundTruthEntry>{{"p0", {10, 10, 20, 10}, "alpha"}});
    std::ofstream r(dir / "res.jsonl");
    io::write_result_jsonl(r, {"alpha", "p0", {0, 0, 60, 30}, 0.9});
  }
  const std::string res = (dir / "res.jsonl").string(), gt = (dir / "gt.jsonl").string();
  EXPECT_EQ(io::json::parse(rlf_cli({"evaluate", res, gt}, dir).out).at("mAP").get<double>(), 1.0);
  EXPECT_EQ(io::json::parse(rlf_cli({"evaluate", res, gt, "--iou"}, dir).out).at("mAP").get<double>(), 0.0);
}

TEST(CliSpot, PlantedQueryIsRankOne) {
  const auto dir = fx::scratch_dir("cli_spot_rank");
  const auto corpus = synth_corpus(dir, kOnePlant);
  const CliRun r = rlf_cli({"spot", (corpus / "queries" / "bentham.png").string(), (corpus / "pages").string()}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  const auto results = io::read_results_jsonl(lines);
  ASSERT_FALSE(results.empty());
  EXPECT_EQ(results[0].query_id, "bentham");
  std::ifstream gin(corpus / "groundtruth.jsonl");
  const auto gts = io::read_ground_truth_jsonl(gin);
  ASSERT_EQ(gts.size(), 1u);
  EXPECT_TRUE(is_positive({results[0].page_id, results[0].bbox, results[0].score}, gts[0]));
}

TEST(CliSpot, RepeatRunsAndJobCountsAgreeByteForByte) {
  const auto dir = fx::scratch_dir("cli_spot_det");
  const auto corpus = synth_corpus(
      dir, R"({"page_width": 700, "page_height": 320, "pages": 3, "planted": [{"text": "river", "count": 2}],
               "distractors": 12, "noise_sigma": 0.02, "seed": 8})");
  const std::string q = (corpus / "queries" / "river.png").string(), pages = (corpus / "pages").string();
  const CliRun a = rlf_cli({"spot", q, pages}, dir);
  const CliRun b = rlf_cli({"spot", q, pages}, dir);
  const CliRun c = rlf_cli({"spot", q, pages, "--jobs", "3"}, dir);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_FALSE(a.out.empty());
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
}

TEST(CliSpot, WarmCacheGivesIdenticalOutputFaster) {
  const auto dir = fx::scratch_dir("cli_spot_cache");
  const auto corpus = synth_corpus(
      dir, R"({"page_width": 1400, "page_height": 1000, "pages": 2, "planted": [{"text": "bentham", "count": 2}],
               "distractors": 40, "seed": 6})");
  const std::string q = (corpus / "queries" / "bentham.png").string(), pages = (corpus / "pages").string();
  const std::string cache = (dir / "cache").string();
  const CliRun cold = rlf_cli({"spot", q, pages, "--cache-dir", cache}, dir);
  ASSERT_EQ(cold.code, 0) << cold.err;
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(cache)) ++entries;
  EXPECT_EQ(entries, 2u);
  const CliRun warm = rlf_cli({"spot", q, pages, "--cache-dir", cache}, dir);
  ASSERT_EQ(warm.code, 0) << warm.err;
  EXPECT_EQ(warm.out, cold.out);
  EXPECT_LT(warm.seconds, cold.seconds);
  const CliRun env = rlf_cli({"spot", q, pages}, dir, "RLF_CACHE_DIR=" + quoted(cache));
  EXPECT_EQ(env.out, cold.out);
}

TEST(CliSpot, PartsFlagIsPlumbedThrough) {
  const auto dir = fx::scratch_dir("cli_spot_parts");
  const auto corpus = synth_corpus(dir, kOnePlant);
  const std::string q = (corpus / "queries" / "bentham.png").string(), pages = (corpus / "pages").string();
  const CliRun one = rlf_cli({"spot", q, pages, "--parts", "1"}, dir);
  ASSERT_EQ(one.code, 0) << one.err;
  std::istringstream lines(one.out);
  const auto results = io::read_results_jsonl(lines);
  ASSERT_FALSE(results.empty());
  std::ifstream gin(corpus / "groundtruth.jsonl");
  EXPECT_TRUE(is_positive({results[0].page_id, results[0].bbox, results[0].score}, io::read_ground_truth_jsonl(gin)[0]));
  EXPECT_EQ(rlf_cli({"spot", q, pages, "--parts", "-1"}, dir).code, 1);
}

TEST(CliSpot, BlankQueryFailsWithMessage) {
  const auto dir = fx::scratch_dir("cli_spot_blank");
  const auto corpus = synth_corpus(dir, kOnePlant);
  save_gray(GrayImage(120, 40, synth::kPaperLevel), dir / "blank.png");
  const CliRun r = rlf_cli({"spot", (dir / "blank.png").string(), (corpus / "pages").string()}, dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(CliSpot, UnreadablePagesAreSkippedWithWarning) {
  const auto dir = fx::scratch_dir("cli_spot_skip");
  const auto corpus = synth_corpus(dir, kOnePlant);
  write_text(corpus / "pages" / "broken.png", "not an image");
  const CliRun r = rlf_cli({"spot", (corpus / "queries" / "bentham.png").string(), (corpus / "pages").string()}, dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_NE(r.err.find("broken.png"), std::string::npos);
  EXPECT_FALSE(r.out.empty());
}

TEST(CliSpot, RenderDirWritesOverlays) {
  const auto dir = fx::scratch_dir("cli_spot_render");
  const auto corpus = synth_corpus(dir, kOnePlant);
  const CliRun r = rlf_cli({"spot", (corpus / "queries" / "bentham.png").string(), (corpus / "pages").string(),
                         "--render-dir", (dir / "overlays").string()},
                        dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "overlays" / "page_000.png"));
}

TEST(CliDetectDescribe, JsonLinesAndBinaryAgree) {
  const auto dir = fx::scratch_dir("cli_describe");
  const auto corpus = synth_corpus(dir, kOnePlant);
  const std::string q = (corpus / "queries" / "bentham.png").string();
  const CliRun det = rlf_cli({"detect", q}, dir);
  ASSERT_EQ(det.code, 0) << det.err;
  const CliRun desc = rlf_cli({"describe", q, "--binary", (dir / "d.rlfd").string()}, dir);
  ASSERT_EQ(desc.code, 0) << desc.err;
  std::istringstream dl(det.out), sl(desc.out);
  std::vector<io::json> kps, descs;
  for (std::string line; std::getline(dl, line);) kps.push_back(io::json::parse(line));
  for (std::string line; std::getline(sl, line);) descs.push_back(io::json::parse(line));
  ASSERT_FALSE(kps.empty());
  ASSERT_EQ(kps.size(), descs.size());
  std::ifstream bin(dir / "d.rlfd", std::ios::binary);
  const auto binary = io::read_descriptor_binary(bin);
  ASSERT_EQ(binary.size(), descs.size());
  for (std::size_t i = 0; i < descs.size(); ++i) {
    EXPECT_EQ(kps[i].at("x"), descs[i].at("x"));
    const auto values = descs[i].at("desc").get<std::vector<double>>();
    ASSERT_EQ(values.size(), 32u);
    for (std::size_t k = 0; k < values.size(); ++k) EXPECT_EQ(binary[i].values[k], static_cast<float>(values[k]));
  }
}

TEST(CliRender, DrawsResultsForThePage) {
  const auto dir = fx::scratch_dir("cli_render");
  const auto corpus = synth_corpus(dir, kOnePlant);
  {
    std::ofstream r(dir / "res.jsonl");
    io::write_result_jsonl(r, {"q", "page_000", {20, 20, 60, 30}, 0.9});
  }
  const CliRun r = rlf_cli({"render", (corpus / "pages" / "page_000.png").string(), (dir / "res.jsonl").string(), "-o",
                         (dir / "overlay.png").string()},
                        dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir / "overlay.png"), slurp(corpus / "pages" / "page_000.png"));
}
