#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rlf/config.hpp"
#include "rlf/formats.hpp"
#include "rlf/imageio.hpp"
#include "rlf/synth.hpp"
#include "support.hpp"

using namespace rlf;
namespace fx = rlf::fixtures;

TEST(JsonLines, KeypointFields) {
  std::ostringstream os;
  const std::vector<Keypoint> kps{{1.5, 2.25, KeypointKind::Saddle, 0.125}, {3, 4, KeypointKind::Edge, 1}};
  io::write_keypoints_jsonl(os, kps);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  const auto j = io::json::parse(line);
  EXPECT_EQ(j.at("x").get<double>(), 1.5);
  EXPECT_EQ(j.at("y").get<double>(), 2.25);
  EXPECT_EQ(j.at("kind").get<std::string>(), "saddle");
  EXPECT_EQ(j.at("response").get<double>(), 0.125);
  std::getline(is, line);
  EXPECT_EQ(io::json::parse(line).at("kind").get<std::string>(), "edge");
}

TEST(JsonLines, DescriptorRecordsCarry32Values) {
  std::ostringstream os;
  RlfDescriptor d;
  d.values.assign(32, 0.0);
  d.values[3] = 1.0;
  const std::vector<Keypoint> kps{{5, 6, KeypointKind::Blob, 1}};
  io::write_descriptors_jsonl(os, kps, std::vector<RlfDescriptor>{d});
  const auto j = io::json::parse(os.str());
  EXPECT_EQ(j.at("kind").get<std::string>(), "blob");
  EXPECT_EQ(j.at("desc").get<std::vector<double>>(), d.values);
  EXPECT_THROW(io::write_descriptors_jsonl(os, kps, std::vector<RlfDescriptor>{}), InvalidInput);
}

TEST(JsonLines, ResultsRoundTrip) {
  std::ostringstream os;
  const io::ResultRecord a{"bentham", "page_003", {10, 20, 30, 40}, 0.75};
  const io::ResultRecord b{"mercy", "page_000", {1, 2, 3, 4}, 0.5};
  io::write_result_jsonl(os, a);
  io::write_result_jsonl(os, b);
  std::istringstream is(os.str() + "\n");
  const auto back = io::read_results_jsonl(is);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].query_id, "bentham");
  EXPECT_EQ(back[0].page_id, "page_003");
  EXPECT_EQ(back[0].bbox, a.bbox);
  EXPECT_EQ(back[0].score, 0.75);
  EXPECT_EQ(back[1].bbox, b.bbox);
}

TEST(JsonLines, GroundTruthRoundTrip) {
  const std::vector<GroundTruthEntry> gts{{"p0", {1, 2, 3, 4}, "alpha"}, {"p1", {5, 6, 7, 8}, "beta"}};
  std::ostringstream os;
  io::write_ground_truth_jsonl(os, gts);
  std::istringstream is(os.str());
  const auto back = io::read_ground_truth_jsonl(is);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    EXPECT_EQ(back[i].page_id, gts[i].page_id);
    EXPECT_EQ(back[i].bbox, gts[i].bbox);
    EXPECT_EQ(back[i].label, gts[i].label);
  }
}

TEST(JsonLines, MalformedLineNamesItsNumber) {
  std::istringstream is(
      "{\"page\":\"p\",\"x\":1,\"y\":1,\"w\":2,\"h\":2,\"label\":\"a\"}\n"
      "\n"
      "{\"page\":\"p\",\"x\":1,\"y\":1,\"w\":2,\"label\":\"a\"}\n");
  try {
    io::read_ground_truth_jsonl(is, "gt.jsonl");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("gt.jsonl: line 3"), std::string::npos) << e.what();
  }
  std::istringstream broken("{\"query_id\": \n");
  EXPECT_THROW(io::read_results_jsonl(broken), FormatError);
  std::istringstream empty_box("{\"query_id\":\"q\",\"page\":\"p\",\"x\":0,\"y\":0,\"w\":0,\"h\":5,\"score\":1}\n");
  EXPECT_THROW(io::read_results_jsonl(empty_box), FormatError);
}

TEST(Report, JsonShapeAndTable) {
  EvalReport r;
  r.per_query = {{"alpha", 1.0, 2}, {"beta", std::nullopt, 0}};
  r.mean_ap = 1.0;
  const auto j = io::report_json(r);
  EXPECT_EQ(j.at("mAP").get<double>(), 1.0);
  ASSERT_EQ(j.at("queries").size(), 2u);
  EXPECT_EQ(j.at("queries")[0].at("query_id").get<std::string>(), "alpha");
  EXPECT_EQ(j.at("queries")[0].at("relevant").get<int>(), 2);
  EXPECT_TRUE(j.at("queries")[1].at("ap").is_null());
  const std::string table = io::report_table(r);
  EXPECT_NE(table.find("alpha"), std::string::npos);
  EXPECT_NE(table.find("n/a"), std::string::npos);
  EXPECT_NE(table.find("mAP"), std::string::npos);
}

TEST(DescriptorBinary, RoundTripAndLayout) {
  std::vector<RlfDescriptor> ds(3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ds[i].values.resize(32);
    for (int k = 0; k < 32; ++k) ds[i].values[k] = 0.25 * k + static_cast<double>(i);
  }
  std::ostringstream os(std::ios::binary);
  io::write_descriptor_binary(os, ds);
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 12u + 3u * 32u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "RLFD");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);  // count
  std::istringstream is(bytes, std::ios::binary);
  const auto back = io::read_descriptor_binary(is);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int k = 0; k < 32; ++k) EXPECT_EQ(back[i].values[k], static_cast<float>(ds[i].values[k]));
  }
}

TEST(DescriptorBinary, RejectsBadInput) {
  std::istringstream wrong_magic(std::string("XXXX\1\0\0\0\0\0\0\0", 12));
  EXPECT_THROW(io::read_descriptor_binary(wrong_magic), FormatError);
  std::istringstream truncated(std::string("RLFD\1\0\0\0\2\0\0\0\0\0", 14));
  EXPECT_THROW(io::read_descriptor_binary(truncated), FormatError);
}

TEST(PageIndexCache, RoundTripIsExact) {
  GrayImage page(400, 160, synth::kPaperLevel);
  const GrayImage word = synth::render_query("ocean", 20.0);
  for (int y = 0; y < word.height(); ++y) {
    for (int x = 0; x < word.width(); ++x) page(30 + x, 40 + y) = word(x, y);
  }
  const PageIndex idx = build_page_index(page, "pg", SpotParams{});
  std::ostringstream os(std::ios::binary);
  io::write_page_index(os, idx, 1234);
  std::istringstream is(os.str(), std::ios::binary);
  const auto back = io::read_page_index(is, 1234, "pg");
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->keypoints, idx.keypoints);
  EXPECT_EQ(back->descriptors, idx.descriptors);
  EXPECT_EQ(back->core_height, idx.core_height);
  EXPECT_EQ(back->width, idx.width);
  std::istringstream again(os.str(), std::ios::binary);
  EXPECT_FALSE(io::read_page_index(again, 999, "pg").has_value());
}

TEST(PageIndexCache, WarmHitMatchesColdBuild) {
  const auto dir = fx::scratch_dir("cache_roundtrip");
  GrayImage page(300, 120, synth::kPaperLevel);
  const GrayImage word = synth::render_query("river", 20.0);
  for (int y = 0; y < word.height(); ++y) {
    for (int x = 0; x < word.width(); ++x) page(20 + x, 30 + y) = word(x, y);
  }
  const auto path = dir / "page.png";
  save_gray(page, path);
  const GrayImage loaded = load_gray(path);
  bool hit = true;
  const PageIndex cold = io::cached_page_index(path, loaded, "pg", SpotParams{}, dir / "cache", &hit);
  EXPECT_FALSE(hit);
  const PageIndex warm = io::cached_page_index(path, loaded, "pg", SpotParams{}, dir / "cache", &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(warm.keypoints, cold.keypoints);
  EXPECT_EQ(warm.descriptors, cold.descriptors);
  SpotParams other;
  other.sigma_factor = 0.12;
  io::cached_page_index(path, loaded, "pg", other, dir / "cache", &hit);
  EXPECT_FALSE(hit);
}

TEST(SynthSpec, ParsesKnownKeysAndRejectsUnknown) {
  const auto s = io::synth_spec_from_json(io::json::parse(
      R"({"pages": 3, "planted": [{"text": "bentham", "count": 2}], "distractors": 5, "seed": 9, "noise_sigma": 0.01})"));
  EXPECT_EQ(s.pages, 3);
  ASSERT_EQ(s.planted.size(), 1u);
  EXPECT_EQ(s.planted[0].text, "bentham");
  EXPECT_EQ(s.planted[0].count, 2);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_THROW(io::synth_spec_from_json(io::json::parse(R"({"pagez": 3})")), FormatError);
  EXPECT_THROW(io::synth_spec_from_json(io::json::parse(R"({"pages": "many"})")), FormatError);
  EXPECT_THROW(io::synth_spec_from_json(io::json::parse(R"({"pages": 0})")), InvalidParameter);
}

TEST(Config, DefaultsValidateAndDumpRoundTrips) {
  RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  std::istringstream dumped(dump_config(cfg));
  RunConfig again;
  apply_config_text(again, dumped);
  EXPECT_EQ(dump_config(again), dump_config(cfg));
}

TEST(Config, EveryKeyRoundTripsThroughItsText) {
  RunConfig cfg;
  for (const auto& k : config_keys()) {
    RunConfig copy = cfg;
    k.set(copy, k.get(cfg));
    EXPECT_EQ(k.get(copy), k.get(cfg)) << k.name;
  }
}

TEST(Config, PrecedenceDefaultsFileFlags) {
  const auto dir = fx::scratch_dir("config_precedence");
  const auto file = dir / "run.cfg";
  {
    std::ofstream out(file);
    out << "# tuned run\n"
        << "ratio_threshold = 0.8\n"
        << "min_inliers = 4   # stricter\n"
        << "frequencies = 2,4,6\n";
  }
  const RunConfig from_file = resolve_config(file, {});
  EXPECT_EQ(from_file.spot.ratio_threshold, 0.8);
  EXPECT_EQ(from_file.spot.min_inliers, 4);
  EXPECT_EQ(from_file.spot.descriptor.frequencies, (std::vector<int>{2, 4, 6}));
  EXPECT_EQ(from_file.spot.bin_factor, SpotParams{}.bin_factor);

  const RunConfig flagged = resolve_config(file, {{"min_inliers", "5"}, {"jobs", "3"}});
  EXPECT_EQ(flagged.spot.ratio_threshold, 0.8);
  EXPECT_EQ(flagged.spot.min_inliers, 5);
  EXPECT_EQ(flagged.jobs, 3);

  const RunConfig defaults = resolve_config(std::nullopt, {});
  EXPECT_EQ(defaults.spot.ratio_threshold, 0.9);
  EXPECT_EQ(defaults.spot.min_inliers, 3);
}

TEST(Config, OptionalOverridesAndAuto) {
  RunConfig cfg;
  apply_setting(cfg, "sigma_fine", "3.5");
  EXPECT_EQ(cfg.spot.preprocess.sigma_fine, 3.5);
  apply_setting(cfg, "sigma_fine", "auto");
  EXPECT_FALSE(cfg.spot.preprocess.sigma_fine.has_value());
}

TEST(Config, ErrorsNameTheSourceLine) {
  RunConfig cfg;
  std::istringstream bad("ratio_threshold = 0.8\nnot a setting\n");
  try {
    apply_config_text(cfg, bad, "x.cfg");
    FAIL();
  } catch (const InvalidParameter& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos) << e.what();
  }
  std::istringstream unknown("frobnicate = 1\n");
  EXPECT_THROW(apply_config_text(cfg, unknown), InvalidParameter);
  std::istringstream nan("min_inliers = three\n");
  EXPECT_THROW(apply_config_text(cfg, nan), InvalidParameter);
  EXPECT_THROW(resolve_config(std::nullopt, {{"sigma_fine", "0"}}), InvalidParameter);
  EXPECT_THROW(resolve_config(std::nullopt, {{"ratio_threshold", "1.5"}}), InvalidParameter);
  EXPECT_THROW(resolve_config(std::filesystem::path("/nonexistent/run.cfg"), {}), IoError);
}
