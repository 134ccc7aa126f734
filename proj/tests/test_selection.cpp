#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"
#include "vosens/selection.hpp"
#include "vosens/synth.hpp"

using namespace vosens;

TEST(Features, Examples) {
  auto bg = extract_features(MaskFrame(7, 5));
  EXPECT_EQ(bg.object_count, 0u);
  EXPECT_EQ(bg.mean_object_area_fraction, 0.0);
  EXPECT_EQ(bg.min_object_area_fraction, 0.0);
  EXPECT_EQ(bg.scene_complexity, 0.0);

  MaskFrame f(10, 10);
  f.at(4, 4) = f.at(4, 5) = f.at(5, 4) = f.at(5, 5) = 1;
  auto ff = extract_features(f);
  EXPECT_EQ(ff.object_count, 1u);
  EXPECT_DOUBLE_EQ(ff.mean_object_area_fraction, 0.04);
  EXPECT_DOUBLE_EQ(ff.min_object_area_fraction, 0.04);
  // 2 boundary pairs per side of the block; 10*9 horizontal + 9*10 vertical pairs
  EXPECT_DOUBLE_EQ(ff.scene_complexity, 8.0 / 180.0);

  MaskFrame three(3, 1, std::vector<Label>{1, 2, 3});
  EXPECT_EQ(extract_features(three).object_count, 3u);
}

TEST(Features, BucketBoundaries) {
  FrameFeatures f;
  f.object_count = 0;
  EXPECT_EQ(bucketize(f, 0.1).count, CountBin::One);
  f.object_count = 3;
  EXPECT_EQ(bucketize(f, 0.1).count, CountBin::TwoToThree);
  f.object_count = 4;
  EXPECT_EQ(bucketize(f, 0.1).count, CountBin::FourPlus);
  f.min_object_area_fraction = 0.0049;
  EXPECT_EQ(bucketize(f, 0.1).size, SizeBin::Tiny);
  f.min_object_area_fraction = 0.005;
  EXPECT_EQ(bucketize(f, 0.1).size, SizeBin::Small);
  f.min_object_area_fraction = 0.02;
  EXPECT_EQ(bucketize(f, 0.1).size, SizeBin::Medium);
  f.min_object_area_fraction = 0.10;
  EXPECT_EQ(bucketize(f, 0.1).size, SizeBin::Large);
  f.scene_complexity = 0.1;
  EXPECT_EQ(bucketize(f, 0.1).complexity, ComplexityBin::Low);
  f.scene_complexity = 0.11;
  EXPECT_EQ(bucketize(f, 0.1).complexity, ComplexityBin::High);
}

TEST(PerformanceDb, UpdatesAndMonotonicity) {
  FeatureBucket b{CountBin::TwoToThree, SizeBin::Small, ComplexityBin::High};
  FrameFeatures f;
  f.object_count = 2;
  f.min_object_area_fraction = 0.01;
  f.scene_complexity = 0.5;
  PerformanceDB db;
  db = update_performance_db(db, f, 0.1, "A", 0.8);
  EXPECT_NEAR(*db.mean(b, "A"), 0.8, 1e-15);
  EXPECT_EQ(db.entries[b]["A"].sample_count, 1u);
  db = update_performance_db(db, f, 0.1, "A", 0.6);
  EXPECT_NEAR(*db.mean(b, "A"), 0.7, 1e-15);
  EXPECT_EQ(db.version, 2u);
  EXPECT_FALSE(db.mean(b, "B"));

  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    const double before = *db.mean(b, "A"), s = u(rng);
    db.record(b, "A", s);
    const double after = *db.mean(b, "A");
    ASSERT_LE(std::abs(after - s), std::abs(before - s) + 1e-15);
  }
  EXPECT_THROW(db.record(b, "A", 1.5), Error);
  EXPECT_THROW(db.record(b, "A", -0.1), Error);
}

TEST(PerformanceDb, SerializeParseRoundTrip) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  PerformanceDB db;
  for (int i = 0; i < 300; ++i) {
    FeatureBucket b{CountBin(rng() % 3), SizeBin(rng() % 4), ComplexityBin(rng() % 2)};
    db.record(b, "model_" + std::to_string(rng() % 5), u(rng));
  }
  const auto text = db.serialize();
  const auto back = PerformanceDB::parse(text);
  EXPECT_EQ(back, db);
  EXPECT_EQ(back.serialize(), text);
  EXPECT_EQ(PerformanceDB::parse(PerformanceDB{}.serialize()), PerformanceDB{});
  auto j = nlohmann::json::parse(text);
  EXPECT_TRUE(j.contains("version"));
  EXPECT_TRUE(j["entries"][0]["bucket"].contains("complexity"));
}

TEST(PerformanceDb, RejectsBadFiles) {
  EXPECT_THROW(PerformanceDB::parse("{"), Error);
  EXPECT_THROW(PerformanceDB::parse(R"({"version":1,"entries":[{"bucket":{"count":"9","size":"tiny","complexity":"low"},"model":"a","score_sum":1,"sample_count":1}]})"),
               Error);
  EXPECT_THROW(PerformanceDB::parse(R"({"version":1,"entries":[{"bucket":{"count":"1","size":"tiny","complexity":"low"},"model":"a","score_sum":3,"sample_count":1}]})"),
               Error);
  EXPECT_THROW(PerformanceDB::parse(R"({"version":1,"entries":[{"bucket":{"count":"1","size":"tiny","complexity":"low"},"model":"a","score_sum":0,"sample_count":0}]})"),
               Error);
}

TEST(PerformanceStore, ReadersSeeWholeVersions) {
  PerformanceStore store;
  FeatureBucket b;
  std::atomic<bool> stop{false};
  std::atomic<int> torn{0};
  std::jthread reader([&] {
    while (!stop) {
      auto snap = store.snapshot();
      std::size_t samples = 0;
      for (const auto& [bk, models] : snap->entries)
        for (const auto& [m, e] : models) samples += e.sample_count;
      // each update adds two samples and bumps the version twice
      if (samples != snap->version) ++torn;
    }
  });
  for (int i = 0; i < 500; ++i) {
    store.update([&](PerformanceDB& db) {
      db.record(b, "a", 0.5);
      db.record(b, "b", 0.25);
    });
  }
  stop = true;
  reader.join();
  EXPECT_EQ(torn.load(), 0);
  EXPECT_EQ(store.snapshot()->version, 1000u);
}

namespace {

struct Fixture {
  SequenceMap gt;
  PredictionSet preds;
};

Fixture small_suite(std::uint64_t seed, std::size_t videos = 4,
                    std::vector<NoiseProfile> profiles = default_profiles(), double disappear = 0.2) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.videos = videos;
  cfg.frames_per_video = 8;
  cfg.disappear_rate = disappear;
  cfg.occlusion_rate = disappear > 0 ? 0.1 : 0.0;
  Fixture f;
  f.gt = generate_sequence(cfg);
  f.preds = synthesize_predictions(f.gt, profiles, seed);
  return f;
}

std::vector<NoiseProfile> all_jittered() {
  std::vector<NoiseProfile> out;
  for (const auto& m : {"model_a", "model_b", "model_c", "model_d", "model_e"}) out.push_back({m, 2, 0.0, 0.0, 0.0});
  return out;
}

}  // namespace

TEST(ScoreAgainstPseudo, Examples) {
  auto fx = small_suite(3, 4, default_profiles(), 0.0);
  const auto& [vid, g] = *fx.gt.begin();
  EXPECT_EQ(score_against_pseudo(g, g), 1.0);
  auto bg = g;
  for (auto& f : bg.frames) f = MaskFrame(f.width(), f.height());
  EXPECT_EQ(score_against_pseudo(bg, g), 0.0);
}

TEST(ScoreAgainstPseudo, MatchesEvaluateVideo) {
  auto fx = small_suite(21, 10);
  for (const auto& [vid, g] : fx.gt) {
    const auto& m = fx.preds.sequence("model_c", vid);
    const auto objs = evaluate_video(m, g);
    double s = 0;
    for (const auto& o : objs) s += 0.5 * o.j + 0.5 * o.f;
    EXPECT_NEAR(score_against_pseudo(m, g), s / objs.size(), 1e-12);
  }
}

TEST(Recommend, SelfSelectionAndTieRule) {
  auto fx = small_suite(4, 4, all_jittered());
  PseudoLabelSet pseudo;
  pseudo.videos = fx.gt;
  PredictionSet preds = fx.preds;
  preds.videos["model_d"] = fx.gt;
  auto choice = recommend(preds, pseudo, nullptr, Granularity::PerVideo);
  for (const auto& [vid, m] : choice.video_model) {
    EXPECT_EQ(m, "model_d") << vid;
    EXPECT_EQ(choice.scores[vid]["model_d"], 1.0);
  }

  preds.videos["model_b"] = fx.gt;
  choice = recommend(preds, pseudo, nullptr, Granularity::PerVideo);
  for (const auto& [vid, m] : choice.video_model) EXPECT_EQ(m, "model_b");
}

TEST(Recommend, DatabasePriorBreaksTies) {
  std::map<std::string, double> scores{{"a", 0.5}, {"b", 0.5}, {"c", 0.4}};
  EXPECT_EQ(select_best(scores), "a");
  std::map<std::string, double> priors{{"b", 0.3}};
  EXPECT_EQ(select_best(scores, &priors), "b");
  priors["a"] = 0.2;
  EXPECT_EQ(select_best(scores, &priors), "b");
  priors["c"] = 1.0;
  EXPECT_EQ(select_best(scores, &priors), "b");
}

TEST(Recommend, ArgmaxInvariantUnderPositiveScaling) {
  std::mt19937 rng(44);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::map<std::string, double> s, scaled;
    const double k = 0.1 + 5 * u(rng);
    for (const auto& m : {"a", "b", "c", "d", "e"}) {
      s[m] = u(rng);
      scaled[m] = s[m] * k;
    }
    ASSERT_EQ(select_best(s), select_best(scaled));
  }
}

TEST(Recommend, DeterministicAndParallelSafe) {
  auto fx = small_suite(8, 6);
  auto pseudo = build_pseudo_labels(fx.preds, nullptr, FusionMethod::Pgmr);
  auto a = recommend(fx.preds, pseudo, nullptr, Granularity::PerFrame);
  auto b = recommend(fx.preds, pseudo, nullptr, Granularity::PerFrame, {}, 4);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.frame_scores, b.frame_scores);
}

TEST(AssembleFinal, PerVideoCopiesOneModel) {
  auto fx = small_suite(5);
  ModelChoice c;
  for (const auto& vid : fx.preds.video_ids()) c.video_model[vid] = "model_a";
  EXPECT_EQ(assemble_final(fx.preds, c), fx.preds.model_sequences("model_a"));
}

TEST(AssembleFinal, PerFrameInterleaves) {
  auto mk = [](Label l) {
    std::vector<MaskFrame> fs;
    for (int i = 0; i < 4; ++i) fs.emplace_back(3, 2, static_cast<Label>(l + i));
    return testing_support::make_sequence("v", fs);
  };
  PredictionSet preds;
  preds.models = {"A", "B"};
  preds.videos["A"]["v"] = mk(10);
  preds.videos["B"]["v"] = mk(20);
  ModelChoice c;
  c.granularity = Granularity::PerFrame;
  c.video_model["v"] = "A";
  c.frame_models["v"] = {"A", "B", "A", "B"};
  auto out = assemble_final(preds, c).at("v");
  EXPECT_EQ(out.frames[0], preds.videos["A"]["v"].frames[0]);
  EXPECT_EQ(out.frames[1], preds.videos["B"]["v"].frames[1]);
  EXPECT_EQ(out.frames[2], preds.videos["A"]["v"].frames[2]);
  EXPECT_EQ(out.frames[3], preds.videos["B"]["v"].frames[3]);
  EXPECT_EQ(out.frame_names, preds.videos["A"]["v"].frame_names);

  c.frame_models["v"][2] = "Z";
  try {
    assemble_final(preds, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownModel);
  }
}

TEST(RecordPerformance, CountsEveryScoredFrame) {
  auto fx = small_suite(6, 3);
  auto pseudo = build_pseudo_labels(fx.preds, nullptr, FusionMethod::Pgmr);
  auto choice = recommend(fx.preds, pseudo, nullptr, Granularity::PerVideo);
  PerformanceDB db;
  record_performance(db, pseudo, choice);
  std::size_t samples = 0;
  for (const auto& [b, models] : db.entries)
    for (const auto& [m, e] : models) samples += e.sample_count;
  EXPECT_EQ(samples, 3u * 7u * fx.preds.models.size());
  EXPECT_EQ(db.version, samples);
}
