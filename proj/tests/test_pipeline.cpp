#include <gtest/gtest.h>

#include <cmath>

#include "objcomp/checkpoint.hpp"
#include "objcomp/errors.hpp"
#include "objcomp/pipeline/evaluate.hpp"
#include "objcomp/pipeline/lock_file.hpp"
#include "support/tiny_config.hpp"

using namespace objcomp;
using namespace objcomp::pipeline;
using objcomp::testing::TempDir;
using objcomp::testing::tiny_config;

TEST(Config, JsonRoundTrip) {
  const auto c = RunConfig::desk();
  c.validate();
  const auto j = c.to_json();
  EXPECT_EQ(RunConfig::from_json(j).to_json(), j);
}

TEST(Config, OverridesParseJsonValues) {
  auto j = apply_overrides(RunConfig::desk().to_json(),
                           {"stages.stage3.steps=10", "output_dir=somewhere", "eval.logit_scale=2.5"});
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.stage(3).steps, 10);
  EXPECT_EQ(c.output_dir, "somewhere");
  EXPECT_DOUBLE_EQ(c.eval.logit_scale, 2.5);
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(apply_overrides(RunConfig::desk().to_json(), {"stages.stage3.stepz=10"}), ConfigError);
  EXPECT_THROW(apply_overrides(RunConfig::desk().to_json(), {"no_equals_sign"}), ConfigError);
}

TEST(Config, CrossModuleMismatchRejected) {
  auto c = RunConfig::desk();
  c.unet.context_dim = 32;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig::desk();
  c.dataset.canvas_size = 32;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, LoadFromFile) {
  TempDir dir("cfg");
  auto j = RunConfig::desk().to_json();
  j["seed"] = 42;
  objcomp::testing::write_text(dir / "c.json", j.dump());
  EXPECT_EQ(load_config(dir / "c.json").seed, 42u);
  objcomp::testing::write_text(dir / "bad.json", "{not json");
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(Config, FullScaleSchedulesFromEpochs) {
  const auto s = RunConfig::full_scale_schedules(4096);
  EXPECT_DOUBLE_EQ(s.at("stage1").learning_rate, 1e-4);
  EXPECT_EQ(s.at("stage1").steps, 30);
  EXPECT_EQ(s.at("stage2").batch_size, 512);
  EXPECT_EQ(s.at("stage2").steps, 104);
  EXPECT_DOUBLE_EQ(s.at("stage3").learning_rate, 4e-5);
  EXPECT_EQ(s.at("stage3").steps, (20 * 4096 + 575) / 576);
}

TEST(Stages, TagsAndBadStage) {
  EXPECT_STREQ(stage_tag_for(1), "adaptor.stage1");
  EXPECT_STREQ(stage_tag_for(2), "adaptor.stage2");
  EXPECT_STREQ(stage_tag_for(3), "generator.stage3");
  EXPECT_THROW(stage_tag_for(4), ConfigError);
}

TEST(Stages, OrderingErrorsNameMissingStage) {
  TempDir dir("order");
  const auto c = tiny_config(dir.path());
  try {
    run_stage(2, c);
    FAIL() << "expected OrderingError";
  } catch (const OrderingError& e) {
    EXPECT_NE(std::string(e.what()).find("requires stage 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_stage(3, c), OrderingError);
}

TEST(Stages, Stage1CheckpointTaggedAndCurveWritten) {
  TempDir dir("s1");
  const auto c = tiny_config(dir.path());
  const auto out = run_stage(1, c);
  EXPECT_EQ(out.tag, "adaptor.stage1");
  const auto ck = load_checkpoint(out.checkpoint);
  EXPECT_EQ(ck.meta.stage, "adaptor.stage1");
  EXPECT_EQ(ck.id, out.checkpoint_id);
  const auto curve = read_curve_csv(curve_path(c, out.tag));
  ASSERT_EQ(curve.size(), 3u);
  for (std::size_t i = 0; i < curve.size(); ++i) EXPECT_FLOAT_EQ(curve[i].second, out.curve[i].second);
}

TEST(Stages, FullChainIsDeterministic) {
  TempDir a("chain-a"), b("chain-b");
  std::vector<double> finals[2];
  int k = 0;
  for (const auto* dir : {&a, &b}) {
    const auto c = tiny_config(dir->path());
    for (int s = 0; s <= 3; ++s) finals[k].push_back(run_stage(s, c).curve.back().second);
    ++k;
  }
  EXPECT_EQ(finals[0], finals[1]);
  for (int s = 0; s <= 3; ++s) {
    const auto tag = stage_tag_for(s);
    EXPECT_EQ(load_checkpoint(checkpoint_path(tiny_config(a.path()), tag)).id,
              load_checkpoint(checkpoint_path(tiny_config(b.path()), tag)).id)
        << tag;
  }
}

TEST(Stages, CurveCsvRoundTrip) {
  TempDir dir("csv");
  const LossCurve curve{{1, 0.5}, {2, 0.25}, {3, 0.125000001}};
  write_curve_csv(dir / "c.csv", curve);
  EXPECT_EQ(objcomp::testing::read_bytes(dir / "c.csv").substr(0, 10), "step,loss\n");
  const auto back = read_curve_csv(dir / "c.csv");
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].first, curve[i].first);
    EXPECT_NEAR(back[i].second, curve[i].second, 1e-8);
  }
}

TEST(CropRegion, SquareAroundHoleShiftedOntoCanvas) {
  const auto r = crop_region(hole_mask(32, 32, {4, 10, 6, 2}));
  EXPECT_EQ(r, (BBox{4, 8, 6, 6}));
  const auto edge = crop_region(hole_mask(32, 32, {0, 0, 2, 8}));
  EXPECT_EQ(edge, (BBox{0, 0, 8, 8}));
  const auto corner = crop_region(hole_mask(32, 32, {28, 30, 4, 2}));
  EXPECT_EQ(corner, (BBox{28, 28, 4, 4}));
  EXPECT_THROW(crop_region(Image(8, 8, 1, 1.0f)), EmptyResultError);
}

TEST(CropRegion, AlwaysContainsHole) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const int w = 1 + rng.uniform_int(0, 31), h = 1 + rng.uniform_int(0, 31);
    const BBox hole{static_cast<double>(rng.uniform_int(0, 32 - w)), static_cast<double>(rng.uniform_int(0, 32 - h)),
                    static_cast<double>(w), static_cast<double>(h)};
    const auto r = crop_region(hole_mask(32, 32, hole));
    EXPECT_EQ(r.w, r.h);
    EXPECT_TRUE(r.contains(hole)) << hole.x << "," << hole.y << "," << w << "," << h;
    EXPECT_TRUE((BBox{0, 0, 32, 32}).contains(r));
  }
}

TEST(LockFile, ExclusiveAndReleased) {
  TempDir dir("lock");
  {
    LockFile lock(dir.path());
    EXPECT_TRUE(std::filesystem::exists(lock.path()));
    EXPECT_THROW(LockFile second(dir.path()), LockError);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / ".lock"));
  LockFile again(dir.path());
}

TEST(Evaluate, ReportHasSixFiniteScalars) {
  TempDir dir("eval");
  auto c = tiny_config(dir.path());
  for (int s = 0; s <= 3; ++s) run_stage(s, c);
  const auto report = stress_eval(c, true);
  ASSERT_EQ(report["metrics"].size(), 6u);
  for (const char* k : {"frechet_full", "frechet_crop", "clip_image_full", "clip_image_crop", "clip_text_full",
                        "clip_text_crop"}) {
    ASSERT_TRUE(report["metrics"].contains(k)) << k;
    EXPECT_TRUE(std::isfinite(report["metrics"][k].get<double>())) << k;
    EXPECT_TRUE(report["untrained_metrics"].contains(k)) << k;
  }
  EXPECT_EQ(report["count"], 4);
  EXPECT_EQ(report["checkpoint_ids"].size(), 2u);
  EXPECT_EQ(report["config"]["seed"], c.seed);
}

TEST(Evaluate, EvalSetIsSeededAndStressRotated) {
  TempDir dir("set");
  const auto c = tiny_config(dir.path());
  const auto a = make_eval_set(c, 3, 40.0, 77), b = make_eval_set(c, 3, 40.0, 77);
  ASSERT_EQ(a.requests.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a.triplets[i], b.triplets[i]);
    EXPECT_EQ(a.requests[i].seed, b.requests[i].seed);
    EXPECT_EQ(a.requests[i].steps, c.diffusion.eval_sample_steps);
  }
  EXPECT_NE(a.requests[0].seed, a.requests[1].seed);
}
