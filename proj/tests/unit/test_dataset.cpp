#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dyronet/dataset/manifest.hpp"
#include "dyronet/dataset/synth.hpp"
#include "dyronet/error.hpp"
#include "dyronet/router/router.hpp"

using namespace dyronet;
using num::NdArray;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

double mean_abs_step(const data::Clip& c) {
  double s = 0.0;
  for (std::size_t i = 1; i < c.length(); ++i) {
    const auto d = router::frame_diff(c.frames[i], c.frames[i - 1]);
    for (double v : d.raw.data()) s += std::abs(v);
  }
  return s / static_cast<double>((c.length() - 1) * c.frames[0].size());
}

// Horizontal shift (in whole pixels) that best aligns b onto a, by
// exhaustive search over mean absolute error on the interior.
int best_shift(const NdArray& a, const NdArray& b, int max_shift) {
  const std::size_t h = a.extent(1), w = a.extent(2);
  int best = 0;
  double best_err = 1e300;
  for (int s = -max_shift; s <= max_shift; ++s) {
    double err = 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = max_shift; x + max_shift < w; ++x) {
        err += std::abs(b.at(0, y, x) - a.at(0, y, static_cast<std::size_t>(static_cast<int>(x) - s)));
      }
    if (err < best_err) {
      best_err = err;
      best = s;
    }
  }
  return best;
}

}  // namespace

TEST(GenClip, StopClipIsStatic) {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kStop;
  spec.speed_px_per_frame = 0.0;
  spec.length = 6;
  const auto c = data::gen_clip(spec, 4);
  ASSERT_EQ(c.length(), 6u);
  for (std::size_t i = 1; i < c.length(); ++i) {
    EXPECT_EQ(c.frames[i], c.frames[0]);
    EXPECT_EQ(router::frame_diff(c.frames[i], c.frames[i - 1]).raw.max_abs(), 0.0);
  }
}

TEST(GenClip, StraightBackgroundShiftsAtSpeed) {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kStraight;
  spec.speed_px_per_frame = 2.0;
  spec.n_objects = 0;
  spec.length = 5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = data::gen_clip(spec, seed);
    for (std::size_t i = 1; i < c.length(); ++i) EXPECT_EQ(std::abs(best_shift(c.frames[i - 1], c.frames[i], 5)), 2);
  }
}

TEST(GenClip, SmallObjectsFollowTheOnePercentRule) {
  data::SyntheticClipSpec spec;
  spec.small_fraction = 1.0;
  spec.n_objects = 8;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = data::gen_clip(spec, seed);
    for (const auto& frame : c.annotations)
      for (const auto& a : frame) EXPECT_LT(a.box.area(), 153.6);
  }
}

TEST(GenClip, AnnotationsInsideFrameWithPersistentTracks) {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kTurning;
  spec.speed_px_per_frame = 4.0;
  spec.small_fraction = 0.5;
  const auto c = data::gen_clip(spec, 9);
  std::set<int> first;
  for (const auto& a : c.annotations[0]) first.insert(a.track_id);
  for (const auto& frame : c.annotations) {
    std::set<int> ids;
    for (const auto& a : frame) {
      EXPECT_GE(a.box.x1, 0.0);
      EXPECT_GE(a.box.y1, 0.0);
      EXPECT_LE(a.box.x2, 160.0);
      EXPECT_LE(a.box.y2, 96.0);
      EXPECT_GT(a.box.width(), 0.0);
      ids.insert(a.track_id);
    }
    for (int id : ids) EXPECT_TRUE(first.contains(id));
  }
}

TEST(GenClip, DeterministicPerSeed) {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kTurning;
  const auto a = data::gen_clip(spec, 42), b = data::gen_clip(spec, 42), c = data::gen_clip(spec, 43);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.annotations, b.annotations);
  EXPECT_NE(a.frames, c.frames);
  for (const auto& f : a.frames)
    for (double v : f.data()) {
      EXPECT_EQ(v, std::round(v));
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 255.0);
    }
}

TEST(GenClip, SpeedOrderingAcrossMotionStates) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    data::SyntheticClipSpec stop, straight, turn;
    stop.motion = data::MotionState::kStop;
    stop.speed_px_per_frame = 0.0;
    straight.motion = data::MotionState::kStraight;
    turn.motion = data::MotionState::kTurning;
    stop.length = straight.length = turn.length = 6;
    const double s = mean_abs_step(data::gen_clip(stop, seed));
    const double m = mean_abs_step(data::gen_clip(straight, seed));
    const double t = mean_abs_step(data::gen_clip(turn, seed));
    EXPECT_LT(s, m) << "seed " << seed;
    EXPECT_LT(m, t) << "seed " << seed;
  }
}

TEST(GenClip, InvalidSpecs) {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kStop;
  spec.speed_px_per_frame = 1.0;
  EXPECT_THROW(data::gen_clip(spec, 0), ValidationError);
  spec = {};
  spec.small_fraction = 1.5;
  EXPECT_THROW(data::validate(spec), ValidationError);
  spec = {};
  spec.height = spec.width = 20;
  EXPECT_THROW(data::validate(spec), ValidationError);
  spec = {};
  spec.length = 0;
  EXPECT_THROW(data::validate(spec), ValidationError);
  EXPECT_THROW(data::parse_motion_state("reversing"), ValidationError);
  EXPECT_EQ(data::parse_motion_state("turning"), data::MotionState::kTurning);
}

TEST(NextFrameTargets, UseTheFollowingFrame) {
  const branch::Geometry geom{};
  data::SyntheticClipSpec spec;
  spec.length = 4;
  const auto c = data::gen_clip(spec, 2);
  for (std::size_t i = 0; i + 1 < c.length(); ++i) {
    const auto t = data::next_frame_targets(c, i, geom, 6, 10);
    const auto ref = branch::build_targets(c.annotations[i + 1], geom, 6, 10);
    EXPECT_EQ(t.obj, ref.obj);
    EXPECT_EQ(t.reg, ref.reg);
    ASSERT_EQ(t.positives.size(), ref.positives.size());
    for (std::size_t p = 0; p < t.positives.size(); ++p) EXPECT_EQ(t.positives[p].box, ref.positives[p].box);
  }
  EXPECT_THROW(data::next_frame_targets(c, 3, geom, 6, 10), RangeError);
}

TEST(NextFrameTargets, StaticClipMatchesCurrentFrame) {
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kStop;
  spec.speed_px_per_frame = 0.0;
  spec.length = 3;
  const auto c = data::gen_clip(spec, 3);
  const auto t = data::next_frame_targets(c, 0, {}, 6, 10);
  const auto cur = branch::build_targets(c.annotations[0], {}, 6, 10);
  EXPECT_EQ(t.obj, cur.obj);
  EXPECT_EQ(t.reg, cur.reg);
}

TEST(NextFrameTargets, ShiftedObjectGivesShiftedTarget) {
  data::Clip c;
  c.frames.assign(2, NdArray({1, 96, 160}));
  c.annotations = {{{num::Box{40, 30, 60, 50}, 0, 1}}, {{num::Box{42, 30, 62, 50}, 0, 1}}};
  const auto t = data::next_frame_targets(c, 0, {}, 6, 10);
  ASSERT_EQ(t.positives.size(), 1u);
  EXPECT_EQ(t.positives[0].box, (num::Box{42, 30, 62, 50}));
}

TEST(TwoRegime, SpecsAlternateRegimes) {
  data::TwoRegimeRecipe rec;
  rec.clips_per_regime = 3;
  const auto specs = data::two_regime_specs(rec);
  ASSERT_EQ(specs.size(), 6u);
  std::size_t a = 0, b = 0;
  for (const auto& s : specs) {
    if (s.regime == "A") {
      ++a;
      EXPECT_NE(s.motion, data::MotionState::kTurning);
      EXPECT_EQ(s.small_fraction, 0.0);
    } else {
      ++b;
      EXPECT_EQ(s.motion, data::MotionState::kTurning);
      EXPECT_EQ(s.speed_px_per_frame, rec.fast_speed);
    }
  }
  EXPECT_EQ(a, 3u);
  EXPECT_EQ(b, 3u);
}

TEST(Manifest, EmptyDatasetRoundTrips) {
  const auto dir = fresh_dir("dyronet_ds_empty");
  data::save_manifest({}, dir);
  EXPECT_TRUE(data::load_manifest(dir).clips.empty());
  fs::remove_all(dir);
}

TEST(Manifest, GeneratedDatasetRoundTrips) {
  const auto dir = fresh_dir("dyronet_ds_rt");
  data::TwoRegimeRecipe rec;
  rec.clips_per_regime = 2;
  rec.length = 4;
  auto specs = data::two_regime_specs(rec);
  specs.resize(3);
  const auto ds = data::generate(specs);
  data::save_manifest(ds, dir);
  const auto back = data::load_manifest(dir / "manifest.json");
  ASSERT_EQ(back.clips.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.clips[i].id, ds.clips[i].id);
    EXPECT_EQ(back.clips[i].motion, ds.clips[i].motion);
    EXPECT_EQ(back.clips[i].regime, ds.clips[i].regime);
    EXPECT_EQ(back.clips[i].frames, ds.clips[i].frames);
    EXPECT_EQ(back.clips[i].annotations, ds.clips[i].annotations);
  }
  fs::remove_all(dir);
}

TEST(Manifest, RejectsBadContent) {
  const auto dir = fresh_dir("dyronet_ds_bad");
  data::SyntheticClipSpec spec;
  spec.length = 2;
  data::save_manifest(data::Dataset{{data::gen_clip(spec, 1)}}, dir);

  nlohmann::json j;
  std::ifstream(dir / "manifest.json") >> j;
  j["clips"][0]["annotations"][0]["bbox"][2] = 0.0;
  std::ofstream(dir / "zero.json") << j.dump();
  EXPECT_THROW(data::load_manifest(dir / "zero.json"), ValidationError);

  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(data::load_manifest(dir / "broken.json"), ValidationError);

  j["clips"][0]["annotations"][0]["bbox"][2] = 4.0;
  j["clips"][0]["frames"][1] = "clips/missing.pgm";
  std::ofstream(dir / "missing.json") << j.dump();
  EXPECT_THROW(data::load_manifest(dir / "missing.json"), IoError);
  EXPECT_THROW(data::load_manifest(dir / "nowhere" / "manifest.json"), IoError);
  fs::remove_all(dir);
}

TEST(Pgm, RoundTripAndClamp) {
  const auto dir = fresh_dir("dyronet_pgm");
  fs::create_directories(dir);
  NdArray f({1, 2, 3}, {0, 12.4, 255, 300, -5, 128});
  data::write_pgm(dir / "f.pgm", f);
  EXPECT_EQ(data::read_pgm(dir / "f.pgm"), NdArray({1, 2, 3}, {0, 12, 255, 255, 0, 128}));
  fs::remove_all(dir);
}
