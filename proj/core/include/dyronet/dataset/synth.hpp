#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyronet/branchnet/head.hpp"
#include "dyronet/branchnet/scale.hpp"
#include "dyronet/numcore/ndarray.hpp"

namespace dyronet::data {

enum class MotionState { kStop, kStraight, kTurning };

std::string to_string(MotionState m);
MotionState parse_motion_state(const std::string& s);

struct SyntheticClipSpec {
  MotionState motion = MotionState::kStraight;
  double speed_px_per_frame = 2.0;
  std::size_t n_objects = 4;
  double small_fraction = 0.0;
  std::size_t height = 96;
  std::size_t width = 160;
  std::size_t length = 16;
  std::size_t num_classes = 1;
  // Rotation per frame (radians) added on top of the flow when turning.
  double turn_rate = 0.02;
  std::uint64_t seed = 0;
  std::string regime;  // optional free-form tag, e.g. "A" / "B"
};

// Throws ValidationError for inconsistent specs (stop with speed, fractions
// outside [0, 1], zero length, objects that cannot fit the frame, ...).
void validate(const SyntheticClipSpec& spec);

struct Clip {
  std::string id;
  std::vector<num::NdArray> frames;                           // [1 x H x W], 0..255
  std::vector<std::vector<branch::Annotation>> annotations;  // per frame
  double fps = 30.0;
  MotionState motion = MotionState::kStop;
  std::string regime;

  std::size_t length() const { return frames.size(); }
};

// Deterministic for a given (spec, seed): all pixel synthesis is integer
// arithmetic on fixed-point coordinates.
Clip gen_clip(const SyntheticClipSpec& spec, std::uint64_t seed);

// Targets for frame i + 1 while the inputs end at frame i. Throws
// RangeError when i is the last frame.
branch::GroundTruthTargets next_frame_targets(const Clip& clip, std::size_t i,
                                              const branch::Geometry& geom, std::size_t grid_h,
                                              std::size_t grid_w);

struct Dataset {
  std::vector<Clip> clips;
};

struct TwoRegimeRecipe {
  std::size_t clips_per_regime = 8;
  std::size_t length = 16;
  std::uint64_t seed = 0;
  // Regime A: ego stopped or slow, large objects.
  double slow_speed = 1.0;
  // Regime B: turning fast with many small objects.
  double fast_speed = 4.0;
  double fast_small_fraction = 0.5;
  std::size_t n_objects = 4;
};

std::vector<SyntheticClipSpec> two_regime_specs(const TwoRegimeRecipe& recipe);
Dataset generate(const std::vector<SyntheticClipSpec>& specs);

}  // namespace dyronet::data
