#include "dyronet/dataset/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dyronet/error.hpp"

namespace dyronet::data {

using num::NdArray;

std::string to_string(MotionState m) {
  switch (m) {
    case MotionState::kStop:
      return "stop";
    case MotionState::kStraight:
      return "straight";
    case MotionState::kTurning:
      return "turning";
  }
  return "stop";
}

MotionState parse_motion_state(const std::string& s) {
  if (s == "stop") return MotionState::kStop;
  if (s == "straight") return MotionState::kStraight;
  if (s == "turning") return MotionState::kTurning;
  throw ValidationError("unknown motion state '" + s + "'");
}

namespace {

constexpr std::int64_t kQ = 256;  // fixed-point scale for pixel coordinates
constexpr std::int64_t kRegularMin = 16, kRegularMax = 32;
constexpr std::int64_t kSmallMin = 6, kSmallMax = 12;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class IntRng {
 public:
  explicit IntRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return state_ = splitmix(state_); }
  // Uniform-ish integer in [lo, hi]; the modulo bias is irrelevant here.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::uint64_t state_;
};

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::uint64_t octave) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(ix) * 0x100000001B3ULL ^
                                                   splitmix(static_cast<std::uint64_t>(iy) + octave)));
  return static_cast<std::int64_t>(h & 0xFF);
}

// Bilinear value noise on a lattice of `spacing` pixels, sampled at Q8
// coordinates. Returns 0..255.
std::int64_t value_noise(std::uint64_t seed, std::int64_t u, std::int64_t v, std::int64_t spacing,
                         std::uint64_t octave) {
  const std::int64_t len = spacing * kQ;
  const std::int64_t ix = floor_div(u, len), iy = floor_div(v, len);
  const std::int64_t fx = u - ix * len, fy = v - iy * len;
  const std::int64_t a = lattice(seed, ix, iy, octave);
  const std::int64_t b = lattice(seed, ix + 1, iy, octave);
  const std::int64_t c = lattice(seed, ix, iy + 1, octave);
  const std::int64_t d = lattice(seed, ix + 1, iy + 1, octave);
  const std::int64_t gx = len - fx, gy = len - fy;
  const std::int64_t num = a * gx * gy + b * fx * gy + c * gx * fy + d * fx * fy;
  return num / (len * len);
}

std::int64_t background(std::uint64_t seed, std::int64_t u, std::int64_t v) {
  const std::int64_t coarse = value_noise(seed, u, v, 16, 1);
  const std::int64_t fine = value_noise(seed, u, v, 4, 2);
  const std::int64_t tex = (2 * coarse + fine) / 3;  // 0..255
  return 40 + tex * 150 / 255;
}

struct Object {
  std::int64_t x, y;    // top-left, Q8
  std::int64_t vx, vy;  // Q8 per frame
  std::int64_t w, h;    // pixels
  std::int64_t intensity;
  int class_id;
  int track_id;
};

void bounce(std::int64_t& pos, std::int64_t& vel, std::int64_t max_pos) {
  if (pos < 0) {
    pos = -pos;
    vel = -vel;
  }
  if (pos > max_pos) {
    pos = 2 * max_pos - pos;
    vel = -vel;
  }
  if (pos < 0) pos = 0;  // only for velocities larger than the free range
}

}  // namespace

void validate(const SyntheticClipSpec& spec) {
  if (spec.length == 0) throw ValidationError("clip length must be positive");
  if (!(spec.speed_px_per_frame >= 0.0) || !std::isfinite(spec.speed_px_per_frame)) {
    throw ValidationError("speed must be a finite non-negative number");
  }
  if (spec.motion == MotionState::kStop && spec.speed_px_per_frame != 0.0) {
    throw ValidationError("a stop clip must have speed 0");
  }
  if (!(spec.small_fraction >= 0.0 && spec.small_fraction <= 1.0)) {
    throw ValidationError("small_fraction must be in [0, 1]");
  }
  if (spec.num_classes == 0) throw ValidationError("num_classes must be positive");
  if (!std::isfinite(spec.turn_rate)) throw ValidationError("turn_rate must be finite");
  const auto n_small =
      static_cast<std::size_t>(std::llround(static_cast<double>(spec.n_objects) * spec.small_fraction));
  const bool has_regular = spec.n_objects > n_small;
  const auto need = static_cast<std::size_t>(has_regular ? kRegularMax : kSmallMax);
  if (spec.n_objects > 0 && (spec.height < need || spec.width < need)) {
    throw ValidationError("objects cannot fit a " + std::to_string(spec.height) + "x" +
                          std::to_string(spec.width) + " frame");
  }
  if (n_small > 0 && static_cast<std::size_t>(kSmallMin * kSmallMin * 100) >= spec.height * spec.width) {
    throw ValidationError("frame too small for objects under the 1% area rule");
  }
  if (spec.n_objects > 64) throw ValidationError("at most 64 objects per clip");
}

Clip gen_clip(const SyntheticClipSpec& spec, std::uint64_t seed) {
  validate(spec);
  const auto H = static_cast<std::int64_t>(spec.height);
  const auto W = static_cast<std::int64_t>(spec.width);
  const bool moving = spec.motion != MotionState::kStop;
  const bool turning = spec.motion == MotionState::kTurning;
  const std::int64_t speed = moving ? std::llround(spec.speed_px_per_frame * kQ) : 0;
  const std::int64_t turn = turning ? std::llround(spec.turn_rate * 65536.0) : 0;  // Q16 rad
  const std::uint64_t tex_seed = splitmix(seed ^ 0x7465787475726531ULL);
  IntRng rng(splitmix(seed ^ 0x6F626A6563747331ULL));

  const auto n_small = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.n_objects) * spec.small_fraction));
  const std::int64_t frame_area = H * W;
  std::vector<Object> objects;
  for (std::size_t i = 0; i < spec.n_objects; ++i) {
    Object o{};
    if (i < n_small) {
      o.w = rng.range(kSmallMin, kSmallMax);
      std::int64_t h_max = kSmallMax;
      while (o.w * h_max * 100 >= frame_area) --h_max;
      o.h = rng.range(kSmallMin, h_max);
    } else {
      o.w = rng.range(kRegularMin, std::min(kRegularMax, W));
      o.h = rng.range(kRegularMin, std::min(kRegularMax, H));
    }
    o.x = rng.range(0, (W - o.w) * kQ);
    o.y = rng.range(0, (H - o.h) * kQ);
    if (moving) {
      o.vx = speed * rng.range(-384, 384) / 256;
      o.vy = speed * rng.range(-256, 256) / 512 + (turning ? speed / 2 : 0);
    }
    o.class_id = static_cast<int>(rng.range(0, static_cast<std::int64_t>(spec.num_classes) - 1));
    o.intensity = o.class_id % 2 == 0 ? rng.range(215, 250) : rng.range(5, 30);
    o.track_id = static_cast<int>(i);
    objects.push_back(o);
  }

  Clip clip;
  clip.motion = spec.motion;
  clip.regime = spec.regime;
  clip.fps = 30.0;
  const std::int64_t cx = W / 2, cy = H / 2;
  for (std::size_t t = 0; t < spec.length; ++t) {
    const auto ti = static_cast<std::int64_t>(t);
    const std::int64_t off_x = ti * speed;
    const std::int64_t off_y = turning ? ti * speed / 2 : 0;
    const std::int64_t theta = ti * turn;
    NdArray frame({1, spec.height, spec.width});
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        // Small-angle rotation about the frame centre, all in Q8.
        const std::int64_t u = x * kQ + off_x - floor_div(theta * (y - cy), 256);
        const std::int64_t v = y * kQ + off_y + floor_div(theta * (x - cx), 256);
        frame[static_cast<std::size_t>(y * W + x)] = static_cast<double>(background(tex_seed, u, v));
      }
    }
    std::vector<branch::Annotation> anns;
    for (const Object& o : objects) {
      const std::int64_t x0 = std::clamp<std::int64_t>((o.x + kQ / 2) / kQ, 0, W - o.w);
      const std::int64_t y0 = std::clamp<std::int64_t>((o.y + kQ / 2) / kQ, 0, H - o.h);
      for (std::int64_t y = y0; y < y0 + o.h; ++y)
        for (std::int64_t x = x0; x < x0 + o.w; ++x)
          frame[static_cast<std::size_t>(y * W + x)] = static_cast<double>(o.intensity);
      anns.push_back({num::Box{static_cast<double>(x0), static_cast<double>(y0),
                               static_cast<double>(x0 + o.w), static_cast<double>(y0 + o.h)},
                      o.class_id, o.track_id});
    }
    clip.frames.push_back(std::move(frame));
    clip.annotations.push_back(std::move(anns));
    for (Object& o : objects) {
      o.x += o.vx;
      o.y += o.vy;
      bounce(o.x, o.vx, (W - o.w) * kQ);
      bounce(o.y, o.vy, (H - o.h) * kQ);
    }
  }
  return clip;
}

branch::GroundTruthTargets next_frame_targets(const Clip& clip, std::size_t i,
                                              const branch::Geometry& geom, std::size_t grid_h,
                                              std::size_t grid_w) {
  if (i + 1 >= clip.length()) {
    throw RangeError("next_frame_targets: frame " + std::to_string(i) + " has no successor");
  }
  return branch::build_targets(clip.annotations[i + 1], geom, grid_h, grid_w);
}

std::vector<SyntheticClipSpec> two_regime_specs(const TwoRegimeRecipe& recipe) {
  std::vector<SyntheticClipSpec> specs;
  for (std::size_t i = 0; i < recipe.clips_per_regime; ++i) {
    SyntheticClipSpec a;
    a.motion = i % 2 == 0 ? MotionState::kStop : MotionState::kStraight;
    a.speed_px_per_frame = a.motion == MotionState::kStop ? 0.0 : recipe.slow_speed;
    a.n_objects = recipe.n_objects;
    a.small_fraction = 0.0;
    a.length = recipe.length;
    a.seed = recipe.seed * 1000 + 2 * i;
    a.regime = "A";
    specs.push_back(a);

    SyntheticClipSpec b;
    b.motion = MotionState::kTurning;
    b.speed_px_per_frame = recipe.fast_speed;
    b.n_objects = recipe.n_objects;
    b.small_fraction = recipe.fast_small_fraction;
    b.length = recipe.length;
    b.seed = recipe.seed * 1000 + 2 * i + 1;
    b.regime = "B";
    specs.push_back(b);
  }
  return specs;
}

Dataset generate(const std::vector<SyntheticClipSpec>& specs) {
  Dataset ds;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Clip c = gen_clip(specs[i], specs[i].seed);
    char id[32];
    std::snprintf(id, sizeof(id), "clip_%04zu", i);
    c.id = id;
    ds.clips.push_back(std::move(c));
  }
  return ds;
}

}  // namespace dyronet::data
