// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to run
// a subset, e.g. `dyronet_acceptance 1 3 7`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dyronet/bank/bank.hpp"
#include "dyronet/branchnet/checkpoint.hpp"
#include "dyronet/lora/lora.hpp"
#include "dyronet/numcore/grad_check.hpp"
#include "dyronet/router/router.hpp"
#include "dyronet/streameval/policies.hpp"
#include "dyronet/training/training.hpp"
#include "oracles.hpp"

using namespace dyronet;
using num::NdArray;
using num::ParamTensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1: gradient integrity --------------------------------------------------

// strided padded conv + bias -> relu -> 1x1 conv -> relu -> GAP -> dense,
// loss = KL(onehot || softmax) + MSE + (1 - GIoU) on a box read from the
// outputs.
double primitive_net_error(std::uint64_t seed) {
  ParamTensor k1(oracle::random_array({4, 1, 3, 3}, seed, -0.6, 0.6));
  ParamTensor b1(oracle::random_array({4}, seed + 1, -0.2, 0.2));
  ParamTensor k2(oracle::random_array({3, 4, 1, 1}, seed + 2, -0.6, 0.6));
  ParamTensor w(oracle::random_array({4, 3}, seed + 3, -0.6, 0.6));
  const NdArray x = oracle::random_array({1, 9, 9}, seed + 4, 0.0, 1.0);
  const NdArray target = NdArray::vector({0, 1, 0, 0});
  const num::Box gt{0.1, 0.2, 1.3, 1.1};
  const num::Conv2dSpec s1{2, 1}, s2{1, 0};

  struct Acts {
    NdArray h1, h2, g, z;
  };
  auto forward = [&] {
    Acts a;
    a.h1 = num::relu(num::conv2d_forward(k1.value, x, s1, &b1.value));
    a.h2 = num::relu(num::conv2d_forward(k2.value, a.h1, s2));
    a.g = num::global_avg_pool(a.h2);
    a.z = num::dense_forward(w.value, a.g);
    return a;
  };
  auto box_of = [](const NdArray& z) { return num::Box{z[0], z[1], z[0] + std::exp(z[2]), z[1] + std::exp(z[3])}; };
  auto loss_of = [&](const NdArray& z) {
    return num::kl_div(target, num::softmax(z)) + num::mse(z, target) + (1.0 - num::giou(box_of(z), gt));
  };

  num::GradCheckTarget t;
  t.params = {&k1, &b1, &k2, &w};
  t.loss = [&] { return loss_of(forward().z); };
  t.loss_and_backward = [&] {
    const Acts a = forward();
    const NdArray& z = a.z;
    NdArray gz = num::softmax(z) - target;
    gz += num::mse_grad(z, target);
    const auto gi = num::giou_with_grad(box_of(z), gt);
    gz[0] -= gi.grad_a[0] + gi.grad_a[2];
    gz[1] -= gi.grad_a[1] + gi.grad_a[3];
    gz[2] -= gi.grad_a[2] * std::exp(z[2]);
    gz[3] -= gi.grad_a[3] * std::exp(z[3]);
    const NdArray gg = num::dense_backward(w, a.g, gz);
    const NdArray gh2 = num::relu_backward(a.h2, num::global_avg_pool_backward(a.h2.shape(), gg));
    const NdArray gh1 = num::relu_backward(a.h1, num::conv2d_backward(k2, a.h1, gh2, s2));
    const auto g1 = num::conv2d_backward(k1.value, x, gh1, s1, false);
    k1.accumulate(g1.kernel);
    b1.accumulate(g1.bias);
    return loss_of(z);
  };
  return num::grad_check(t, 1e-4).max_rel_error;
}

// SP loss straight on random head logits.
double sp_loss_error(std::uint64_t seed) {
  const branch::Geometry geom{32, 48, 2};
  num::Rng rng(seed);
  std::vector<branch::Annotation> anns;
  for (int i = 0; i < 3; ++i) {
    const double x = rng.uniform(0, 36), y = rng.uniform(0, 20);
    anns.push_back({num::Box{x, y, x + rng.uniform(3, 12), y + rng.uniform(3, 12)}, static_cast<int>(rng.below(2)), i});
  }
  const auto gt = branch::build_targets(anns, geom, 4, 6);
  ParamTensor cls(oracle::random_array({2, 4, 6}, seed + 1)), obj(oracle::random_array({1, 4, 6}, seed + 2)),
      reg(oracle::random_array({4, 4, 6}, seed + 3));
  auto logits = [&] { return branch::HeadLogits{cls.value, obj.value, reg.value}; };
  num::GradCheckTarget t;
  t.params = {&cls, &obj, &reg};
  t.loss = [&] { return branch::sp_loss(logits(), gt, geom).total; };
  t.loss_and_backward = [&] {
    const auto l = branch::sp_loss(logits(), gt, geom);
    cls.accumulate(l.grad.cls);
    obj.accumulate(l.grad.obj);
    reg.accumulate(l.grad.reg);
    return l.total;
  };
  return num::grad_check(t, 1e-4).max_rel_error;
}

// E2 loss through a small router.
double e2_router_error(std::uint64_t seed) {
  router::RouterNet net(3, seed, router::RouterConfig{12, 4, 5, 4});
  const NdArray pooled = oracle::random_array({1, 12, 12}, seed + 5, -1.0, 1.0);
  const auto target = train::e2_target(NdArray::vector({0.9, 0.4, 0.7}), NdArray::vector({0.01, 0.02, 0.03}));
  num::GradCheckTarget t;
  t.params = net.params();
  t.loss = [&] { return train::e2_loss(target, num::softmax(net.logits(pooled))); };
  t.loss_and_backward = [&] {
    router::RouterNet::Trace trace;
    const NdArray p = num::softmax(net.logits(pooled, &trace));
    net.backward(trace, train::e2_loss_grad(target, p));
    return train::e2_loss(target, p);
  };
  return num::grad_check(t, 1e-4).max_rel_error;
}

// LoRA factors and input through W x + B A x.
double lora_error(std::uint64_t seed) {
  num::Rng rng(seed);
  auto ad = lora::make_adapter("w", 4, 5, 2, rng);
  ad.b.value = oracle::random_array({4, 2}, seed + 1);
  const NdArray w = oracle::random_array({4, 5}, seed + 2);
  ParamTensor x(oracle::random_array({5}, seed + 3));
  const NdArray gy = oracle::random_array({4}, seed + 4);
  auto dot = [&](const NdArray& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += y[i] * gy[i];
    return s * s;
  };
  num::GradCheckTarget t;
  t.params = {&ad.a, &ad.b, &x};
  t.loss = [&] { return dot(lora::apply(w, x.value, ad)); };
  t.loss_and_backward = [&] {
    const NdArray y = lora::apply(w, x.value, ad);
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += y[i] * gy[i];
    x.accumulate(lora::apply_backward(ad, w, x.value, gy * (2.0 * s)));
    return dot(y);
  };
  return num::grad_check(t, 1e-4).max_rel_error;
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst[4] = {0, 0, 0, 0};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    worst[0] = std::max(worst[0], primitive_net_error(seed));
    worst[1] = std::max(worst[1], sp_loss_error(seed));
    worst[2] = std::max(worst[2], e2_router_error(seed));
    worst[3] = std::max(worst[3], lora_error(seed));
  }
  const double m = std::max({worst[0], worst[1], worst[2], worst[3]});
  const double secs = seconds_since(t0);
  return {m < 1e-4 && secs < 60.0,
          fmt("max rel err %.2e (net %.1e, sp %.1e, e2 %.1e, lora %.1e) over 10 seeds, %.1fs", m, worst[0], worst[1],
              worst[2], worst[3], secs)};
}

// ---- 2: LoRA transparency ---------------------------------------------------

std::vector<eval::PredictionRecord> routed_stream(bank::ModelBank& bank, const router::RouterNet& r,
                                                  const data::Clip& clip) {
  eval::DyRoNetSystem sys(bank, r, 3, {0.05, 0.5});
  return eval::simulate_stream(sys, clip);
}

bool same_records(const std::vector<eval::PredictionRecord>& a, const std::vector<eval::PredictionRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].source_frame != b[i].source_frame || a[i].sigma != b[i].sigma ||
        a[i].available_at_ms != b[i].available_at_ms || a[i].detections.size() != b[i].detections.size())
      return false;
    for (std::size_t j = 0; j < a[i].detections.size(); ++j) {
      const auto &p = a[i].detections[j], &q = b[i].detections[j];
      if (!(p.box == q.box) || p.score != q.score || p.class_id != q.class_id) return false;
    }
  }
  return true;
}

Outcome criterion_lora() {
  const auto t0 = std::chrono::steady_clock::now();
  data::SyntheticClipSpec spec;
  spec.motion = data::MotionState::kTurning;
  spec.length = 6;
  const auto clip = data::gen_clip(spec, 5);
  std::vector<bank::Branch> br;
  br.push_back({branch::ToyDetector(branch::scale_preset("S"), {}, 1), {20.3, 0.0}});
  br.push_back({branch::ToyDetector(branch::scale_preset("L"), {}, 2), {29.9, 0.0}});
  bank::ModelBank bank(std::move(br), 0.5);
  router::RouterNet r(2, 4);

  std::vector<branch::HeadLogits> before;
  for (std::size_t i = 0; i < 2; ++i)
    before.push_back(bank[i].detector.forward(branch::make_window(clip.frames, 3, bank[i].detector.scale())));
  const auto stream_before = routed_stream(bank, r, clip);
  bank[0].detector.attach_adapters(11);
  bank[1].detector.attach_adapters(12);
  bool identical = same_records(stream_before, routed_stream(bank, r, clip));
  for (std::size_t i = 0; i < 2; ++i)
    identical &= bank[i].detector.forward(branch::make_window(clip.frames, 3, bank[i].detector.scale())) == before[i];

  num::Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(12), k = 1 + rng.below(12);
    const std::size_t rank = 1 + rng.below(std::min(d, k));
    auto ad = lora::make_adapter("w", d, k, rank, rng);
    ad.b.value = oracle::random_array({d, rank}, 500 + trial);
    const NdArray w = oracle::random_array({d, k}, 600 + trial);
    const NdArray x = oracle::random_array({k}, 700 + trial);
    const NdArray a = lora::apply(w, x, ad), b = num::dense_forward(lora::merge(w, ad), x);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  const double secs = seconds_since(t0);
  return {identical && worst <= 1e-12 && secs < 10.0,
          fmt("routed outputs %s with B = 0; apply vs merged max diff %.1e over 100 shapes, %.1fs",
              identical ? "bit-identical" : "DIFFER", worst, secs)};
}

// ---- 3: E2 target oracle -------------------------------------------------------

Outcome criterion_e2_target() {
  const auto t0 = std::chrono::steady_clock::now();
  num::Rng rng(2024);
  std::size_t mismatch = 0, shift_fail = 0, scale_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(2);
    std::vector<double> sp(k), tm(k);
    NdArray vsp({k}), vt({k});
    for (std::size_t i = 0; i < k; ++i) {
      vsp[i] = sp[i] = rng.uniform(0.0, 4.0);
      vt[i] = tm[i] = rng.uniform(-3.0, 3.0);
    }
    const std::size_t idx = train::e2_target(vsp, vt).index;
    if (idx != oracle::e2_bruteforce(sp, tm)) ++mismatch;
    NdArray shifted = vt;
    const double c = rng.uniform(-100.0, 100.0);
    for (double& v : shifted.data()) v += c;
    if (train::e2_target(vsp, shifted).index != idx) ++shift_fail;
    if (train::e2_target(vsp * rng.uniform(0.01, 100.0), vt).index != idx) ++scale_fail;
  }
  const double secs = seconds_since(t0);
  return {mismatch == 0 && shift_fail == 0 && scale_fail == 0 && secs < 5.0,
          fmt("1000 pairs: %zu oracle mismatches, %zu shift and %zu scale invariance violations, %.2fs", mismatch,
              shift_fail, scale_fail, secs)};
}

// ---- 4: KL / E2 loss ------------------------------------------------------------

Outcome criterion_e2_loss() {
  num::Rng rng(4);
  std::size_t negative = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    NdArray a({k}), b({k});
    for (std::size_t i = 0; i < k; ++i) {
      a[i] = rng.uniform(-4, 4);
      b[i] = rng.uniform(-4, 4);
    }
    const NdArray p = num::softmax(a), q = num::softmax(b);
    if (num::kl_div(p, q) < 0.0) ++negative;
    const std::size_t hot = rng.below(k);
    NdArray oh({k});
    oh[hot] = 1.0;
    worst = std::max(worst, std::abs(train::e2_loss({oh, hot}, q) + std::log(q[hot])));
  }
  return {negative == 0 && worst <= 1e-12,
          fmt("%zu negative KL values in 1000 pairs; |e2_loss + log f_r[target]| max %.1e", negative, worst)};
}

// ---- 5: sAP protocol -------------------------------------------------------------

class GroundTruthSystem : public eval::StreamingSystem {
 public:
  explicit GroundTruthSystem(double latency) : latency_(latency) {}
  eval::FrameOutput process(const data::Clip& clip, std::size_t frame) override {
    eval::FrameOutput out;
    for (const auto& a : clip.annotations[frame]) out.detections.push_back({a.box, a.class_id, 1.0});
    out.latency_ms = latency_;
    return out;
  }

 private:
  double latency_;
};

Outcome criterion_sap() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<data::Clip> clips;
  const data::MotionState states[] = {data::MotionState::kStop, data::MotionState::kStraight,
                                      data::MotionState::kTurning};
  for (std::uint64_t i = 0; i < 5; ++i) {
    data::SyntheticClipSpec spec;
    spec.motion = states[i % 3];
    spec.speed_px_per_frame = spec.motion == data::MotionState::kStop ? 0.0 : 3.0;
    spec.small_fraction = 0.25;
    clips.push_back(data::gen_clip(spec, 40 + i));
  }
  bool perfect = true, starving = true, schedule = true;
  double worst_perfect = 100.0, best_starving = 0.0;
  for (const auto& clip : clips) {
    GroundTruthSystem zero(0.0), slow(1e6), fifty(50.0);
    const double p = eval::sap(eval::simulate_stream(zero, clip), clip).sAP;
    const double s = eval::sap(eval::simulate_stream(slow, clip), clip).sAP;
    worst_perfect = std::min(worst_perfect, p);
    best_starving = std::max(best_starving, s);
    perfect &= p == 100.0;
    starving &= s == 0.0;
    const auto recs = eval::simulate_stream(fifty, clip);
    schedule &= recs.size() == (clip.length() + 1) / 2;
    for (std::size_t i = 0; i < recs.size(); ++i) schedule &= recs[i].source_frame == 2 * i;
  }
  const double secs = seconds_since(t0);
  return {perfect && starving && schedule && secs < 30.0,
          fmt("oracle sAP min %.4f, starving sAP max %.4f, 50 ms schedule %s on 5 clips, %.1fs", worst_perfect,
              best_starving, schedule ? "every other frame" : "WRONG", secs)};
}

// ---- 6: diff-curve ordering ------------------------------------------------------

Outcome criterion_diff_order() {
  std::size_t violations = 0, checks = 0;
  auto totals = [](data::MotionState m, double speed, std::uint64_t seed) {
    data::SyntheticClipSpec spec;
    spec.motion = m;
    spec.speed_px_per_frame = speed;
    std::vector<double> t;
    for (const auto& c : router::diff_mean_curves(data::gen_clip(spec, seed).frames, router::default_curve_sizes())) {
      double s = 0.0;
      for (double v : c.mean_abs_diff) s += v;
      t.push_back(s / static_cast<double>(c.mean_abs_diff.size()));
    }
    return t;
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto stop = totals(data::MotionState::kStop, 0.0, seed);
    const auto straight = totals(data::MotionState::kStraight, 2.0, seed);
    const auto turn = totals(data::MotionState::kTurning, 2.0, seed);
    for (std::size_t s = 0; s < stop.size(); ++s) {
      checks += 2;
      violations += !(stop[s] < straight[s]);
      violations += !(straight[s] < turn[s]);
    }
  }
  return {violations == 0 && checks == 20 * 4 * 2,
          fmt("%zu violations of stop < straight < turning in %zu comparisons (20 seeds x 4 sizes)", violations,
              checks)};
}

// ---- 7: routing benefit ----------------------------------------------------------

data::Dataset only_regime(const data::Dataset& d, const std::string& r) {
  data::Dataset out;
  for (const auto& c : d.clips)
    if (c.regime == r) out.clips.push_back(c);
  return out;
}

Outcome criterion_routing_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  data::TwoRegimeRecipe rec;
  rec.seed = 1;
  const auto train_set = data::generate(data::two_regime_specs(rec));
  data::TwoRegimeRecipe test_rec = rec;
  test_rec.seed = 99;
  test_rec.clips_per_regime = 4;
  const auto test_set = data::generate(data::two_regime_specs(test_rec));
  data::TwoRegimeRecipe pre_rec = rec;
  pre_rec.seed = 2;
  pre_rec.clips_per_regime = 16;
  const auto pre_set = data::generate(data::two_regime_specs(pre_rec));

  // The small branch only ever sees calm scenes before fine-tuning; the large
  // one sees everything.
  train::PretrainConfig pc;
  pc.epochs = 12;
  pc.lr = 0.02;
  branch::ToyDetector small(branch::scale_preset("S"), {}, 7);
  branch::ToyDetector large(branch::scale_preset("L"), {}, 7);
  train::pretrain(small, only_regime(pre_set, "A"), pc);
  train::pretrain(large, pre_set, pc);
  std::printf("  pretrained S and L in %.0fs\n", seconds_since(t0));

  train::TrainConfig cfg;  // 10 + 5 epochs, batch 4, lr 0.001 * 4 / 64
  const eval::DetectParams dp{0.5, 0.5};
  int passed = 0;
  std::string summary;
  for (int s = 0; s < 5; ++s) {
    std::vector<bank::Branch> br{{small, {20.3, 0.0}}, {large, {29.9, 0.0}}};
    for (std::size_t i = 0; i < 2; ++i) br[i].detector.attach_adapters(1000 + 10 * s + i);
    bank::ModelBank bank(std::move(br), 0.5);
    router::RouterNet router(2, 500 + s), gate(2, 900 + s);
    cfg.seed = static_cast<std::uint64_t>(s);
    train::train_schedule(bank, router, train_set, cfg);
    train::train_moe_gate(bank, gate, train_set, cfg);

    std::map<std::string, eval::SAPReport> r;
    for (const char* p : {"dyronet", "random", "sign", "moe"}) {
      bank.reset_executions();
      auto sys = eval::make_system(eval::parse_policy(p), bank, router, &gate, 77 + s, dp);
      r[p] = eval::evaluate(*sys, test_set, 2);
    }
    const bool a = r["dyronet"].sAP >= r["random"].sAP + 1.0;
    const bool b = r["dyronet"].mean_latency_ms <= 0.6 * r["moe"].mean_latency_ms;
    const bool c = r["dyronet"].sAP >= r["sign"].sAP;
    passed += a && b && c;
    std::printf(
        "  seed %d: dyronet %.2f sAP @ %.2f ms (L %.0f%%) | random %.2f | sign %.2f | moe %.2f @ %.2f ms | "
        "a=%d b=%d c=%d\n",
        s, r["dyronet"].sAP, r["dyronet"].mean_latency_ms, r["dyronet"].selection_percent[1], r["random"].sAP,
        r["sign"].sAP, r["moe"].sAP, r["moe"].mean_latency_ms, a, b, c);
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);
  return {passed >= 4 && secs < 15 * 60.0, fmt("%d/5 training seeds satisfy all three checks (need 4), %.0fs", passed, secs)};
}

// ---- 8: dominance --------------------------------------------------------------

Outcome criterion_dominance() {
  auto frames_of = [](std::uint64_t seed) {
    data::TwoRegimeRecipe rec;
    rec.clips_per_regime = 3;
    rec.length = 8;
    rec.seed = seed;
    std::vector<NdArray> pooled;
    for (const auto& clip : data::generate(data::two_regime_specs(rec)).clips)
      for (std::size_t f = 0; f + 1 < clip.length(); ++f) pooled.push_back(train::sample_diff(clip, f, 50).pooled);
    return pooled;
  };
  const auto train_frames = frames_of(10), held_frames = frames_of(11);
  const NdArray v_time = NdArray::vector({0.0203, 0.0299});
  double worst = 1.0;
  for (std::size_t dominant : {0u, 1u}) {
    // The dominant branch is both cheaper and more accurate everywhere.
    const NdArray times = dominant == 0 ? v_time : NdArray::vector({v_time[1], v_time[0]});
    auto samples = [&](const std::vector<NdArray>& frames, std::uint64_t seed) {
      num::Rng rng(seed);
      std::vector<train::RouterSample> out;
      for (const auto& p : frames) {
        NdArray sp({2});
        sp[dominant] = rng.uniform(0.1, 0.5);
        sp[1 - dominant] = rng.uniform(0.6, 2.0);
        out.push_back({p, sp});
      }
      return out;
    };
    router::RouterNet r(2, 31 + dominant);
    train::TrainConfig cfg;
    train::train_router_on(r, samples(train_frames, 1), times, cfg);
    std::size_t hits = 0;
    for (const auto& p : held_frames) hits += num::argmax(r.logits(p)) == dominant;
    worst = std::min(worst, static_cast<double>(hits) / static_cast<double>(held_frames.size()));
  }
  return {worst >= 0.99, fmt("dominant branch chosen on %.1f%% of held-out frames (worst of both orderings)", 100 * worst)};
}

// ---- 9: phase isolation ----------------------------------------------------------

Outcome criterion_phase_isolation() {
  data::TwoRegimeRecipe rec;
  rec.clips_per_regime = 1;
  rec.length = 5;
  const auto ds = data::generate(data::two_regime_specs(rec));
  std::vector<bank::Branch> br;
  br.push_back({branch::ToyDetector(branch::scale_preset("S"), {}, 1), {20.3, 0.0}});
  br.push_back({branch::ToyDetector(branch::scale_preset("M"), {}, 2), {25.0, 0.0}});
  for (std::size_t i = 0; i < 2; ++i) br[i].detector.attach_adapters(3 + i);
  bank::ModelBank bank(std::move(br), 0.5);
  router::RouterNet r(2, 9);
  auto digest = [&] {
    std::vector<std::uint64_t> d;
    for (std::size_t i = 0; i < 2; ++i) {
      d.push_back(branch::checkpoint_digest(bank[i].detector.base_tensors()));
      d.push_back(branch::checkpoint_digest(bank[i].detector.adapter_tensors()));
    }
    d.push_back(branch::checkpoint_digest(r.tensors()));
    return d;
  };
  train::TrainConfig cfg;
  cfg.lr_per_64 = 0.1;
  const auto d0 = digest();
  train::train_branches(bank, r, ds, cfg, nullptr, 1);
  const auto d1 = digest();
  train::train_router(bank, r, ds, cfg, nullptr, 1);
  const auto d2 = digest();
  const bool p1_router = d1[4] == d0[4];
  const bool p1_base = d1[0] == d0[0] && d1[2] == d0[2];
  const bool p1_moved = d1[1] != d0[1] || d1[3] != d0[3];
  const bool p2_branches = d2[0] == d1[0] && d2[1] == d1[1] && d2[2] == d1[2] && d2[3] == d1[3];
  const bool p2_moved = d2[4] != d1[4];
  return {p1_router && p1_base && p1_moved && p2_branches && p2_moved,
          fmt("phase 1: router %s, bases %s, adapters %s; phase 2: branches %s, router %s",
              p1_router ? "unchanged" : "CHANGED", p1_base ? "unchanged" : "CHANGED", p1_moved ? "updated" : "static",
              p2_branches ? "unchanged" : "CHANGED", p2_moved ? "updated" : "static")};
}

// ---- 10: statistics ----------------------------------------------------------

Outcome criterion_statistics() {
  // Every x, y in {0,1,2}^n for n = 2..6 with non-constant x and y.
  std::size_t cases = 0, mismatches = 0;
  for (std::size_t n = 2; n <= 6; ++n) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 3;
    std::vector<std::vector<double>> vecs;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<double> v(n);
      std::size_t c = code;
      for (std::size_t i = 0; i < n; ++i, c /= 3) v[i] = static_cast<double>(c % 3);
      if (std::any_of(v.begin(), v.end(), [&](double a) { return a != v[0]; })) vecs.push_back(v);
    }
    const std::size_t stride = n <= 4 ? 1 : 7;
    for (std::size_t i = 0; i < vecs.size(); ++i)
      for (std::size_t j = 0; j < vecs.size(); j += stride) {
        ++cases;
        if (std::abs(eval::spearman(vecs[i], vecs[j]) - oracle::spearman(vecs[i], vecs[j])) > 1e-12) ++mismatches;
      }
  }
  const double sop = eval::small_object_proportion(
      {num::Box::from_xywh(0, 0, 5, 10), num::Box::from_xywh(0, 0, 10, 20), num::Box::from_xywh(0, 0, 9, 11)},
      100.0 * 100.0);
  const double cv = eval::count_variance({1, 3});
  const double rho = eval::spearman({1, 2, 3}, {2, 1, 3});
  num::Rng rng(10);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> sel(1 + rng.below(500));
    for (auto& v : sel) v = rng.below(3);
    const auto p = eval::selection_stats(sel, 3);
    worst_sum = std::max(worst_sum, std::abs(p[0] + p[1] + p[2] - 100.0));
  }
  const bool ok = mismatches == 0 && std::abs(sop - 2.0 / 3.0) < 1e-12 && cv == 1.0 && std::abs(rho - 0.5) < 1e-12 &&
                  worst_sum <= 0.01;
  return {ok, fmt("spearman %zu/%zu oracle mismatches; small-object %.4f; variance %.1f; rho %.2f; selection sum err %.1e",
                  mismatches, cases, sop, cv, rho, worst_sum)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", criterion_gradients},
      {"LoRA transparency and merge", criterion_lora},
      {"E2 target oracle and invariances", criterion_e2_target},
      {"KL / E2 loss properties", criterion_e2_loss},
      {"sAP protocol", criterion_sap},
      {"frame-difference ordering by motion state", criterion_diff_order},
      {"routing benefit on the two-regime benchmark", criterion_routing_benefit},
      {"router learns a dominant branch", criterion_dominance},
      {"phase isolation", criterion_phase_isolation},
      {"statistics utilities", criterion_statistics},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
