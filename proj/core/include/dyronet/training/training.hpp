#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dyronet/bank/bank.hpp"
#include "dyronet/dataset/synth.hpp"
#include "dyronet/numcore/ops.hpp"
#include "dyronet/router/router.hpp"

namespace dyronet::train {

struct TrainConfig {
  std::size_t batch_size = 4;
  std::size_t epochs_branch = 10;
  std::size_t epochs_router = 5;
  std::size_t warmup_epochs = 1;
  double lr_per_64 = 0.001;  // lr = lr_per_64 * batch_size / 64
  double momentum = 0.9;
  // v_time is expressed in this unit before the softmax.
  double time_unit_ms = 1000.0;
  // 0: branches then router. N > 0: N rounds of (branches, router), each
  // with ceil(epochs / N) epochs.
  std::size_t alternate = 0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  double lr() const;
};

// Throws ValidationError for zero batch size, non-positive lr or time unit,
// or momentum outside [0, 1).
void validate(const TrainConfig& cfg);

// Linear warm-up from 0 over `warmup_steps`, then cosine decay to 0 at
// `total_steps`.
struct LrSchedule {
  double base_lr = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;

  double at(std::size_t step) const;
};

LrSchedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch, std::size_t epochs);
double lr_at(std::size_t step, const TrainConfig& cfg, std::size_t steps_per_epoch,
             std::size_t epochs);

// Momentum SGD without weight decay: v = mu * v + g; p -= lr * v. Frozen
// tensors are skipped.
class MomentumSgd {
 public:
  MomentumSgd(std::vector<num::ParamTensor*> params, double momentum);
  void step(double lr);
  void scale_grads(double s);
  void zero_grad();

 private:
  std::vector<num::ParamTensor*> params_;
  std::vector<num::NdArray> velocity_;
  double momentum_;
};

double total_loss(double l_sp, double l_e2);

struct E2Target {
  num::NdArray onehot;
  std::size_t index = 0;
};

// one-hot(argmin_k softmax(v_time)_k * v_sp_k), lowest index on ties.
E2Target e2_target(const num::NdArray& v_sp, const num::NdArray& v_time);
// KL(target || f_r) which for a one-hot target is -log f_r[index].
double e2_loss(const E2Target& target, const num::NdArray& f_r);
// Same value computed from the logits as logsumexp(logits) - logits[index],
// which stays finite when the softmax saturates.
double e2_loss_from_logits(const E2Target& target, const num::NdArray& logits);
// d e2_loss / d logits when f_r = softmax(logits).
num::NdArray e2_loss_grad(const E2Target& target, const num::NdArray& f_r);

// Latency vector of the bank in units of cfg.time_unit_ms.
num::NdArray time_vector(const bank::ModelBank& bank, double time_unit_ms);

struct StepRecord {
  std::size_t step = 0;
  std::string phase;
  std::size_t sigma = 0;
  double l_sp = 0.0;
  double l_e2 = 0.0;
  double lr = 0.0;
};

// Collects step records; optionally streams them as JSON lines.
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(std::ostream* sink) : sink_(sink) {}
  void add(const StepRecord& r);
  const std::vector<StepRecord>& records() const { return records_; }
  std::vector<std::size_t> selections(const std::string& phase) const;

 private:
  std::ostream* sink_ = nullptr;
  std::vector<StepRecord> records_;
  std::size_t next_step_ = 0;
};

std::string to_jsonl(const StepRecord& r);

// One (clip, frame) training sample: inputs end at `frame`, targets come
// from frame + 1.
struct SampleRef {
  std::size_t clip = 0;
  std::size_t frame = 0;
};

std::vector<SampleRef> enumerate_samples(const data::Dataset& ds);
router::FrameDiff sample_diff(const data::Clip& clip, std::size_t frame, std::size_t pooled_size);

struct PhaseReport {
  std::vector<std::size_t> selections;  // samples per branch
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
};

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t warmup_epochs = 1;
  std::uint64_t seed = 0;
};

// Full training of the base weights (adapters, if any, stay frozen).
PhaseReport pretrain(branch::ToyDetector& det, const data::Dataset& ds, const PretrainConfig& cfg,
                     TrainLog* log = nullptr);

// Phase 1: every sample is routed by the (frozen) router and only the
// selected branch's adapters receive the SP-loss gradient.
PhaseReport train_branches(bank::ModelBank& bank, const router::RouterNet& router,
                           const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log = nullptr,
                           std::size_t epochs = 0);

struct RouterSample {
  num::NdArray pooled;  // router input
  num::NdArray v_sp;    // per-branch SP loss
};

// Evaluates every (frozen) branch on every sample.
std::vector<RouterSample> collect_router_samples(const bank::ModelBank& bank,
                                                 const router::RouterNet& router,
                                                 const data::Dataset& ds, std::size_t workers = 1);

// Phase 2 on precomputed samples: steps the router on the E2 loss.
PhaseReport train_router_on(router::RouterNet& router, const std::vector<RouterSample>& samples,
                            const num::NdArray& v_time, const TrainConfig& cfg,
                            TrainLog* log = nullptr, std::size_t epochs = 0);

PhaseReport train_router(const bank::ModelBank& bank, router::RouterNet& router,
                         const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log = nullptr,
                         std::size_t epochs = 0);

// Fraction of samples where the router's argmax equals the E2 target.
double routing_accuracy(const router::RouterNet& router, const std::vector<RouterSample>& samples,
                        const num::NdArray& v_time);

// Sequential or alternating schedule over both phases.
struct ScheduleReport {
  std::vector<PhaseReport> branch_phases;
  std::vector<PhaseReport> router_phases;
};

ScheduleReport train_schedule(bank::ModelBank& bank, router::RouterNet& router,
                              const data::Dataset& ds, const TrainConfig& cfg,
                              TrainLog* log = nullptr);

// MoE baseline: trains the gate on the SP loss of the gate-weighted logit
// mixture with all branches frozen.
PhaseReport train_moe_gate(const bank::ModelBank& bank, router::RouterNet& gate,
                           const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log = nullptr,
                           std::size_t epochs = 0);

}  // namespace dyronet::train
