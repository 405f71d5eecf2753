#include "dyronet/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dyronet/error.hpp"

namespace dyronet::train {

using num::NdArray;

double TrainConfig::lr() const { return lr_per_64 * static_cast<double>(batch_size) / 64.0; }

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw ValidationError("batch size must be positive");
  if (!(cfg.lr() > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
  if (!(cfg.time_unit_ms > 0.0)) throw ValidationError("time unit must be positive");
  if (cfg.workers == 0) throw ValidationError("workers must be >= 1");
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return 0.0;
  const double progress = std::min(
      1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

LrSchedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch, std::size_t epochs) {
  LrSchedule s;
  s.base_lr = cfg.lr();
  s.total_steps = steps_per_epoch * epochs;
  s.warmup_steps = steps_per_epoch * std::min(cfg.warmup_epochs, epochs);
  return s;
}

double lr_at(std::size_t step, const TrainConfig& cfg, std::size_t steps_per_epoch,
             std::size_t epochs) {
  return make_schedule(cfg, steps_per_epoch, epochs).at(step);
}

MomentumSgd::MomentumSgd(std::vector<num::ParamTensor*> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  for (const num::ParamTensor* p : params_) velocity_.emplace_back(p->value.shape());
}

void MomentumSgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    num::ParamTensor& p = *params_[i];
    if (!p.trainable) continue;
    NdArray& v = velocity_[i];
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = momentum_ * v[k] + p.grad[k];
      p.value[k] -= lr * v[k];
    }
  }
}

void MomentumSgd::scale_grads(double s) {
  for (num::ParamTensor* p : params_) p->grad *= s;
}

void MomentumSgd::zero_grad() {
  for (num::ParamTensor* p : params_) p->zero_grad();
}

double total_loss(double l_sp, double l_e2) {
  if (l_sp < 0.0 || l_e2 < 0.0) throw ValueError("loss terms must be non-negative");
  return l_sp + l_e2;
}

E2Target e2_target(const NdArray& v_sp, const NdArray& v_time) {
  if (v_sp.rank() != 1 || v_sp.shape() != v_time.shape() || v_sp.size() == 0) {
    throw DimensionError("e2_target: v_sp " + num::shape_string(v_sp.shape()) + " vs v_time " +
                         num::shape_string(v_time.shape()));
  }
  for (double v : v_sp.data())
    if (!(v >= 0.0)) throw ValueError("e2_target: v_sp must be non-negative");
  NdArray weighted = num::softmax(v_time);
  for (std::size_t k = 0; k < weighted.size(); ++k) weighted[k] *= v_sp[k];
  E2Target t;
  t.index = num::argmin(weighted);
  t.onehot = NdArray(v_sp.shape());
  t.onehot[t.index] = 1.0;
  return t;
}

double e2_loss(const E2Target& target, const NdArray& f_r) {
  if (f_r.shape() != target.onehot.shape()) throw DimensionError("e2_loss: shape mismatch");
  return num::kl_div(target.onehot, f_r);
}

double e2_loss_from_logits(const E2Target& target, const NdArray& logits) {
  if (logits.shape() != target.onehot.shape()) throw DimensionError("e2_loss: shape mismatch");
  require_finite(logits, "router logits");
  double m = logits[0];
  for (double v : logits.data()) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - m);
  return m + std::log(z) - logits[target.index];
}

NdArray e2_loss_grad(const E2Target& target, const NdArray& f_r) {
  if (f_r.shape() != target.onehot.shape()) throw DimensionError("e2_loss_grad: shape mismatch");
  return f_r - target.onehot;
}

NdArray time_vector(const bank::ModelBank& bank, double time_unit_ms) {
  if (!(time_unit_ms > 0.0)) throw ValidationError("time unit must be positive");
  NdArray v({bank.size()});
  for (std::size_t i = 0; i < bank.size(); ++i) v[i] = bank[i].latency.base_ms / time_unit_ms;
  return v;
}

std::string to_jsonl(const StepRecord& r) {
  const nlohmann::json j = {{"step", r.step}, {"phase", r.phase}, {"sigma", r.sigma},
                            {"l_sp", r.l_sp}, {"l_e2", r.l_e2},   {"lr", r.lr}};
  return j.dump();
}

void TrainLog::add(const StepRecord& r) {
  StepRecord rec = r;
  rec.step = next_step_++;
  if (sink_) *sink_ << to_jsonl(rec) << '\n';
  records_.push_back(std::move(rec));
}

std::vector<std::size_t> TrainLog::selections(const std::string& phase) const {
  std::vector<std::size_t> out;
  for (const StepRecord& r : records_) {
    if (r.phase == phase) out.push_back(r.sigma);
  }
  return out;
}

std::vector<SampleRef> enumerate_samples(const data::Dataset& ds) {
  std::vector<SampleRef> out;
  for (std::size_t c = 0; c < ds.clips.size(); ++c) {
    for (std::size_t t = 0; t + 1 < ds.clips[c].length(); ++t) out.push_back({c, t});
  }
  return out;
}

router::FrameDiff sample_diff(const data::Clip& clip, std::size_t frame, std::size_t pooled_size) {
  if (frame >= clip.length()) throw RangeError("sample_diff: frame out of range");
  const NdArray& prev = clip.frames[frame == 0 ? 0 : frame - 1];
  return router::frame_diff(clip.frames[frame], prev, pooled_size);
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, num::Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch) { return (samples + batch - 1) / batch; }

// SP loss of `det` on one sample; accumulates gradients when `backward`.
double sample_sp_loss(branch::ToyDetector& det, const data::Clip& clip, std::size_t t, bool backward) {
  const auto window = branch::make_window(clip.frames, t, det.scale());
  const auto gt = data::next_frame_targets(clip, t, det.geometry(), det.grid_h(), det.grid_w());
  branch::ToyDetector::Trace trace;
  const branch::HeadLogits logits = det.forward(window, backward ? &trace : nullptr);
  branch::SpLoss loss = branch::sp_loss(logits, gt, det.geometry());
  if (backward) det.backward(trace, loss.grad);
  return loss.total;
}

std::uint64_t phase_seed(std::uint64_t seed, std::uint64_t salt) {
  return seed * 0x9E3779B97F4A7C15ULL + salt;
}

void require_samples(const std::vector<SampleRef>& s) {
  if (s.empty()) throw ValidationError("dataset has no training samples (clips need >= 2 frames)");
}

}  // namespace

PhaseReport pretrain(branch::ToyDetector& det, const data::Dataset& ds, const PretrainConfig& cfg,
                     TrainLog* log) {
  const auto samples = enumerate_samples(ds);
  require_samples(samples);
  if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) throw ValidationError("invalid pretraining config");
  det.set_base_trainable(true);
  det.set_adapters_trainable(false);
  MomentumSgd opt(det.params(true, false), cfg.momentum);
  opt.zero_grad();
  const std::size_t steps = batches_per_epoch(samples.size(), cfg.batch_size);
  LrSchedule sched{cfg.lr, steps * std::min(cfg.warmup_epochs, cfg.epochs), steps * cfg.epochs};
  num::Rng rng(phase_seed(cfg.seed, 1));
  PhaseReport report;
  report.selections.assign(1, 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(samples.size(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double lr = sched.at(++step);
      for (std::size_t k = b; k < end; ++k) {
        const SampleRef& s = samples[order[k]];
        const double l = sample_sp_loss(det, ds.clips[s.clip], s.frame, true);
        epoch_loss += l;
        ++report.selections[0];
        if (log) log->add({0, "pretrain", 0, l, 0.0, lr});
      }
      opt.scale_grads(1.0 / static_cast<double>(cfg.batch_size));
      opt.step(lr);
      opt.zero_grad();
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (epoch == 0) report.first_epoch_loss = epoch_loss;
    report.last_epoch_loss = epoch_loss;
  }
  det.zero_grad();
  return report;
}

PhaseReport train_branches(bank::ModelBank& bank, const router::RouterNet& router,
                           const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log,
                           std::size_t epochs) {
  validate(cfg);
  if (epochs == 0) epochs = cfg.epochs_branch;
  const auto samples = enumerate_samples(ds);
  require_samples(samples);
  if (router.num_branches() != bank.size()) throw DimensionError("router width differs from bank size");

  std::vector<MomentumSgd> opts;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    branch::ToyDetector& det = bank[i].detector;
    if (!det.has_adapters()) throw ContractError("branch " + std::to_string(i) + " has no adapters attached");
    det.set_base_trainable(false);
    det.set_adapters_trainable(true);
    det.zero_grad();
    opts.emplace_back(det.params(false, true), cfg.momentum);
  }

  // The router is frozen during this phase, so routes are fixed per sample.
  std::vector<std::size_t> sigma(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto diff = sample_diff(ds.clips[samples[i].clip], samples[i].frame, router.config().input_size);
    sigma[i] = router::route(diff, router).sigma;
  }

  const std::size_t steps = batches_per_epoch(samples.size(), cfg.batch_size);
  const LrSchedule sched = make_schedule(cfg, steps, epochs);
  num::Rng rng(phase_seed(cfg.seed, 2));
  PhaseReport report;
  report.selections.assign(bank.size(), 0);
  std::size_t step = 0;
  std::vector<bool> touched(bank.size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled(samples.size(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double lr = sched.at(++step);
      std::fill(touched.begin(), touched.end(), false);
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t idx = order[k];
        const std::size_t s = sigma[idx];
        const double l = sample_sp_loss(bank[s].detector, ds.clips[samples[idx].clip], samples[idx].frame, true);
        touched[s] = true;
        epoch_loss += l;
        ++report.selections[s];
        if (log) log->add({0, "branches", s, l, 0.0, lr});
      }
      for (std::size_t i = 0; i < bank.size(); ++i) {
        if (!touched[i]) continue;
        opts[i].scale_grads(1.0 / static_cast<double>(cfg.batch_size));
        opts[i].step(lr);
        opts[i].zero_grad();
      }
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (epoch == 0) report.first_epoch_loss = epoch_loss;
    report.last_epoch_loss = epoch_loss;
  }
  return report;
}

std::vector<RouterSample> collect_router_samples(const bank::ModelBank& bank,
                                                 const router::RouterNet& router,
                                                 const data::Dataset& ds, std::size_t workers) {
  const auto samples = enumerate_samples(ds);
  require_samples(samples);
  std::vector<RouterSample> out(samples.size());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const data::Clip& clip = ds.clips[samples[i].clip];
      const std::size_t t = samples[i].frame;
      out[i].pooled = sample_diff(clip, t, router.config().input_size).pooled;
      out[i].v_sp = NdArray({bank.size()});
      for (std::size_t k = 0; k < bank.size(); ++k) {
        const branch::ToyDetector& det = bank[k].detector;
        const auto window = branch::make_window(clip.frames, t, det.scale());
        const auto gt = data::next_frame_targets(clip, t, det.geometry(), det.grid_h(), det.grid_w());
        out[i].v_sp[k] = branch::sp_loss(det.forward(window), gt, det.geometry()).total;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, samples.size()));
  if (workers == 1) {
    work(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (samples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk, hi = std::min(samples.size(), lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (std::thread& th : pool) th.join();
  }
  return out;
}

PhaseReport train_router_on(router::RouterNet& router, const std::vector<RouterSample>& samples,
                            const NdArray& v_time, const TrainConfig& cfg, TrainLog* log,
                            std::size_t epochs) {
  validate(cfg);
  if (epochs == 0) epochs = cfg.epochs_router;
  if (samples.empty()) throw ValidationError("no router training samples");
  if (v_time.size() != router.num_branches()) throw DimensionError("v_time length differs from router width");
  std::vector<E2Target> targets;
  for (const RouterSample& s : samples) targets.push_back(e2_target(s.v_sp, v_time));

  router.set_trainable(true);
  router.zero_grad();
  MomentumSgd opt(router.params(), cfg.momentum);
  const std::size_t steps = batches_per_epoch(samples.size(), cfg.batch_size);
  const LrSchedule sched = make_schedule(cfg, steps, epochs);
  num::Rng rng(phase_seed(cfg.seed, 3));
  PhaseReport report;
  report.selections.assign(router.num_branches(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled(samples.size(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double lr = sched.at(++step);
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t idx = order[k];
        router::RouterNet::Trace trace;
        const NdArray logits = router.logits(samples[idx].pooled, &trace);
        const NdArray f_r = num::softmax(logits);
        const double l = e2_loss_from_logits(targets[idx], logits);
        router.backward(trace, e2_loss_grad(targets[idx], f_r));
        const std::size_t sigma = num::argmax(logits);
        ++report.selections[sigma];
        epoch_loss += l;
        if (log) log->add({0, "router", sigma, 0.0, l, lr});
      }
      opt.scale_grads(1.0 / static_cast<double>(cfg.batch_size));
      opt.step(lr);
      opt.zero_grad();
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (epoch == 0) report.first_epoch_loss = epoch_loss;
    report.last_epoch_loss = epoch_loss;
  }
  return report;
}

PhaseReport train_router(const bank::ModelBank& bank, router::RouterNet& router,
                         const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log,
                         std::size_t epochs) {
  validate(cfg);
  if (router.num_branches() != bank.size()) throw DimensionError("router width differs from bank size");
  const auto samples = collect_router_samples(bank, router, ds, cfg.workers);
  return train_router_on(router, samples, time_vector(bank, cfg.time_unit_ms), cfg, log, epochs);
}

double routing_accuracy(const router::RouterNet& router, const std::vector<RouterSample>& samples,
                        const NdArray& v_time) {
  if (samples.empty()) throw ValidationError("no samples to score");
  std::size_t hits = 0;
  for (const RouterSample& s : samples) {
    if (num::argmax(router.logits(s.pooled)) == e2_target(s.v_sp, v_time).index) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

ScheduleReport train_schedule(bank::ModelBank& bank, router::RouterNet& router,
                              const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log) {
  validate(cfg);
  ScheduleReport report;
  const std::size_t rounds = std::max<std::size_t>(1, cfg.alternate);
  const auto per_round = [&](std::size_t epochs) { return (epochs + rounds - 1) / rounds; };
  for (std::size_t r = 0; r < rounds; ++r) {
    if (cfg.epochs_branch > 0) {
      report.branch_phases.push_back(train_branches(bank, router, ds, cfg, log, per_round(cfg.epochs_branch)));
    }
    if (cfg.epochs_router > 0) {
      report.router_phases.push_back(train_router(bank, router, ds, cfg, log, per_round(cfg.epochs_router)));
    }
  }
  return report;
}

PhaseReport train_moe_gate(const bank::ModelBank& bank, router::RouterNet& gate,
                           const data::Dataset& ds, const TrainConfig& cfg, TrainLog* log,
                           std::size_t epochs) {
  validate(cfg);
  if (epochs == 0) epochs = cfg.epochs_router;
  if (gate.num_branches() != bank.size()) throw DimensionError("gate width differs from bank size");
  const auto samples = enumerate_samples(ds);
  require_samples(samples);

  // Branches are frozen, so their logits are computed once.
  struct Cached {
    NdArray pooled;
    std::vector<branch::HeadLogits> logits;
    branch::GroundTruthTargets gt;
  };
  std::vector<Cached> cache(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const data::Clip& clip = ds.clips[samples[i].clip];
    const std::size_t t = samples[i].frame;
    cache[i].pooled = sample_diff(clip, t, gate.config().input_size).pooled;
    for (std::size_t k = 0; k < bank.size(); ++k) {
      const branch::ToyDetector& det = bank[k].detector;
      cache[i].logits.push_back(det.forward(branch::make_window(clip.frames, t, det.scale())));
    }
    cache[i].gt = data::next_frame_targets(clip, t, bank.geometry(), bank.grid_h(), bank.grid_w());
  }

  gate.set_trainable(true);
  gate.zero_grad();
  MomentumSgd opt(gate.params(), cfg.momentum);
  const std::size_t steps = batches_per_epoch(samples.size(), cfg.batch_size);
  const LrSchedule sched = make_schedule(cfg, steps, epochs);
  num::Rng rng(phase_seed(cfg.seed, 4));
  PhaseReport report;
  report.selections.assign(bank.size(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled(samples.size(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double lr = sched.at(++step);
      for (std::size_t k = b; k < end; ++k) {
        const Cached& c = cache[order[k]];
        router::RouterNet::Trace trace;
        const NdArray w = num::softmax(gate.logits(c.pooled, &trace));
        const branch::HeadLogits mixed = bank::combine_logits(c.logits, w);
        const branch::SpLoss loss = branch::sp_loss(mixed, c.gt, bank.geometry());
        NdArray grad_w({bank.size()});
        for (std::size_t i = 0; i < bank.size(); ++i) {
          const branch::HeadLogits& T = c.logits[i];
          double acc = 0.0;
          for (std::size_t q = 0; q < T.cls.size(); ++q) acc += loss.grad.cls[q] * T.cls[q];
          for (std::size_t q = 0; q < T.obj.size(); ++q) acc += loss.grad.obj[q] * T.obj[q];
          for (std::size_t q = 0; q < T.reg.size(); ++q) acc += loss.grad.reg[q] * T.reg[q];
          grad_w[i] = acc;
        }
        gate.backward(trace, num::softmax_backward(w, grad_w));
        const std::size_t top = num::argmax(w);
        ++report.selections[top];
        epoch_loss += loss.total;
        if (log) log->add({0, "moe_gate", top, loss.total, 0.0, lr});
      }
      opt.scale_grads(1.0 / static_cast<double>(cfg.batch_size));
      opt.step(lr);
      opt.zero_grad();
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (epoch == 0) report.first_epoch_loss = epoch_loss;
    report.last_epoch_loss = epoch_loss;
  }
  return report;
}

}  // namespace dyronet::train
