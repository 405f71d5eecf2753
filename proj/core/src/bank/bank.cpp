#include "dyronet/bank/bank.hpp"

#include <algorithm>
#include <chrono>

#include "dyronet/error.hpp"

namespace dyronet::bank {

using branch::HeadLogits;
using num::NdArray;

double LatencyProfile::sample(num::Rng& rng) const {
  if (jitter_ms <= 0.0) return std::max(0.0, base_ms);
  return std::max(0.0, base_ms + rng.uniform(-jitter_ms, jitter_ms));
}

ModelBank::ModelBank(std::vector<Branch> branches, double router_overhead_ms)
    : branches_(std::move(branches)), router_overhead_ms_(router_overhead_ms) {
  if (branches_.empty()) throw ValidationError("model bank needs at least one branch");
  if (router_overhead_ms_ < 0.0) throw ValidationError("router overhead must be >= 0");
  const auto& ref = branches_.front().detector;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& d = branches_[i].detector;
    if (d.geometry() != ref.geometry() || d.grid_h() != ref.grid_h() || d.grid_w() != ref.grid_w()) {
      throw ValidationError("branch " + std::to_string(i) + " head geometry differs from branch 0");
    }
    if (!(branches_[i].latency.base_ms > 0.0) || branches_[i].latency.jitter_ms < 0.0) {
      throw ValidationError("branch " + std::to_string(i) + " has an invalid latency profile");
    }
    if (i > 0 && d.base_param_count() < branches_[i - 1].detector.base_param_count()) {
      throw ValidationError("branches must be ordered by ascending parameter count");
    }
  }
  executions_.assign(branches_.size(), 0);
}

HeadLogits ModelBank::run(std::size_t i, std::span<const NdArray> frames, std::size_t t,
                          num::Rng& rng, double* latency_ms) {
  if (i >= branches_.size()) throw RangeError("branch index " + std::to_string(i) + " out of range");
  Branch& b = branches_[i];
  const auto window = branch::make_window(frames, t, b.detector.scale());
  const auto start = std::chrono::steady_clock::now();
  HeadLogits out = b.detector.forward(window);
  const auto stop = std::chrono::steady_clock::now();
  ++executions_[i];
  if (latency_ms) {
    *latency_ms = mode_ == LatencyMode::kWallclock
                      ? std::chrono::duration<double, std::milli>(stop - start).count()
                      : b.latency.sample(rng);
  }
  return out;
}

void ModelBank::reset_executions() { std::fill(executions_.begin(), executions_.end(), 0); }

lora::ParamTally ModelBank::param_tally() const {
  lora::ParamTally t;
  for (const Branch& b : branches_) t += b.detector.param_tally();
  return t;
}

std::size_t ModelBank::smallest_branch_params() const {
  std::size_t m = branches_.front().detector.base_param_count();
  for (const Branch& b : branches_) m = std::min(m, b.detector.base_param_count());
  return m;
}

std::size_t ModelBank::smallest_branch_flops() const {
  std::size_t m = 2 * branches_.front().detector.forward_macs();
  for (const Branch& b : branches_) m = std::min(m, 2 * b.detector.forward_macs());
  return m;
}

DispatchResult dispatch(const router::RouteDecision& decision, ModelBank& bank,
                        std::span<const NdArray> frames, std::size_t t, num::Rng& rng) {
  if (decision.sigma >= bank.size()) {
    throw RangeError("route index " + std::to_string(decision.sigma) + " outside bank of " +
                     std::to_string(bank.size()));
  }
  DispatchResult r;
  r.sigma = decision.sigma;
  double branch_ms = 0.0;
  r.logits = bank.run(decision.sigma, frames, t, rng, &branch_ms);
  r.latency_ms = branch_ms + bank.router_overhead_ms();
  return r;
}

std::size_t RandomSelector::select(std::size_t k) {
  if (k == 0) throw ValidationError("cannot select from an empty bank");
  return static_cast<std::size_t>(rng_.below(k));
}

HeadLogits combine_logits(const std::vector<HeadLogits>& per_branch, const NdArray& weights) {
  if (per_branch.empty() || weights.size() != per_branch.size()) {
    throw DimensionError("combine_logits: one weight per branch required");
  }
  HeadLogits out = HeadLogits::zeros(per_branch[0].num_classes(), per_branch[0].grid_h(),
                                     per_branch[0].grid_w());
  for (std::size_t i = 0; i < per_branch.size(); ++i) {
    if (!per_branch[i].same_geometry(out)) throw DimensionError("MoE branches differ in geometry");
    const double w = weights[i];
    for (std::size_t k = 0; k < out.cls.size(); ++k) out.cls[k] += w * per_branch[i].cls[k];
    for (std::size_t k = 0; k < out.obj.size(); ++k) out.obj[k] += w * per_branch[i].obj[k];
    for (std::size_t k = 0; k < out.reg.size(); ++k) out.reg[k] += w * per_branch[i].reg[k];
  }
  return out;
}

MoeResult moe_combine(ModelBank& bank, std::span<const NdArray> frames, std::size_t t,
                      const router::RouterNet& gate, const router::FrameDiff& diff, num::Rng& rng) {
  if (gate.num_branches() != bank.size()) throw DimensionError("gate width differs from bank size");
  MoeResult r;
  r.weights = num::softmax(gate.logits(diff));
  r.latency_ms = bank.router_overhead_ms();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    double ms = 0.0;
    r.per_branch.push_back(bank.run(i, frames, t, rng, &ms));
    r.latency_ms += ms;
  }
  r.logits = combine_logits(r.per_branch, r.weights);
  return r;
}

double lora_param_ratio(const ModelBank& bank) { return lora::param_ratio(bank.param_tally()); }

}  // namespace dyronet::bank
