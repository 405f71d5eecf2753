#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dyronet/branchnet/detector.hpp"
#include "dyronet/lora/lora.hpp"
#include "dyronet/numcore/random.hpp"
#include "dyronet/router/router.hpp"

namespace dyronet::bank {

// Simulated per-inference cost. Samples are base +- uniform jitter, floored
// at zero.
struct LatencyProfile {
  double base_ms = 1.0;
  double jitter_ms = 0.0;

  double sample(num::Rng& rng) const;
};

struct Branch {
  branch::ToyDetector detector;
  LatencyProfile latency;
};

enum class LatencyMode { kSimulated, kWallclock };

// Ordered set of branches with a shared head geometry, ascending in
// parameter count. Counts how often each branch runs.
class ModelBank {
 public:
  ModelBank(std::vector<Branch> branches, double router_overhead_ms);

  std::size_t size() const { return branches_.size(); }
  Branch& operator[](std::size_t i) { return branches_.at(i); }
  const Branch& operator[](std::size_t i) const { return branches_.at(i); }
  const branch::Geometry& geometry() const { return branches_.front().detector.geometry(); }
  std::size_t grid_h() const { return branches_.front().detector.grid_h(); }
  std::size_t grid_w() const { return branches_.front().detector.grid_w(); }

  double router_overhead_ms() const { return router_overhead_ms_; }
  LatencyMode latency_mode() const { return mode_; }
  void set_latency_mode(LatencyMode m) { mode_ = m; }

  // Runs branch i on the window ending at frame t and returns its logits
  // together with the branch latency (simulated or measured).
  branch::HeadLogits run(std::size_t i, std::span<const num::NdArray> frames, std::size_t t,
                         num::Rng& rng, double* latency_ms);

  const std::vector<std::size_t>& executions() const { return executions_; }
  void reset_executions();

  lora::ParamTally param_tally() const;
  // Base parameters of the smallest branch.
  std::size_t smallest_branch_params() const;
  std::size_t smallest_branch_flops() const;

 private:
  std::vector<Branch> branches_;
  double router_overhead_ms_;
  LatencyMode mode_ = LatencyMode::kSimulated;
  std::vector<std::size_t> executions_;
};

struct DispatchResult {
  branch::HeadLogits logits;
  std::size_t sigma = 0;
  double latency_ms = 0.0;  // branch + router overhead
};

// Executes exactly the selected branch. Throws RangeError if sigma >= K.
DispatchResult dispatch(const router::RouteDecision& decision, ModelBank& bank,
                        std::span<const num::NdArray> frames, std::size_t t, num::Rng& rng);

// Uniform branch index; reproducible for a seeded generator.
class RandomSelector {
 public:
  explicit RandomSelector(std::uint64_t seed) : rng_(seed) {}
  std::size_t select(const ModelBank& bank) { return select(bank.size()); }
  std::size_t select(std::size_t k);

 private:
  num::Rng rng_;
};

// Convex combination sum_i w_i * logits_i. Throws DimensionError on
// geometry mismatch or when the weight count differs.
branch::HeadLogits combine_logits(const std::vector<branch::HeadLogits>& per_branch,
                                  const num::NdArray& weights);

struct MoeResult {
  branch::HeadLogits logits;
  num::NdArray weights;  // softmax of the gate
  double latency_ms = 0.0;
  std::vector<branch::HeadLogits> per_branch;
};

// Runs every branch and mixes their logits with softmax(gate(diff)).
// Latency is the sum of branch latencies plus the gate overhead.
MoeResult moe_combine(ModelBank& bank, std::span<const num::NdArray> frames, std::size_t t,
                      const router::RouterNet& gate, const router::FrameDiff& diff, num::Rng& rng);

// Lora share of all bank parameters, in percent.
double lora_param_ratio(const ModelBank& bank);

}  // namespace dyronet::bank
