#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dyronet/branchnet/checkpoint.hpp"
#include "dyronet/branchnet/layers.hpp"
#include "dyronet/numcore/ops.hpp"

namespace dyronet::router {

// Luma conversion for [3 x H x W] input; single-channel frames pass through.
num::NdArray to_luma(const num::NdArray& frame);

struct FrameDiff {
  num::NdArray raw;     // I_t - I_{t-1}, [1 x H x W], signed pixel units
  num::NdArray pooled;  // area-pooled raw at router input size
};

FrameDiff frame_diff(const num::NdArray& current, const num::NdArray& previous,
                     std::size_t pooled_size = 50);

struct RouterConfig {
  std::size_t input_size = 50;  // pooled diff is input_size x input_size
  std::size_t filters = 8;
  std::size_t kernel = 5;
  std::size_t stride = 4;

  friend bool operator==(const RouterConfig&, const RouterConfig&) = default;
};

// conv -> ReLU -> global average per channel -> linear to K logits.
class RouterNet {
 public:
  RouterNet(std::size_t num_branches, std::uint64_t seed, RouterConfig cfg = {});

  struct Trace {
    num::NdArray input;
    num::NdArray conv_out;  // post-ReLU
    num::NdArray pooled;    // [filters]
  };

  std::size_t num_branches() const { return linear_.value.extent(0); }
  const RouterConfig& config() const { return cfg_; }

  num::NdArray logits(const FrameDiff& diff, Trace* trace = nullptr) const;
  num::NdArray logits(const num::NdArray& pooled, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const num::NdArray& grad_logits);

  std::vector<num::ParamTensor*> params();
  void set_trainable(bool on);
  void zero_grad();
  std::size_t param_count() const;
  // Per-frame cost: differencing, pooling, conv, pooling, linear.
  std::size_t flops(std::size_t frame_h, std::size_t frame_w) const;

  std::vector<branch::NamedTensor> tensors() const;
  void load(const std::vector<branch::NamedTensor>& tensors);

  num::ParamTensor& linear_weight() { return linear_; }
  num::ParamTensor& linear_bias() { return linear_bias_; }

 private:
  RouterConfig cfg_;
  branch::ConvLayer conv_;
  num::ParamTensor linear_;       // [K x filters]
  num::ParamTensor linear_bias_;  // [K]
};

struct RouteDecision {
  std::size_t sigma = 0;
  num::NdArray logits;
  num::NdArray probabilities;
};

// argmax with lowest-index tie-breaking, plus the softmax.
RouteDecision decide(const num::NdArray& logits);
RouteDecision route(const FrameDiff& diff, const RouterNet& net);

// K - 1 if the mean raw difference is positive, else 0.
std::size_t mean_diff_criterion(const FrameDiff& diff, std::size_t num_branches);

// Analysis size for diff curves; 0 x 0 means "original resolution".
struct CurveSize {
  std::size_t height = 0;
  std::size_t width = 0;

  std::string label() const;
  friend bool operator==(const CurveSize&, const CurveSize&) = default;
};

std::vector<CurveSize> default_curve_sizes();

struct DiffCurve {
  CurveSize size;
  std::vector<double> mean_abs_diff;  // entry i: frames i and i + 1
};

// Mean |I_{i+1} - I_i| per consecutive pair after area resampling to each
// size. Throws ValueError for clips shorter than two frames.
std::vector<DiffCurve> diff_mean_curves(std::span<const num::NdArray> frames,
                                        const std::vector<CurveSize>& sizes);

// CSV with header frame_index,size,mean_abs_diff; frame_index is the later
// frame of each pair.
void write_diff_curves_csv(std::ostream& out, const std::vector<DiffCurve>& curves);

}  // namespace dyronet::router
