#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dyronet/branchnet/checkpoint.hpp"
#include "dyronet/branchnet/head.hpp"
#include "dyronet/branchnet/layers.hpp"
#include "dyronet/branchnet/scale.hpp"
#include "dyronet/lora/lora.hpp"

namespace dyronet::branch {

// Frames t, t - dt, ..., t - N dt from a clip; indices before the clip start
// repeat frame 0. Element 0 is the current frame.
std::vector<const num::NdArray*> make_window(std::span<const num::NdArray> frames, std::size_t t,
                                             const ScaleConfig& scale);

// Dual-stream grid detector. A shared conv backbone embeds the current frame
// and each historical frame; the feature maps are concatenated and fused by
// a 3x3 conv, and three 1x1 heads emit cls / obj / reg logits.
class ToyDetector {
 public:
  enum class Init { kHe, kZero };

  ToyDetector(ScaleConfig scale, Geometry geom, std::uint64_t seed, Init init = Init::kHe);

  const ScaleConfig& scale() const { return scale_; }
  const Geometry& geometry() const { return geom_; }
  std::size_t grid_h() const { return grid_h_; }
  std::size_t grid_w() const { return grid_w_; }
  std::size_t window_length() const { return scale_.history + 1; }

  // Intermediate activations kept for backward.
  struct Trace {
    std::vector<std::vector<num::NdArray>> stage_inputs;   // [frame][stage]
    std::vector<std::vector<num::NdArray>> stage_outputs;  // post-ReLU
    num::NdArray fusion_input;
    num::NdArray fusion_output;  // post-ReLU
  };

  // `window` holds N + 1 frames of shape [1 x H x W] in 0..255 pixel units.
  HeadLogits forward(std::span<const num::NdArray* const> window, Trace* trace = nullptr) const;
  // Accumulates gradients for every trainable tensor.
  void backward(const Trace& trace, const HeadLogits& grad);

  // LoRA: attach adapters to every conv kernel. rank 0 -> default_rank.
  void attach_adapters(std::uint64_t seed, std::size_t rank = 0);
  bool has_adapters() const;
  void set_base_trainable(bool on);
  void set_adapters_trainable(bool on);
  void zero_grad();

  std::vector<num::ParamTensor*> params(bool base, bool lora);
  lora::ParamTally param_tally() const;
  std::size_t base_param_count() const { return param_tally().base; }
  // Multiply-accumulates of one forward pass over a full window.
  std::size_t forward_macs() const;

  std::vector<NamedTensor> base_tensors() const;
  std::vector<NamedTensor> adapter_tensors() const;
  void load_base(const std::vector<NamedTensor>& tensors);
  // Creates (or replaces) adapters from ".lora.A" / ".lora.B" records.
  void load_adapters(const std::vector<NamedTensor>& tensors);

 private:
  std::vector<ConvLayer*> all_layers();
  std::vector<const ConvLayer*> all_layers() const;

  ScaleConfig scale_;
  Geometry geom_;
  std::size_t grid_h_ = 0;
  std::size_t grid_w_ = 0;
  std::vector<ConvLayer> backbone_;
  ConvLayer fusion_;
  ConvLayer head_cls_;
  ConvLayer head_obj_;
  ConvLayer head_reg_;
};

}  // namespace dyronet::branch
