#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dyronet/branchnet/checkpoint.hpp"
#include "dyronet/lora/lora.hpp"
#include "dyronet/numcore/ops.hpp"

namespace dyronet::branch {

// Convolution with bias and an optional low-rank adapter on the kernel.
// With an adapter the layer runs on the merged kernel W + BA, which is the
// same linear map as W x + B (A x) on the im2col view of x.
struct ConvLayer {
  std::string name;
  num::ParamTensor kernel;  // [c_out x c_in x h x w]
  num::ParamTensor bias;    // [c_out]
  num::Conv2dSpec spec;
  std::optional<lora::LoraAdapter> adapter;

  ConvLayer() = default;
  ConvLayer(std::string layer_name, std::size_t c_out, std::size_t c_in, std::size_t k,
            num::Conv2dSpec conv_spec);

  // He-normal kernel, zero bias.
  void init_he(num::Rng& rng);

  num::NdArray effective_kernel() const;
  num::NdArray forward(const num::NdArray& x) const;
  // Accumulates parameter grads (base and/or adapter per their trainable
  // flags) and returns dL/dx when requested (empty otherwise).
  num::NdArray backward(const num::NdArray& x, const num::NdArray& grad_y, bool need_input_grad);

  void attach_adapter(std::size_t rank, num::Rng& rng);
  void set_base_trainable(bool on);
  void zero_grad();

  std::size_t base_param_count() const { return kernel.size() + bias.size(); }
  std::size_t lora_param_count() const { return adapter ? adapter->param_count() : 0; }
  std::size_t out_channels() const { return kernel.value.extent(0); }

  void collect_base(std::vector<NamedTensor>& out) const;
  void collect_adapter(std::vector<NamedTensor>& out) const;
  void collect_params(std::vector<num::ParamTensor*>& out, bool base, bool lora);
};

// Looks `name` up in `tensors`; throws ValidationError if missing or if the
// stored shape differs from `into`'s.
void load_named(const std::vector<NamedTensor>& tensors, const std::string& name,
                num::NdArray& into);

}  // namespace dyronet::branch
