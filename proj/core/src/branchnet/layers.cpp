#include "dyronet/branchnet/layers.hpp"

#include <cmath>

#include "dyronet/error.hpp"

namespace dyronet::branch {

using num::NdArray;

ConvLayer::ConvLayer(std::string layer_name, std::size_t c_out, std::size_t c_in, std::size_t k,
                     num::Conv2dSpec conv_spec)
    : name(std::move(layer_name)),
      kernel(NdArray({c_out, c_in, k, k})),
      bias(NdArray({c_out})),
      spec(conv_spec) {}

void ConvLayer::init_he(num::Rng& rng) {
  const auto& s = kernel.value.shape();
  const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (double& v : kernel.value.data()) v = std_dev * rng.normal();
  bias.value.fill(0.0);
}

NdArray ConvLayer::effective_kernel() const {
  if (!adapter) return kernel.value;
  return lora::merge(kernel.value, *adapter);
}

NdArray ConvLayer::forward(const NdArray& x) const {
  if (!adapter) return num::conv2d_forward(kernel.value, x, spec, &bias.value);
  return num::conv2d_forward(effective_kernel(), x, spec, &bias.value);
}

NdArray ConvLayer::backward(const NdArray& x, const NdArray& grad_y, bool need_input_grad) {
  const NdArray k = effective_kernel();
  num::Conv2dGrads g = num::conv2d_backward(k, x, grad_y, spec, need_input_grad);
  kernel.accumulate(g.kernel);
  bias.accumulate(g.bias);
  if (adapter) lora::accumulate_from_merged_grad(*adapter, g.kernel);
  return std::move(g.input);
}

void ConvLayer::attach_adapter(std::size_t rank, num::Rng& rng) {
  const auto& s = kernel.value.shape();
  adapter = lora::make_adapter(name + ".weight", s[0], s[1] * s[2] * s[3], rank, rng);
}

void ConvLayer::set_base_trainable(bool on) {
  kernel.trainable = on;
  bias.trainable = on;
}

void ConvLayer::zero_grad() {
  kernel.zero_grad();
  bias.zero_grad();
  if (adapter) adapter->zero_grad();
}

void ConvLayer::collect_base(std::vector<NamedTensor>& out) const {
  out.push_back({name + ".weight", kernel.value});
  out.push_back({name + ".bias", bias.value});
}

void ConvLayer::collect_adapter(std::vector<NamedTensor>& out) const {
  if (!adapter) return;
  out.push_back({name + ".weight.lora.A", adapter->a.value});
  out.push_back({name + ".weight.lora.B", adapter->b.value});
}

void ConvLayer::collect_params(std::vector<num::ParamTensor*>& out, bool base, bool lora) {
  if (base) {
    out.push_back(&kernel);
    out.push_back(&bias);
  }
  if (lora && adapter) {
    out.push_back(&adapter->a);
    out.push_back(&adapter->b);
  }
}

void load_named(const std::vector<NamedTensor>& tensors, const std::string& name,
                NdArray& into) {
  for (const NamedTensor& t : tensors) {
    if (t.name != name) continue;
    if (t.value.shape() != into.shape()) {
      throw ValidationError("tensor " + name + " has shape " + num::shape_string(t.value.shape()) +
                            ", expected " + num::shape_string(into.shape()));
    }
    into = t.value;
    return;
  }
  throw ValidationError("checkpoint is missing tensor " + name);
}

}  // namespace dyronet::branch
