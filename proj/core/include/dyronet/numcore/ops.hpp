#pragma once

#include <cstddef>

#include "dyronet/numcore/ndarray.hpp"

namespace dyronet::num {

// A learnable tensor with its gradient accumulator. Frozen tensors never
// accumulate gradient; their grad stays identically zero.
struct ParamTensor {
  NdArray value;
  NdArray grad;
  bool trainable = true;

  ParamTensor() = default;
  explicit ParamTensor(NdArray v, bool is_trainable = true)
      : value(std::move(v)), grad(NdArray::zeros_like(value)), trainable(is_trainable) {}

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { grad.fill(0.0); }
  void accumulate(const NdArray& g);
};

// ---- matrix helpers -------------------------------------------------------

// [m x k] * [k x n]
NdArray matmul(const NdArray& a, const NdArray& b);
NdArray transpose(const NdArray& a);

// ---- dense ----------------------------------------------------------------

// y = W x for W [d x k], x [k].
NdArray dense_forward(const ParamTensor& w, const NdArray& x);
NdArray dense_forward(const NdArray& w, const NdArray& x);
// Accumulates dL/dW into w.grad (when trainable) and returns dL/dx.
NdArray dense_backward(ParamTensor& w, const NdArray& x, const NdArray& grad_y);

// ---- convolution ----------------------------------------------------------

struct Conv2dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Output extents of a valid (zero-padded by `padding`) cross-correlation.
Shape conv2d_output_shape(const Shape& kernel, const Shape& input, Conv2dSpec spec);

// Cross-correlation of x [c_in x H x W] with kernel [c_out x c_in x h x w].
// `bias`, when given, has shape [c_out].
NdArray conv2d_forward(const NdArray& kernel, const NdArray& x, Conv2dSpec spec,
                       const NdArray* bias = nullptr);
NdArray conv2d_forward(const ParamTensor& kernel, const NdArray& x, Conv2dSpec spec);

struct Conv2dGrads {
  NdArray kernel;  // dL/dkernel
  NdArray bias;    // dL/dbias, [c_out]
  NdArray input;   // dL/dx, empty unless requested
};

Conv2dGrads conv2d_backward(const NdArray& kernel, const NdArray& x, const NdArray& grad_y,
                            Conv2dSpec spec, bool need_input_grad);
// ParamTensor form: accumulates into kernel.grad and returns dL/dx.
NdArray conv2d_backward(ParamTensor& kernel, const NdArray& x, const NdArray& grad_y,
                        Conv2dSpec spec);

// Multiply-accumulate count of one conv2d forward pass.
std::size_t conv2d_macs(const Shape& kernel, const Shape& input, Conv2dSpec spec);

// ---- elementwise / reductions ---------------------------------------------

NdArray relu(const NdArray& x);
// grad through relu given the forward output.
NdArray relu_backward(const NdArray& y, const NdArray& grad_y);

double sigmoid(double x);
NdArray sigmoid(const NdArray& x);

NdArray softmax(const NdArray& v);
// Vector-Jacobian product through softmax given its output p.
NdArray softmax_backward(const NdArray& p, const NdArray& grad_p);

// Mean over the trailing two axes: [c x H x W] -> [c].
NdArray global_avg_pool(const NdArray& x);
NdArray global_avg_pool_backward(const Shape& input_shape, const NdArray& grad_y);

// Average pool a [c x H x W] array to [c x out_h x out_w] with area weights
// (exact when the extents divide evenly).
NdArray resize_area(const NdArray& x, std::size_t out_h, std::size_t out_w);

// Concatenate [c_i x H x W] arrays along the channel axis.
NdArray concat_channels(const std::vector<const NdArray*>& parts);

// Mean squared error over all elements and its gradient w.r.t. pred.
double mse(const NdArray& pred, const NdArray& target);
NdArray mse_grad(const NdArray& pred, const NdArray& target);

// KL(p || q) = sum p_i log(p_i / q_i), natural log, with 0 log 0 = 0.
double kl_div(const NdArray& p, const NdArray& q);

std::size_t argmax(const NdArray& v);  // lowest index wins ties
std::size_t argmin(const NdArray& v);  // lowest index wins ties

}  // namespace dyronet::num
