#include "dyronet/router/router.hpp"

#include <cmath>

#include "dyronet/error.hpp"
#include "dyronet/numcore/random.hpp"

namespace dyronet::router {

using num::NdArray;

NdArray to_luma(const NdArray& frame) {
  if (frame.rank() != 3) throw DimensionError("frame must be [c x H x W]");
  if (frame.extent(0) == 1) return frame;
  if (frame.extent(0) != 3) throw DimensionError("frame must have 1 or 3 channels");
  const std::size_t hw = frame.extent(1) * frame.extent(2);
  NdArray y({1, frame.extent(1), frame.extent(2)});
  for (std::size_t i = 0; i < hw; ++i)
    y[i] = 0.299 * frame[i] + 0.587 * frame[hw + i] + 0.114 * frame[2 * hw + i];
  return y;
}

FrameDiff frame_diff(const NdArray& current, const NdArray& previous, std::size_t pooled_size) {
  const NdArray cur = to_luma(current);
  const NdArray prev = to_luma(previous);
  num::require_same_shape(cur, prev, "frame_diff");
  FrameDiff d;
  d.raw = cur - prev;
  d.pooled = num::resize_area(d.raw, pooled_size, pooled_size);
  return d;
}

RouterNet::RouterNet(std::size_t num_branches, std::uint64_t seed, RouterConfig cfg)
    : cfg_(cfg),
      conv_("router.conv", cfg.filters, 1, cfg.kernel, {cfg.stride, 0}),
      linear_(NdArray({num_branches, cfg.filters})),
      linear_bias_(NdArray({num_branches})) {
  if (num_branches == 0) throw ValidationError("router needs at least one branch");
  if (cfg.kernel > cfg.input_size) throw ValidationError("router kernel larger than its input");
  num::Rng rng(seed);
  conv_.init_he(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.filters));
  for (double& v : linear_.value.data()) v = rng.uniform(-bound, bound);
}

NdArray RouterNet::logits(const FrameDiff& diff, Trace* trace) const {
  return logits(diff.pooled, trace);
}

NdArray RouterNet::logits(const NdArray& pooled, Trace* trace) const {
  if (pooled.shape() != num::Shape{1, cfg_.input_size, cfg_.input_size}) {
    throw DimensionError("router input " + num::shape_string(pooled.shape()) +
                         " does not match configured size");
  }
  NdArray conv = num::relu(conv_.forward(pooled));
  NdArray feat = num::global_avg_pool(conv);
  NdArray out = num::dense_forward(linear_, feat);
  out += linear_bias_.value;
  if (trace) {
    trace->input = pooled;
    trace->conv_out = std::move(conv);
    trace->pooled = std::move(feat);
  }
  return out;
}

void RouterNet::backward(const Trace& trace, const NdArray& grad_logits) {
  linear_bias_.accumulate(grad_logits);
  const NdArray g_feat = num::dense_backward(linear_, trace.pooled, grad_logits);
  NdArray g_conv = num::global_avg_pool_backward(trace.conv_out.shape(), g_feat);
  g_conv = num::relu_backward(trace.conv_out, g_conv);
  conv_.backward(trace.input, g_conv, false);
}

std::vector<num::ParamTensor*> RouterNet::params() {
  return {&conv_.kernel, &conv_.bias, &linear_, &linear_bias_};
}

void RouterNet::set_trainable(bool on) {
  for (num::ParamTensor* p : params()) p->trainable = on;
}

void RouterNet::zero_grad() {
  for (num::ParamTensor* p : params()) p->zero_grad();
}

std::size_t RouterNet::param_count() const {
  return conv_.base_param_count() + linear_.size() + linear_bias_.size();
}

std::size_t RouterNet::flops(std::size_t frame_h, std::size_t frame_w) const {
  const num::Shape in{1, cfg_.input_size, cfg_.input_size};
  const num::Shape conv_out = num::conv2d_output_shape(conv_.kernel.value.shape(), in, conv_.spec);
  const std::size_t diff = frame_h * frame_w;
  const std::size_t pool = frame_h * frame_w + frame_h * cfg_.input_size;
  const std::size_t conv = 2 * num::conv2d_macs(conv_.kernel.value.shape(), in, conv_.spec) +
                           num::shape_size(conv_out);  // + bias
  const std::size_t gap = num::shape_size(conv_out);
  const std::size_t linear = 2 * linear_.size() + linear_bias_.size();
  return diff + pool + conv + gap + linear;
}

std::vector<branch::NamedTensor> RouterNet::tensors() const {
  std::vector<branch::NamedTensor> out;
  conv_.collect_base(out);
  out.push_back({"router.linear.weight", linear_.value});
  out.push_back({"router.linear.bias", linear_bias_.value});
  return out;
}

void RouterNet::load(const std::vector<branch::NamedTensor>& tensors) {
  branch::load_named(tensors, "router.conv.weight", conv_.kernel.value);
  branch::load_named(tensors, "router.conv.bias", conv_.bias.value);
  branch::load_named(tensors, "router.linear.weight", linear_.value);
  branch::load_named(tensors, "router.linear.bias", linear_bias_.value);
  zero_grad();
}

RouteDecision decide(const NdArray& logits) {
  RouteDecision d;
  d.sigma = num::argmax(logits);
  d.logits = logits;
  d.probabilities = num::softmax(logits);
  return d;
}

RouteDecision route(const FrameDiff& diff, const RouterNet& net) {
  return decide(net.logits(diff));
}

std::size_t mean_diff_criterion(const FrameDiff& diff, std::size_t num_branches) {
  if (num_branches < 1) throw ValidationError("criterion needs at least one branch");
  return diff.raw.mean() > 0.0 ? num_branches - 1 : 0;
}

std::string CurveSize::label() const {
  if (height == 0 && width == 0) return "original";
  return std::to_string(height) + "x" + std::to_string(width);
}

std::vector<CurveSize> default_curve_sizes() { return {{0, 0}, {200, 200}, {100, 100}, {50, 50}}; }

std::vector<DiffCurve> diff_mean_curves(std::span<const NdArray> frames,
                                        const std::vector<CurveSize>& sizes) {
  if (frames.size() < 2) throw ValueError("diff curves need at least two frames");
  std::vector<DiffCurve> curves;
  for (const CurveSize& size : sizes) {
    DiffCurve curve{size, {}};
    NdArray prev;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      NdArray cur = to_luma(frames[i]);
      if (size.height != 0) cur = num::resize_area(cur, size.height, size.width);
      if (i > 0) {
        num::require_same_shape(cur, prev, "diff_mean_curves");
        double acc = 0.0;
        for (std::size_t k = 0; k < cur.size(); ++k) acc += std::abs(cur[k] - prev[k]);
        curve.mean_abs_diff.push_back(acc / static_cast<double>(cur.size()));
      }
      prev = std::move(cur);
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

void write_diff_curves_csv(std::ostream& out, const std::vector<DiffCurve>& curves) {
  out << "frame_index,size,mean_abs_diff\n";
  out.precision(17);
  for (const DiffCurve& c : curves) {
    for (std::size_t i = 0; i < c.mean_abs_diff.size(); ++i) {
      out << (i + 1) << ',' << c.size.label() << ',' << c.mean_abs_diff[i] << '\n';
    }
  }
}

}  // namespace dyronet::router
