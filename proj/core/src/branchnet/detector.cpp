#include "dyronet/branchnet/detector.hpp"

#include "dyronet/error.hpp"
#include "dyronet/numcore/random.hpp"

namespace dyronet::branch {

using num::NdArray;

namespace {

constexpr num::Conv2dSpec kStage{2, 1};
constexpr num::Conv2dSpec kSame3{1, 1};
constexpr num::Conv2dSpec kPoint{1, 0};
constexpr double kPixelScale = 1.0 / 255.0;

}  // namespace

std::vector<const NdArray*> make_window(std::span<const NdArray> frames, std::size_t t,
                                        const ScaleConfig& scale) {
  if (t >= frames.size()) throw RangeError("frame index outside clip");
  std::vector<const NdArray*> window;
  window.reserve(scale.history + 1);
  for (std::size_t j = 0; j <= scale.history; ++j) {
    const std::size_t back = j * scale.frame_stride;
    window.push_back(&frames[back > t ? 0 : t - back]);
  }
  return window;
}

ToyDetector::ToyDetector(ScaleConfig scale, Geometry geom, std::uint64_t seed, Init init)
    : scale_(std::move(scale)), geom_(geom) {
  validate(scale_);
  if (geom_.num_classes == 0) throw ValidationError("detector needs at least one class");
  const std::size_t stages = scale_.widths.size();
  grid_h_ = grid_extent(geom_.height, stages);
  grid_w_ = grid_extent(geom_.width, stages);
  std::size_t c_in = 1;
  for (std::size_t s = 0; s < stages; ++s) {
    backbone_.emplace_back("backbone." + std::to_string(s), scale_.widths[s], c_in, 3, kStage);
    c_in = scale_.widths[s];
  }
  const std::size_t feat = scale_.widths.back();
  fusion_ = ConvLayer("fusion", feat, feat * window_length(), 3, kSame3);
  head_cls_ = ConvLayer("head.cls", geom_.num_classes, feat, 1, kPoint);
  head_obj_ = ConvLayer("head.obj", 1, feat, 1, kPoint);
  head_reg_ = ConvLayer("head.reg", 4, feat, 1, kPoint);
  if (init == Init::kHe) {
    num::Rng rng(seed);
    for (ConvLayer* l : all_layers()) l->init_he(rng);
    // Heads start small so the first losses are dominated by the targets.
    for (ConvLayer* l : {&head_cls_, &head_obj_, &head_reg_}) l->kernel.value *= 0.1;
  }
}

std::vector<ConvLayer*> ToyDetector::all_layers() {
  std::vector<ConvLayer*> out;
  for (ConvLayer& l : backbone_) out.push_back(&l);
  out.push_back(&fusion_);
  out.push_back(&head_cls_);
  out.push_back(&head_obj_);
  out.push_back(&head_reg_);
  return out;
}

std::vector<const ConvLayer*> ToyDetector::all_layers() const {
  std::vector<const ConvLayer*> out;
  for (const ConvLayer& l : backbone_) out.push_back(&l);
  out.push_back(&fusion_);
  out.push_back(&head_cls_);
  out.push_back(&head_obj_);
  out.push_back(&head_reg_);
  return out;
}

HeadLogits ToyDetector::forward(std::span<const NdArray* const> window, Trace* trace) const {
  if (window.size() != window_length()) {
    throw ContractError("detector " + scale_.name + " expects a window of " +
                        std::to_string(window_length()) + " frames, got " +
                        std::to_string(window.size()));
  }
  const num::Shape frame_shape{1, geom_.height, geom_.width};
  if (trace) {
    trace->stage_inputs.assign(window.size(), {});
    trace->stage_outputs.assign(window.size(), {});
  }
  std::vector<NdArray> features;
  features.reserve(window.size());
  for (std::size_t f = 0; f < window.size(); ++f) {
    if (window[f]->shape() != frame_shape) {
      throw DimensionError("frame shape " + num::shape_string(window[f]->shape()) +
                           " does not match detector geometry " + num::shape_string(frame_shape));
    }
    NdArray x = *window[f] * kPixelScale;
    for (const ConvLayer& layer : backbone_) {
      NdArray y = num::relu(layer.forward(x));
      if (trace) {
        trace->stage_inputs[f].push_back(std::move(x));
        trace->stage_outputs[f].push_back(y);
      }
      x = std::move(y);
    }
    features.push_back(std::move(x));
  }
  std::vector<const NdArray*> parts;
  for (const NdArray& f : features) parts.push_back(&f);
  NdArray fused_in = num::concat_channels(parts);
  NdArray fused = num::relu(fusion_.forward(fused_in));
  HeadLogits out{head_cls_.forward(fused), head_obj_.forward(fused), head_reg_.forward(fused)};
  if (trace) {
    trace->fusion_input = std::move(fused_in);
    trace->fusion_output = std::move(fused);
  }
  return out;
}

void ToyDetector::backward(const Trace& trace, const HeadLogits& grad) {
  const NdArray& fused = trace.fusion_output;
  NdArray g_fused = head_cls_.backward(fused, grad.cls, true);
  g_fused += head_obj_.backward(fused, grad.obj, true);
  g_fused += head_reg_.backward(fused, grad.reg, true);
  g_fused = num::relu_backward(fused, g_fused);
  const NdArray g_in = fusion_.backward(trace.fusion_input, g_fused, true);

  const std::size_t per_frame = g_in.size() / trace.stage_inputs.size();
  const num::Shape feat_shape = trace.stage_outputs[0].back().shape();
  for (std::size_t f = 0; f < trace.stage_inputs.size(); ++f) {
    NdArray g(feat_shape,
              std::vector<double>(g_in.data().begin() + static_cast<std::ptrdiff_t>(f * per_frame),
                                  g_in.data().begin() + static_cast<std::ptrdiff_t>((f + 1) * per_frame)));
    for (std::size_t s = backbone_.size(); s-- > 0;) {
      g = num::relu_backward(trace.stage_outputs[f][s], g);
      g = backbone_[s].backward(trace.stage_inputs[f][s], g, s > 0);
    }
  }
}

void ToyDetector::attach_adapters(std::uint64_t seed, std::size_t rank) {
  num::Rng rng(seed);
  for (ConvLayer* l : all_layers()) {
    const auto& s = l->kernel.value.shape();
    const std::size_t d = s[0], k = s[1] * s[2] * s[3];
    l->attach_adapter(rank == 0 ? lora::default_rank(d, k) : std::min(rank, std::min(d, k)), rng);
  }
}

bool ToyDetector::has_adapters() const {
  for (const ConvLayer* l : all_layers())
    if (!l->adapter) return false;
  return true;
}

void ToyDetector::set_base_trainable(bool on) {
  for (ConvLayer* l : all_layers()) l->set_base_trainable(on);
}

void ToyDetector::set_adapters_trainable(bool on) {
  for (ConvLayer* l : all_layers()) {
    if (!l->adapter) continue;
    l->adapter->a.trainable = on;
    l->adapter->b.trainable = on;
  }
}

void ToyDetector::zero_grad() {
  for (ConvLayer* l : all_layers()) l->zero_grad();
}

std::vector<num::ParamTensor*> ToyDetector::params(bool base, bool lora) {
  std::vector<num::ParamTensor*> out;
  for (ConvLayer* l : all_layers()) l->collect_params(out, base, lora);
  return out;
}

lora::ParamTally ToyDetector::param_tally() const {
  lora::ParamTally t;
  for (const ConvLayer* l : all_layers()) {
    t.base += l->base_param_count();
    t.lora += l->lora_param_count();
  }
  return t;
}

std::size_t ToyDetector::forward_macs() const {
  std::size_t macs = 0;
  num::Shape shape{1, geom_.height, geom_.width};
  for (const ConvLayer& l : backbone_) {
    macs += num::conv2d_macs(l.kernel.value.shape(), shape, l.spec);
    shape = num::conv2d_output_shape(l.kernel.value.shape(), shape, l.spec);
  }
  macs *= window_length();
  const num::Shape fused_in{shape[0] * window_length(), shape[1], shape[2]};
  macs += num::conv2d_macs(fusion_.kernel.value.shape(), fused_in, fusion_.spec);
  for (const ConvLayer* h : {&head_cls_, &head_obj_, &head_reg_})
    macs += num::conv2d_macs(h->kernel.value.shape(), shape, h->spec);
  return macs;
}

std::vector<NamedTensor> ToyDetector::base_tensors() const {
  std::vector<NamedTensor> out;
  for (const ConvLayer* l : all_layers()) l->collect_base(out);
  return out;
}

std::vector<NamedTensor> ToyDetector::adapter_tensors() const {
  std::vector<NamedTensor> out;
  for (const ConvLayer* l : all_layers()) l->collect_adapter(out);
  return out;
}

void ToyDetector::load_base(const std::vector<NamedTensor>& tensors) {
  for (ConvLayer* l : all_layers()) {
    load_named(tensors, l->name + ".weight", l->kernel.value);
    load_named(tensors, l->name + ".bias", l->bias.value);
    l->kernel.grad = NdArray::zeros_like(l->kernel.value);
    l->bias.grad = NdArray::zeros_like(l->bias.value);
  }
}

void ToyDetector::load_adapters(const std::vector<NamedTensor>& tensors) {
  for (ConvLayer* l : all_layers()) {
    const std::string a_name = l->name + ".weight.lora.A";
    const std::string b_name = l->name + ".weight.lora.B";
    const NamedTensor* a = nullptr;
    const NamedTensor* b = nullptr;
    for (const NamedTensor& t : tensors) {
      if (t.name == a_name) a = &t;
      if (t.name == b_name) b = &t;
    }
    if (!a || !b) throw ValidationError("adapter checkpoint is missing " + l->name);
    const auto& s = l->kernel.value.shape();
    const std::size_t d = s[0], k = s[1] * s[2] * s[3];
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.extent(1) != k ||
        b->value.extent(0) != d || a->value.extent(0) != b->value.extent(1)) {
      throw ValidationError("adapter shapes do not match layer " + l->name);
    }
    lora::LoraAdapter ad;
    ad.rank = a->value.extent(0);
    if (ad.rank > std::min(d, k)) throw ContractError("adapter rank too large for " + l->name);
    ad.target = l->name + ".weight";
    ad.a = num::ParamTensor(a->value);
    ad.b = num::ParamTensor(b->value);
    l->adapter = std::move(ad);
  }
}

}  // namespace dyronet::branch
