#pragma once

#include <cstddef>
#include <string>

#include "dyronet/numcore/ops.hpp"
#include "dyronet/numcore/random.hpp"

namespace dyronet::lora {

// Trainable low-rank update delta W = B A for a frozen base matrix W [d x k].
// Convolution kernels are viewed as d = c_out, k = c_in * h * w.
struct LoraAdapter {
  num::ParamTensor a;  // [r x k]
  num::ParamTensor b;  // [d x r]
  std::size_t rank = 0;
  std::string target;  // name of the wrapped base tensor

  std::size_t rows() const { return b.value.extent(0); }
  std::size_t cols() const { return a.value.extent(1); }
  std::size_t param_count() const { return a.size() + b.size(); }
  void zero_grad();
};

// 32 when the target is at least that large, otherwise half its smaller
// side (at least 1).
std::size_t default_rank(std::size_t d, std::size_t k);

// A ~ U[-1/sqrt(k), 1/sqrt(k)], B = 0, so a fresh adapter is an exact no-op.
LoraAdapter make_adapter(std::string target, std::size_t d, std::size_t k, std::size_t rank,
                         num::Rng& rng);

// W x + B (A x). W is read-only here.
num::NdArray apply(const num::NdArray& w, const num::NdArray& x, const LoraAdapter& ad);
// Accumulates grads of A and B and returns dL/dx. W receives nothing.
num::NdArray apply_backward(LoraAdapter& ad, const num::NdArray& w, const num::NdArray& x,
                            const num::NdArray& grad_y);

// B A as a [d x k] matrix.
num::NdArray delta(const LoraAdapter& ad);
// W + B A, reshaped to W's shape (works for conv kernels too).
num::NdArray merge(const num::NdArray& w, const LoraAdapter& ad);

// Chain rule for layers that run on the merged weight: given dL/d(W + BA)
// accumulate dL/dA = B^T G and dL/dB = G A^T.
void accumulate_from_merged_grad(LoraAdapter& ad, const num::NdArray& grad_merged);

struct ParamTally {
  std::size_t base = 0;
  std::size_t lora = 0;

  ParamTally& operator+=(const ParamTally& o) {
    base += o.base;
    lora += o.lora;
    return *this;
  }
};

// 100 * lora / (base + lora). Throws ValueError when nothing is counted.
double param_ratio(const ParamTally& tally);

}  // namespace dyronet::lora
