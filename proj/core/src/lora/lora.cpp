#include "dyronet/lora/lora.hpp"

#include <algorithm>
#include <cmath>

#include "dyronet/error.hpp"

namespace dyronet::lora {

using num::NdArray;

void LoraAdapter::zero_grad() {
  a.zero_grad();
  b.zero_grad();
}

std::size_t default_rank(std::size_t d, std::size_t k) {
  const std::size_t m = std::min(d, k);
  if (m >= 32) return 32;
  return std::max<std::size_t>(1, m / 2);
}

LoraAdapter make_adapter(std::string target, std::size_t d, std::size_t k, std::size_t rank,
                         num::Rng& rng) {
  if (rank > std::min(d, k)) {
    throw ContractError("lora rank " + std::to_string(rank) + " exceeds min(d, k) for " + target);
  }
  LoraAdapter ad;
  ad.rank = rank;
  ad.target = std::move(target);
  NdArray a({rank, k});
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  for (double& v : a.data()) v = rng.uniform(-bound, bound);
  ad.a = num::ParamTensor(std::move(a));
  ad.b = num::ParamTensor(NdArray({d, rank}));
  return ad;
}

namespace {

void check_shapes(const NdArray& w, const LoraAdapter& ad) {
  if (ad.a.value.rank() != 2 || ad.b.value.rank() != 2 || ad.a.value.extent(0) != ad.rank ||
      ad.b.value.extent(1) != ad.rank) {
    throw ContractError("lora adapter " + ad.target + " has inconsistent rank");
  }
  if (ad.rank > std::min(ad.rows(), ad.cols())) {
    throw ContractError("lora rank exceeds min(d, k) for " + ad.target);
  }
  if (w.size() != ad.rows() * ad.cols() || w.extent(0) != ad.rows()) {
    throw DimensionError("lora adapter " + ad.target + " does not match base " +
                         num::shape_string(w.shape()));
  }
}

}  // namespace

NdArray apply(const NdArray& w, const NdArray& x, const LoraAdapter& ad) {
  check_shapes(w, ad);
  NdArray y = num::dense_forward(w, x);
  const NdArray ax = num::dense_forward(ad.a.value, x);
  const NdArray bax = num::dense_forward(ad.b.value, ax);
  y += bax;
  return y;
}

NdArray apply_backward(LoraAdapter& ad, const NdArray& w, const NdArray& x,
                       const NdArray& grad_y) {
  check_shapes(w, ad);
  const NdArray ax = num::dense_forward(ad.a.value, x);
  const NdArray grad_ax = num::dense_backward(ad.b, ax, grad_y);
  NdArray grad_x = num::dense_backward(ad.a, x, grad_ax);
  // Base path: dL/dx += W^T grad_y; W itself is frozen.
  const std::size_t d = ad.rows(), k = ad.cols();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) grad_x[j] += w[i * k + j] * grad_y[i];
  return grad_x;
}

NdArray delta(const LoraAdapter& ad) { return num::matmul(ad.b.value, ad.a.value); }

NdArray merge(const NdArray& w, const LoraAdapter& ad) {
  check_shapes(w, ad);
  NdArray merged = w;
  const NdArray d = delta(ad);
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i] += d[i];
  return merged;
}

void accumulate_from_merged_grad(LoraAdapter& ad, const NdArray& grad_merged) {
  if (grad_merged.size() != ad.rows() * ad.cols()) {
    throw DimensionError("lora merged grad size mismatch for " + ad.target);
  }
  const NdArray g = grad_merged.reshaped({ad.rows(), ad.cols()});
  if (ad.a.trainable) ad.a.grad += num::matmul(num::transpose(ad.b.value), g);
  if (ad.b.trainable) ad.b.grad += num::matmul(g, num::transpose(ad.a.value));
}

double param_ratio(const ParamTally& tally) {
  const std::size_t total = tally.base + tally.lora;
  if (total == 0) throw ValueError("param_ratio of an empty bank");
  return 100.0 * static_cast<double>(tally.lora) / static_cast<double>(total);
}

}  // namespace dyronet::lora
