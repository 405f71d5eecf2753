#include "dyronet/branchnet/head.hpp"

#include <algorithm>
#include <cmath>

#include "dyronet/error.hpp"
#include "dyronet/numcore/ops.hpp"

namespace dyronet::branch {

using num::Box;
using num::NdArray;

HeadLogits HeadLogits::zeros(std::size_t num_classes, std::size_t grid_h, std::size_t grid_w) {
  return {NdArray({num_classes, grid_h, grid_w}), NdArray({1, grid_h, grid_w}),
          NdArray({4, grid_h, grid_w})};
}

bool HeadLogits::same_geometry(const HeadLogits& other) const {
  return cls.shape() == other.cls.shape() && obj.shape() == other.obj.shape() &&
         reg.shape() == other.reg.shape();
}

CellSize cell_size(const Geometry& geom, std::size_t grid_h, std::size_t grid_w) {
  return {static_cast<double>(geom.height) / static_cast<double>(grid_h),
          static_cast<double>(geom.width) / static_cast<double>(grid_w)};
}

namespace {

double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

std::size_t cell_index(double centre, double cell, std::size_t extent) {
  const double c = std::floor(centre / cell);
  if (c < 0.0) return 0;
  return std::min(extent - 1, static_cast<std::size_t>(c));
}

}  // namespace

std::array<double, 4> encode_box(const Box& box, std::size_t gy, std::size_t gx, CellSize cell) {
  const double cx = 0.5 * (box.x1 + box.x2) / cell.w - static_cast<double>(gx);
  const double cy = 0.5 * (box.y1 + box.y2) / cell.h - static_cast<double>(gy);
  return {logit(cx), logit(cy), std::log(box.width() / cell.w), std::log(box.height() / cell.h)};
}

Box decode_box(double tx, double ty, double tw, double th, std::size_t gy, std::size_t gx,
               CellSize cell) {
  const double cx = (static_cast<double>(gx) + num::sigmoid(tx)) * cell.w;
  const double cy = (static_cast<double>(gy) + num::sigmoid(ty)) * cell.h;
  const double w = std::exp(tw) * cell.w;
  const double h = std::exp(th) * cell.h;
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

GroundTruthTargets build_targets(const std::vector<Annotation>& annotations, const Geometry& geom,
                                 std::size_t grid_h, std::size_t grid_w) {
  const std::size_t cells = grid_h * grid_w;
  GroundTruthTargets gt;
  gt.cls = NdArray({geom.num_classes, grid_h, grid_w});
  gt.obj = NdArray({1, grid_h, grid_w});
  gt.reg = NdArray({4, grid_h, grid_w});
  const CellSize cell = cell_size(geom, grid_h, grid_w);
  std::vector<bool> taken(cells, false);
  for (const Annotation& a : annotations) {
    if (a.box.width() <= 0.0 || a.box.height() <= 0.0) {
      throw ValidationError("annotation box with non-positive extent");
    }
    if (a.class_id < 0 || static_cast<std::size_t>(a.class_id) >= geom.num_classes) {
      throw ValidationError("annotation class id out of range");
    }
    const std::size_t gx = cell_index(0.5 * (a.box.x1 + a.box.x2), cell.w, grid_w);
    const std::size_t gy = cell_index(0.5 * (a.box.y1 + a.box.y2), cell.h, grid_h);
    const std::size_t idx = gy * grid_w + gx;
    if (taken[idx]) continue;
    taken[idx] = true;
    gt.obj[idx] = 1.0;
    gt.cls[static_cast<std::size_t>(a.class_id) * cells + idx] = 1.0;
    const auto enc = encode_box(a.box, gy, gx, cell);
    for (std::size_t k = 0; k < 4; ++k) gt.reg[k * cells + idx] = enc[k];
    gt.positives.push_back({gy, gx, a.box, a.class_id});
  }
  return gt;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == d.class_id && num::iou(k.box, d.box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> decode(const HeadLogits& logits, const Geometry& geom, double conf_thresh,
                              double nms_iou) {
  if (conf_thresh < 0.0 || conf_thresh > 1.0) throw ValueError("conf_thresh must be in [0, 1]");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ValueError("nms_iou must be in (0, 1]");
  const std::size_t gh = logits.grid_h(), gw = logits.grid_w(), cells = gh * gw;
  const std::size_t nc = logits.num_classes();
  const CellSize cell = cell_size(geom, gh, gw);
  std::vector<Detection> dets;
  NdArray cls_vec({nc});
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      const std::size_t idx = gy * gw + gx;
      for (std::size_t c = 0; c < nc; ++c) cls_vec[c] = logits.cls[c * cells + idx];
      const NdArray p = num::softmax(cls_vec);
      const std::size_t best = num::argmax(p);
      const double score = num::sigmoid(logits.obj[idx]) * p[best];
      if (score < conf_thresh) continue;
      Detection d;
      d.box = decode_box(logits.reg[idx], logits.reg[cells + idx], logits.reg[2 * cells + idx],
                         logits.reg[3 * cells + idx], gy, gx, cell);
      d.class_id = static_cast<int>(best);
      d.score = score;
      dets.push_back(d);
    }
  }
  return nms(std::move(dets), nms_iou);
}

SpLoss sp_loss(const HeadLogits& logits, const GroundTruthTargets& gt, const Geometry& geom) {
  num::require_same_shape(logits.cls, gt.cls, "sp_loss cls");
  num::require_same_shape(logits.obj, gt.obj, "sp_loss obj");
  num::require_same_shape(logits.reg, gt.reg, "sp_loss reg");
  SpLoss out;
  out.cls = num::mse(logits.cls, gt.cls);
  out.obj = num::mse(logits.obj, gt.obj);
  out.grad.cls = num::mse_grad(logits.cls, gt.cls);
  out.grad.obj = num::mse_grad(logits.obj, gt.obj);
  out.grad.reg = NdArray(logits.reg.shape());

  const std::size_t gh = logits.grid_h(), gw = logits.grid_w(), cells = gh * gw;
  const CellSize cell = cell_size(geom, gh, gw);
  if (!gt.positives.empty()) {
    const double inv_n = 1.0 / static_cast<double>(gt.positives.size());
    for (const PositiveCell& pc : gt.positives) {
      const std::size_t idx = pc.gy * gw + pc.gx;
      const double tx = logits.reg[idx], ty = logits.reg[cells + idx];
      const double tw = logits.reg[2 * cells + idx], th = logits.reg[3 * cells + idx];
      const Box pred = decode_box(tx, ty, tw, th, pc.gy, pc.gx, cell);
      const num::GiouResult g = num::giou_with_grad(pred, pc.box);
      out.reg += (1.0 - g.value) * inv_n;
      // dL/dcorner = -dG/dcorner / n, then through the decode.
      const double dx1 = -g.grad_a[0] * inv_n, dy1 = -g.grad_a[1] * inv_n;
      const double dx2 = -g.grad_a[2] * inv_n, dy2 = -g.grad_a[3] * inv_n;
      const double sx = num::sigmoid(tx), sy = num::sigmoid(ty);
      const double w = pred.width(), h = pred.height();
      out.grad.reg[idx] += (dx1 + dx2) * cell.w * sx * (1.0 - sx);
      out.grad.reg[cells + idx] += (dy1 + dy2) * cell.h * sy * (1.0 - sy);
      out.grad.reg[2 * cells + idx] += 0.5 * (dx2 - dx1) * w;
      out.grad.reg[3 * cells + idx] += 0.5 * (dy2 - dy1) * h;
    }
  }
  out.total = out.cls + out.obj + out.reg;
  return out;
}

}  // namespace dyronet::branch
