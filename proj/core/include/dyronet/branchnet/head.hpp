#pragma once

#include <cstddef>
#include <vector>

#include "dyronet/branchnet/scale.hpp"
#include "dyronet/numcore/box.hpp"
#include "dyronet/numcore/ndarray.hpp"

namespace dyronet::branch {

// Raw grid outputs of a detection head.
//   cls [C x Gh x Gw], obj [1 x Gh x Gw], reg [4 x Gh x Gw]
// reg channels are (tx, ty, tw, th): the box centre sits at
// (gx + sigmoid(tx), gy + sigmoid(ty)) cells and its size is
// (exp(tw), exp(th)) cells.
struct HeadLogits {
  num::NdArray cls;
  num::NdArray obj;
  num::NdArray reg;

  static HeadLogits zeros(std::size_t num_classes, std::size_t grid_h, std::size_t grid_w);
  std::size_t grid_h() const { return obj.extent(1); }
  std::size_t grid_w() const { return obj.extent(2); }
  std::size_t num_classes() const { return cls.extent(0); }
  bool same_geometry(const HeadLogits& other) const;

  friend bool operator==(const HeadLogits&, const HeadLogits&) = default;
};

// One annotated object on a frame.
struct Annotation {
  num::Box box;  // pixels, corner form
  int class_id = 0;
  int track_id = -1;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct PositiveCell {
  std::size_t gy = 0;
  std::size_t gx = 0;
  num::Box box;  // ground-truth pixels
  int class_id = 0;
};

struct GroundTruthTargets {
  num::NdArray cls;
  num::NdArray obj;
  num::NdArray reg;
  std::vector<PositiveCell> positives;
};

struct Detection {
  num::Box box;
  int class_id = 0;
  double score = 0.0;
};

// Cell size in pixels for the given frame and grid extents.
struct CellSize {
  double h = 1.0;
  double w = 1.0;
};
CellSize cell_size(const Geometry& geom, std::size_t grid_h, std::size_t grid_w);

// (tx, ty, tw, th) for a pixel box owned by cell (gy, gx). The centre
// fraction is clamped to [1e-6, 1 - 1e-6] before the logit.
std::array<double, 4> encode_box(const num::Box& box, std::size_t gy, std::size_t gx, CellSize cell);
num::Box decode_box(double tx, double ty, double tw, double th, std::size_t gy, std::size_t gx,
                    CellSize cell);

// Centre-cell assignment: each object owns the cell containing its centre;
// if two objects share a cell the first listed keeps it.
GroundTruthTargets build_targets(const std::vector<Annotation>& annotations, const Geometry& geom,
                                 std::size_t grid_h, std::size_t grid_w);

// Score per cell is sigmoid(obj) * max softmax(cls); boxes scoring at least
// conf_thresh survive, then greedy per-class NMS at nms_iou. Sorted by
// descending score.
std::vector<Detection> decode(const HeadLogits& logits, const Geometry& geom, double conf_thresh,
                              double nms_iou);

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh);

struct SpLoss {
  double total = 0.0;
  double cls = 0.0;
  double obj = 0.0;
  double reg = 0.0;
  HeadLogits grad;  // dL/dlogits
};

// MSE(cls) + MSE(obj) + mean over positive cells of (1 - GIoU(decoded, gt)).
SpLoss sp_loss(const HeadLogits& logits, const GroundTruthTargets& gt, const Geometry& geom);

}  // namespace dyronet::branch
