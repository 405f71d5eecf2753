#pragma once

#include <array>

namespace dyronet::num {

// Axis-aligned box in corner form.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }

  static Box from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }

  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

// Generalized IoU in [-1, 1]. A zero-area box against a valid one has IoU 0;
// two zero-area boxes raise ValueError.
double giou(const Box& a, const Box& b);

struct GiouResult {
  double value = 0.0;
  // d giou / d (a.x1, a.y1, a.x2, a.y2)
  std::array<double, 4> grad_a{};
};

GiouResult giou_with_grad(const Box& a, const Box& b);

}  // namespace dyronet::num
