#include "dyronet/numcore/box.hpp"

#include <algorithm>
#include <cmath>

#include "dyronet/error.hpp"

namespace dyronet::num {

namespace {

void require_valid(const Box& b) {
  if (!(std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2))) {
    throw ValueError("box has non-finite coordinates");
  }
  if (b.width() < 0.0 || b.height() < 0.0) throw ValueError("box has negative extent");
}

}  // namespace

double iou(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const Box& a, const Box& b) { return giou_with_grad(a, b).value; }

GiouResult giou_with_grad(const Box& a, const Box& b) {
  require_valid(a);
  require_valid(b);
  if (a.area() <= 0.0 && b.area() <= 0.0) throw ValueError("giou: both boxes are degenerate");

  const bool a_left = a.x1 >= b.x1;   // intersection left edge comes from a
  const bool a_right = a.x2 <= b.x2;  // intersection right edge comes from a
  const bool a_top = a.y1 >= b.y1;
  const bool a_bottom = a.y2 <= b.y2;
  const double iw_raw = (a_right ? a.x2 : b.x2) - (a_left ? a.x1 : b.x1);
  const double ih_raw = (a_bottom ? a.y2 : b.y2) - (a_top ? a.y1 : b.y1);
  const bool overlap = iw_raw > 0.0 && ih_raw > 0.0;
  const double iw = overlap ? iw_raw : 0.0;
  const double ih = overlap ? ih_raw : 0.0;
  const double inter = iw * ih;

  const double wa = a.width(), ha = a.height();
  const double uni = wa * ha + b.area() - inter;

  const bool c_left = a.x1 <= b.x1;  // enclosing left edge comes from a
  const bool c_right = a.x2 >= b.x2;
  const bool c_top = a.y1 <= b.y1;
  const bool c_bottom = a.y2 >= b.y2;
  const double cw = (c_right ? a.x2 : b.x2) - (c_left ? a.x1 : b.x1);
  const double ch = (c_bottom ? a.y2 : b.y2) - (c_top ? a.y1 : b.y1);
  const double enc = cw * ch;
  if (uni <= 0.0 || enc <= 0.0) throw ValueError("giou: empty union");

  GiouResult r;
  r.value = inter / uni - (enc - uni) / enc;

  // d inter / d corner
  std::array<double, 4> d_inter{};
  if (overlap) {
    d_inter[0] = a_left ? -ih : 0.0;
    d_inter[1] = a_top ? -iw : 0.0;
    d_inter[2] = a_right ? ih : 0.0;
    d_inter[3] = a_bottom ? iw : 0.0;
  }
  const std::array<double, 4> d_area_a{-ha, -wa, ha, wa};
  const std::array<double, 4> d_enc{c_left ? -ch : 0.0, c_top ? -cw : 0.0, c_right ? ch : 0.0,
                                    c_bottom ? cw : 0.0};
  // G = I/U - 1 + U/C
  for (int k = 0; k < 4; ++k) {
    const double d_uni = d_area_a[k] - d_inter[k];
    r.grad_a[k] = d_inter[k] / uni - inter * d_uni / (uni * uni) + d_uni / enc -
                  uni * d_enc[k] / (enc * enc);
  }
  return r;
}

}  // namespace dyronet::num
