#include "dyronet/branchnet/scale.hpp"

#include "dyronet/error.hpp"

namespace dyronet::branch {

ScaleConfig scale_preset(const std::string& name) {
  if (name == "S") return {"S", {8, 16, 24, 32}, 1, 1};
  if (name == "M") return {"M", {12, 24, 48, 64}, 1, 1};
  if (name == "L") return {"L", {16, 32, 64, 96}, 1, 1};
  throw ValidationError("unknown scale '" + name + "' (expected S, M or L)");
}

std::size_t grid_extent(std::size_t input, std::size_t stages) {
  std::size_t e = input;
  for (std::size_t i = 0; i < stages; ++i) e = (e + 1) / 2;
  return e;
}

void validate(const ScaleConfig& scale) {
  if (scale.widths.empty()) throw ValidationError("scale " + scale.name + " has no stages");
  for (std::size_t w : scale.widths)
    if (w == 0) throw ValidationError("scale " + scale.name + " has a zero-width stage");
  if (scale.history < 1) throw ValidationError("history length N must be >= 1");
  if (scale.frame_stride < 1) throw ValidationError("frame stride must be >= 1");
}

}  // namespace dyronet::branch
