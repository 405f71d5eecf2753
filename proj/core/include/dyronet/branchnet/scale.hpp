#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dyronet::branch {

// Frame and head geometry shared by every branch of one bank.
struct Geometry {
  std::size_t height = 96;
  std::size_t width = 160;
  std::size_t num_classes = 1;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct ScaleConfig {
  std::string name;                 // "S", "M" or "L"
  std::vector<std::size_t> widths;  // output channels per backbone stage
  std::size_t history = 1;          // N: number of past frames fused
  std::size_t frame_stride = 1;     // delta t between fused frames

  friend bool operator==(const ScaleConfig&, const ScaleConfig&) = default;
};

// Built-in S / M / L presets. Throws ValidationError for unknown names.
ScaleConfig scale_preset(const std::string& name);

// Every backbone stage is a 3x3 stride-2 conv, so the grid is the input
// downsampled by 2^stages (rounding up).
std::size_t grid_extent(std::size_t input, std::size_t stages);

// Throws ValidationError when widths are empty/zero or history/stride < 1.
void validate(const ScaleConfig& scale);

}  // namespace dyronet::branch
