#pragma once

#include <filesystem>

#include "dyronet/dataset/synth.hpp"
#include "dyronet/numcore/ndarray.hpp"

namespace dyronet::data {

// Binary 8-bit PGM (P5). Values are rounded and clamped to 0..255 on write.
void write_pgm(const std::filesystem::path& path, const num::NdArray& frame);
num::NdArray read_pgm(const std::filesystem::path& path);

// Writes frames as clips/<id>/frame_NNNN.pgm and `manifest.json` under root.
// Manifest layout:
//   { "clips": [ { "id", "fps", "motion_state", "regime",
//                  "frames": [relative paths],
//                  "annotations": [ { "image_index", "bbox": [x, y, w, h],
//                                     "category_id", "track_id" } ] } ] }
void save_manifest(const Dataset& dataset, const std::filesystem::path& root);

// Accepts either the dataset root or the manifest file itself. Throws
// IoError for missing files and ValidationError for malformed content.
Dataset load_manifest(const std::filesystem::path& path);

}  // namespace dyronet::data
