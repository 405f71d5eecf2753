#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dyronet/bank/bank.hpp"
#include "dyronet/router/router.hpp"

namespace dyronet::bank {

struct BranchEntry {
  branch::ScaleConfig scale;  // "scale" preset, optionally overridden by widths/history/frame_stride
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> lora;
  double latency_ms = 1.0;
  double jitter_ms = 0.0;
};

struct BankSpec {
  branch::Geometry geometry;
  std::vector<BranchEntry> branches;
  std::filesystem::path router_checkpoint;
  double router_overhead_ms = 0.0;
  router::RouterConfig router_config;
  std::optional<std::filesystem::path> gate_checkpoint;  // MoE gate, same architecture as the router
};

// Relative checkpoint paths are resolved against the manifest's directory.
BankSpec read_bank_spec(const std::filesystem::path& manifest);
void write_bank_spec(const BankSpec& spec, const std::filesystem::path& manifest);

struct LoadedBank {
  BankSpec spec;
  ModelBank bank;
  router::RouterNet router;
  std::optional<router::RouterNet> gate;
};

LoadedBank load_bank(const std::filesystem::path& manifest);

// Writes every checkpoint next to the manifest (branch_<i>.base.drnw,
// branch_<i>.lora.drnw, router.drnw, gate.drnw) and then the manifest
// itself. Checkpoint paths in `spec` are replaced by the written ones.
BankSpec save_bank(const std::filesystem::path& manifest, BankSpec spec, const ModelBank& bank,
                   const router::RouterNet& router, const router::RouterNet* gate = nullptr);

}  // namespace dyronet::bank
