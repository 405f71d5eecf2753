#include "dyronet/bank/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "dyronet/error.hpp"

namespace dyronet::bank {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_to(const fs::path& base, const fs::path& p) {
  std::error_code ec;
  const fs::path rel = fs::relative(p, base, ec);
  return (ec || rel.empty()) ? p.string() : rel.generic_string();
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ValidationError(std::string("bank manifest: '") + key + "' must be a number");
  return j.at(key).get<double>();
}

}  // namespace

BankSpec read_bank_spec(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open bank manifest " + manifest.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("bank manifest is not valid JSON: " + std::string(e.what()));
  }
  const fs::path base = manifest.parent_path();
  BankSpec spec;
  try {
    if (doc.contains("geometry")) {
      const json& g = doc.at("geometry");
      spec.geometry.height = g.value("height", spec.geometry.height);
      spec.geometry.width = g.value("width", spec.geometry.width);
      spec.geometry.num_classes = g.value("num_classes", spec.geometry.num_classes);
    }
    const json& branches = doc.at("branches");
    if (!branches.is_array() || branches.empty()) throw ValidationError("bank manifest needs a non-empty 'branches' array");
    for (const json& b : branches) {
      BranchEntry e;
      e.scale = branch::scale_preset(b.at("scale").get<std::string>());
      if (b.contains("widths")) e.scale.widths = b.at("widths").get<std::vector<std::size_t>>();
      e.scale.history = b.value("history", e.scale.history);
      e.scale.frame_stride = b.value("frame_stride", e.scale.frame_stride);
      branch::validate(e.scale);
      e.checkpoint = resolve(base, b.at("checkpoint").get<std::string>());
      if (b.contains("lora") && !b.at("lora").is_null()) e.lora = resolve(base, b.at("lora").get<std::string>());
      e.latency_ms = number(b, "latency_ms", 0.0);
      e.jitter_ms = number(b, "jitter_ms", 0.0);
      if (!(e.latency_ms > 0.0)) throw ValidationError("bank manifest: latency_ms must be > 0");
      if (e.jitter_ms < 0.0) throw ValidationError("bank manifest: jitter_ms must be >= 0");
      spec.branches.push_back(std::move(e));
    }
    const json& r = doc.at("router");
    spec.router_checkpoint = resolve(base, r.at("checkpoint").get<std::string>());
    spec.router_overhead_ms = number(r, "overhead_ms", 0.0);
    if (spec.router_overhead_ms < 0.0) throw ValidationError("bank manifest: overhead_ms must be >= 0");
    spec.router_config.input_size = r.value("input_size", spec.router_config.input_size);
    spec.router_config.filters = r.value("filters", spec.router_config.filters);
    spec.router_config.kernel = r.value("kernel", spec.router_config.kernel);
    spec.router_config.stride = r.value("stride", spec.router_config.stride);
    if (doc.contains("gate") && !doc.at("gate").is_null()) {
      spec.gate_checkpoint = resolve(base, doc.at("gate").at("checkpoint").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed bank manifest: " + std::string(e.what()));
  }
  return spec;
}

void write_bank_spec(const BankSpec& spec, const fs::path& manifest) {
  const fs::path base = manifest.parent_path();
  json doc;
  doc["geometry"] = {{"height", spec.geometry.height},
                     {"width", spec.geometry.width},
                     {"num_classes", spec.geometry.num_classes}};
  json branches = json::array();
  for (const BranchEntry& e : spec.branches) {
    json b;
    b["scale"] = e.scale.name;
    b["widths"] = e.scale.widths;
    b["history"] = e.scale.history;
    b["frame_stride"] = e.scale.frame_stride;
    b["checkpoint"] = relative_to(base, e.checkpoint);
    b["lora"] = e.lora ? json(relative_to(base, *e.lora)) : json(nullptr);
    b["latency_ms"] = e.latency_ms;
    b["jitter_ms"] = e.jitter_ms;
    branches.push_back(std::move(b));
  }
  doc["branches"] = std::move(branches);
  doc["router"] = {{"checkpoint", relative_to(base, spec.router_checkpoint)},
                   {"overhead_ms", spec.router_overhead_ms},
                   {"input_size", spec.router_config.input_size},
                   {"filters", spec.router_config.filters},
                   {"kernel", spec.router_config.kernel},
                   {"stride", spec.router_config.stride}};
  doc["gate"] = spec.gate_checkpoint ? json{{"checkpoint", relative_to(base, *spec.gate_checkpoint)}}
                                     : json(nullptr);
  if (!base.empty()) fs::create_directories(base);
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write bank manifest " + manifest.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + manifest.string());
}

LoadedBank load_bank(const fs::path& manifest) {
  BankSpec spec = read_bank_spec(manifest);
  std::vector<Branch> branches;
  for (const BranchEntry& e : spec.branches) {
    branch::ToyDetector det(e.scale, spec.geometry, 0, branch::ToyDetector::Init::kZero);
    det.load_base(branch::read_checkpoint(e.checkpoint));
    if (e.lora) det.load_adapters(branch::read_checkpoint(*e.lora));
    branches.push_back({std::move(det), {e.latency_ms, e.jitter_ms}});
  }
  const std::size_t k = branches.size();
  ModelBank bank(std::move(branches), spec.router_overhead_ms);
  router::RouterNet net(k, 0, spec.router_config);
  net.load(branch::read_checkpoint(spec.router_checkpoint));
  std::optional<router::RouterNet> gate;
  if (spec.gate_checkpoint) {
    gate.emplace(k, 0, spec.router_config);
    gate->load(branch::read_checkpoint(*spec.gate_checkpoint));
  }
  return LoadedBank{std::move(spec), std::move(bank), std::move(net), std::move(gate)};
}

BankSpec save_bank(const fs::path& manifest, BankSpec spec, const ModelBank& bank,
                   const router::RouterNet& router, const router::RouterNet* gate) {
  if (spec.branches.size() != bank.size()) throw ValidationError("bank spec and bank differ in size");
  const fs::path dir = manifest.parent_path().empty() ? fs::path(".") : manifest.parent_path();
  fs::create_directories(dir);
  spec.geometry = bank.geometry();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const branch::ToyDetector& det = bank[i].detector;
    BranchEntry& e = spec.branches[i];
    e.scale = det.scale();
    e.latency_ms = bank[i].latency.base_ms;
    e.jitter_ms = bank[i].latency.jitter_ms;
    e.checkpoint = dir / ("branch_" + std::to_string(i) + ".base.drnw");
    branch::write_checkpoint(e.checkpoint, det.base_tensors());
    if (det.has_adapters()) {
      e.lora = dir / ("branch_" + std::to_string(i) + ".lora.drnw");
      branch::write_checkpoint(*e.lora, det.adapter_tensors());
    } else {
      e.lora.reset();
    }
  }
  spec.router_overhead_ms = bank.router_overhead_ms();
  spec.router_config = router.config();
  spec.router_checkpoint = dir / "router.drnw";
  branch::write_checkpoint(spec.router_checkpoint, router.tensors());
  if (gate) {
    spec.gate_checkpoint = dir / "gate.drnw";
    branch::write_checkpoint(*spec.gate_checkpoint, gate->tensors());
  } else {
    spec.gate_checkpoint.reset();
  }
  write_bank_spec(spec, manifest);
  return spec;
}

}  // namespace dyronet::bank
