#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dyronet/bank/manifest.hpp"
#include "dyronet/dataset/manifest.hpp"
#include "dyronet/error.hpp"
#include "dyronet/streameval/policies.hpp"
#include "dyronet/training/training.hpp"

namespace dyronet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string command;
  std::string dataset;
  std::string bank;
  std::string out;
  std::string spec;
  std::string log;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t workers = 1;

  // train
  std::string phase = "both";
  std::size_t epochs_branch = 10;
  std::size_t epochs_router = 5;
  std::size_t alternate = 0;
  std::size_t batch_size = 4;
  double time_unit_ms = 1000.0;
  std::size_t pretrain_epochs = 12;
  double pretrain_lr = 0.02;
  int only_branch = -1;
  std::string regime;

  // eval
  std::vector<std::string> policies{"dyronet"};
  bool csv = false;
  bool wallclock = false;
  double fps = 30.0;
  double conf = 0.5;
  double nms = 0.5;

  // init
  std::vector<std::string> scales{"S", "L"};
  std::vector<double> latency{20.3, 29.9};
  std::vector<double> jitter;
  double router_overhead = 0.5;
  std::size_t rank = 0;
  std::size_t height = 96;
  std::size_t width = 160;
  std::size_t classes = 1;
  bool with_gate = true;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

// Resolved configuration echoed into run.json. Wall-clock fields are the
// only ones allowed to differ between identical runs.
json resolved(const Options& o) {
  json j = {{"command", o.command}, {"seed", o.seed}, {"workers", o.workers}};
  if (!o.dataset.empty()) j["dataset"] = o.dataset;
  if (!o.bank.empty()) j["bank"] = o.bank;
  if (!o.out.empty()) j["out"] = o.out;
  if (o.command == "gen") j["spec"] = o.spec;
  if (o.command == "train") {
    j["phase"] = o.phase;
    j["epochs_branch"] = o.epochs_branch;
    j["epochs_router"] = o.epochs_router;
    j["alternate"] = o.alternate;
    j["batch_size"] = o.batch_size;
    j["time_unit_ms"] = o.time_unit_ms;
    if (o.phase == "pretrain") {
      j["pretrain_epochs"] = o.pretrain_epochs;
      j["pretrain_lr"] = o.pretrain_lr;
      j["branch"] = o.only_branch;
      j["regime"] = o.regime;
    }
  }
  if (o.command == "eval") {
    j["policies"] = o.policies;
    j["csv"] = o.csv;
    j["wallclock"] = o.wallclock;
    j["fps"] = o.fps;
    j["conf_thresh"] = o.conf;
    j["nms_iou"] = o.nms;
  }
  if (o.command == "init") {
    j["scales"] = o.scales;
    j["latency_ms"] = o.latency;
    j["jitter_ms"] = o.jitter;
    j["router_overhead_ms"] = o.router_overhead;
    j["rank"] = o.rank;
    j["geometry"] = {{"height", o.height}, {"width", o.width}, {"num_classes", o.classes}};
    j["gate"] = o.with_gate;
  }
  if (o.command == "analyze" && !o.log.empty()) j["log"] = o.log;
  return j;
}

void write_run_json(const fs::path& dir, const Options& o, double wall_seconds) {
  json j = {{"config", resolved(o)}, {"wall_seconds", wall_seconds}};
  write_json(dir / "run.json", j);
}

data::Dataset filter_regime(const data::Dataset& ds, const std::string& regime) {
  if (regime.empty()) return ds;
  data::Dataset out;
  for (const data::Clip& c : ds.clips)
    if (c.regime == regime) out.clips.push_back(c);
  if (out.clips.empty()) throw ValidationError("dataset has no clips of regime '" + regime + "'");
  return out;
}

// ---- gen ------------------------------------------------------------------

data::SyntheticClipSpec clip_spec_from(const json& j, std::uint64_t fallback_seed) {
  data::SyntheticClipSpec s;
  s.motion = data::parse_motion_state(j.value("motion_state", std::string("straight")));
  s.speed_px_per_frame =
      j.value("speed_px_per_frame", s.motion == data::MotionState::kStop ? 0.0 : s.speed_px_per_frame);
  s.n_objects = j.value("n_objects", s.n_objects);
  s.small_fraction = j.value("small_fraction", s.small_fraction);
  if (j.contains("frame_size")) {
    const auto fsz = j.at("frame_size").get<std::vector<std::size_t>>();
    if (fsz.size() != 2) throw ValidationError("frame_size must be [H, W]");
    s.height = fsz[0];
    s.width = fsz[1];
  }
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.length = j.value("length", s.length);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.turn_rate = j.value("turn_rate", s.turn_rate);
  s.seed = j.value("seed", fallback_seed);
  s.regime = j.value("regime", std::string());
  return s;
}

std::vector<data::SyntheticClipSpec> specs_from(const json& doc, const Options& o) {
  const std::uint64_t seed = o.seed_given ? o.seed : doc.value("seed", std::uint64_t{0});
  std::vector<data::SyntheticClipSpec> specs;
  if (doc.contains("two_regime")) {
    const json& r = doc.at("two_regime");
    data::TwoRegimeRecipe rec;
    rec.clips_per_regime = r.value("clips_per_regime", rec.clips_per_regime);
    rec.length = r.value("length", rec.length);
    rec.slow_speed = r.value("slow_speed", rec.slow_speed);
    rec.fast_speed = r.value("fast_speed", rec.fast_speed);
    rec.fast_small_fraction = r.value("fast_small_fraction", rec.fast_small_fraction);
    rec.n_objects = r.value("n_objects", rec.n_objects);
    rec.seed = seed;
    specs = data::two_regime_specs(rec);
  }
  if (doc.contains("clips")) {
    const json& clips = doc.at("clips");
    if (!clips.is_array()) throw ValidationError("'clips' must be an array");
    for (std::size_t i = 0; i < clips.size(); ++i) specs.push_back(clip_spec_from(clips[i], seed * 1000 + i));
  }
  if (!doc.contains("two_regime") && !doc.contains("clips") && doc.contains("motion_state")) {
    specs.push_back(clip_spec_from(doc, seed));
  }
  if (specs.empty()) throw ValidationError("spec file describes no clips (expected 'two_regime' or 'clips')");
  for (const auto& s : specs) data::validate(s);
  return specs;
}

int cmd_gen(const Options& o, std::ostream& out) {
  const json doc = read_json(o.spec);
  const auto specs = specs_from(doc, o);
  const data::Dataset ds = data::generate(specs);
  ensure_dir(o.out);
  data::save_manifest(ds, o.out);
  std::size_t frames = 0;
  for (const auto& c : ds.clips) frames += c.length();
  out << "wrote " << ds.clips.size() << " clips (" << frames << " frames) to " << o.out << '\n';
  return kExitOk;
}

// ---- init -----------------------------------------------------------------

int cmd_init(const Options& o, std::ostream& out) {
  if (o.scales.empty()) throw ValidationError("--scales needs at least one scale");
  if (o.latency.size() != o.scales.size()) {
    throw ValidationError("--latency needs one value per scale");
  }
  if (!o.jitter.empty() && o.jitter.size() != o.scales.size()) {
    throw ValidationError("--jitter needs one value per scale");
  }
  branch::Geometry geom{o.height, o.width, o.classes};
  bank::BankSpec spec;
  spec.geometry = geom;
  spec.router_overhead_ms = o.router_overhead;
  std::vector<bank::Branch> branches;
  for (std::size_t i = 0; i < o.scales.size(); ++i) {
    bank::BranchEntry e;
    e.scale = branch::scale_preset(o.scales[i]);
    e.latency_ms = o.latency[i];
    e.jitter_ms = o.jitter.empty() ? 0.0 : o.jitter[i];
    branch::ToyDetector det(e.scale, geom, o.seed * 31 + i);
    det.attach_adapters(o.seed * 31 + 1000 + i, o.rank);
    branches.push_back({std::move(det), {e.latency_ms, e.jitter_ms}});
    spec.branches.push_back(e);
  }
  bank::ModelBank bank(std::move(branches), o.router_overhead);
  router::RouterNet router(bank.size(), o.seed * 31 + 500, spec.router_config);
  std::optional<router::RouterNet> gate;
  if (o.with_gate) gate.emplace(bank.size(), o.seed * 31 + 900, spec.router_config);
  ensure_dir(o.out);
  bank::save_bank(fs::path(o.out) / "bank.json", spec, bank, router, gate ? &*gate : nullptr);
  out << "initialised a " << bank.size() << "-branch bank in " << o.out << '\n';
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

std::vector<double> percentages(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  std::vector<double> p(counts.size(), 0.0);
  if (total == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(total);
  return p;
}

std::vector<std::size_t> sum_selections(const std::vector<train::PhaseReport>& phases, std::size_t k) {
  std::vector<std::size_t> s(k, 0);
  for (const auto& p : phases)
    for (std::size_t i = 0; i < std::min(k, p.selections.size()); ++i) s[i] += p.selections[i];
  return s;
}

int cmd_train(const Options& o, std::ostream& out) {
  static const std::vector<std::string> kPhases{"pretrain", "branches", "router", "both", "gate"};
  if (std::find(kPhases.begin(), kPhases.end(), o.phase) == kPhases.end()) {
    throw ValidationError("unknown phase '" + o.phase + "'");
  }
  bank::LoadedBank lb = bank::load_bank(o.bank);
  const data::Dataset ds = filter_regime(data::load_manifest(o.dataset), o.regime);
  fs::path out_dir = o.out.empty() ? fs::path(o.bank).parent_path() : fs::path(o.out);
  if (out_dir.empty()) out_dir = ".";
  ensure_dir(out_dir);

  train::TrainConfig cfg;
  cfg.batch_size = o.batch_size;
  cfg.epochs_branch = o.epochs_branch;
  cfg.epochs_router = o.epochs_router;
  cfg.alternate = o.alternate;
  cfg.time_unit_ms = o.time_unit_ms;
  cfg.workers = o.workers;
  cfg.seed = o.seed;
  train::validate(cfg);

  std::ofstream log_file = open_out(out_dir / "train_log.jsonl");
  train::TrainLog log(&log_file);
  json summary = {{"phase", o.phase}};
  const std::size_t k = lb.bank.size();

  if (o.phase == "pretrain") {
    if (o.only_branch >= static_cast<int>(k)) throw ValidationError("--branch is outside the bank");
    json per_branch = json::array();
    for (std::size_t i = 0; i < k; ++i) {
      if (o.only_branch >= 0 && static_cast<std::size_t>(o.only_branch) != i) continue;
      train::PretrainConfig pc;
      pc.epochs = o.pretrain_epochs;
      pc.batch_size = o.batch_size;
      pc.lr = o.pretrain_lr;
      pc.seed = o.seed + i;
      const auto r = train::pretrain(lb.bank[i].detector, ds, pc, &log);
      per_branch.push_back({{"branch", i}, {"first_epoch_loss", r.first_epoch_loss}, {"last_epoch_loss", r.last_epoch_loss}});
      out << "pretrained branch " << i << ": loss " << r.first_epoch_loss << " -> " << r.last_epoch_loss << '\n';
    }
    summary["pretrain"] = per_branch;
  } else if (o.phase == "gate") {
    if (!lb.gate) lb.gate.emplace(k, o.seed * 31 + 900, lb.spec.router_config);
    const auto r = train::train_moe_gate(lb.bank, *lb.gate, ds, cfg, &log);
    summary["gate"] = {{"first_epoch_loss", r.first_epoch_loss}, {"last_epoch_loss", r.last_epoch_loss}};
    out << "gate loss " << r.first_epoch_loss << " -> " << r.last_epoch_loss << '\n';
  } else {
    std::vector<train::PhaseReport> branch_phases, router_phases;
    if (o.phase == "branches") {
      branch_phases.push_back(train::train_branches(lb.bank, lb.router, ds, cfg, &log));
    } else if (o.phase == "router") {
      router_phases.push_back(train::train_router(lb.bank, lb.router, ds, cfg, &log));
    } else {
      auto sr = train::train_schedule(lb.bank, lb.router, ds, cfg, &log);
      branch_phases = std::move(sr.branch_phases);
      router_phases = std::move(sr.router_phases);
    }
    auto losses = [](const std::vector<train::PhaseReport>& ps) {
      json a = json::array();
      for (const auto& p : ps) a.push_back({{"first_epoch_loss", p.first_epoch_loss}, {"last_epoch_loss", p.last_epoch_loss}});
      return a;
    };
    summary["branch_phases"] = losses(branch_phases);
    summary["router_phases"] = losses(router_phases);

    // Selection statistics: phase-1 routing during training and the trained
    // router's picks on the training frames.
    std::vector<std::size_t> inference(k, 0);
    for (const data::Clip& clip : ds.clips) {
      for (std::size_t t = 0; t + 1 < clip.length(); ++t) {
        const auto d = train::sample_diff(clip, t, lb.router.config().input_size);
        ++inference[router::route(d, lb.router).sigma];
      }
    }
    const std::vector<double> training = branch_phases.empty()
                                             ? percentages(sum_selections(router_phases, k))
                                             : percentages(sum_selections(branch_phases, k));
    std::ofstream sel = open_out(out_dir / "selection.csv");
    eval::write_selection_table(sel, {{"bank", training, percentages(inference)}});
    summary["selection"] = {{"training", training}, {"inference", percentages(inference)}};
    out << "selection (train / infer):";
    for (std::size_t i = 0; i < k; ++i) out << ' ' << training[i] << "% / " << percentages(inference)[i] << '%';
    out << '\n';
  }

  bank::save_bank(out_dir / "bank.json", lb.spec, lb.bank, lb.router, lb.gate ? &*lb.gate : nullptr);
  write_json(out_dir / "train_summary.json", summary);
  out << "wrote bank to " << (out_dir / "bank.json").string() << '\n';
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

std::vector<std::string> split_policies(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const std::string& r : raw) {
    std::stringstream ss(r);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto names = split_policies(o.policies);
  if (names.empty()) throw ValidationError("no policy given");
  std::vector<eval::PolicySpec> policies;
  for (const auto& n : names) policies.push_back(eval::parse_policy(n));

  bank::LoadedBank lb = bank::load_bank(o.bank);
  const data::Dataset ds = data::load_manifest(o.dataset);
  if (o.wallclock) lb.bank.set_latency_mode(bank::LatencyMode::kWallclock);
  const eval::DetectParams params{o.conf, o.nms};
  const fs::path out_dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  ensure_dir(out_dir);

  std::vector<eval::PolicyRow> rows;
  for (const auto& p : policies) {
    lb.bank.reset_executions();
    auto system = eval::make_system(p, lb.bank, lb.router, lb.gate ? &*lb.gate : nullptr, o.seed, params);
    rows.push_back({p.name(), eval::evaluate(*system, ds, lb.bank.size(), o.fps)});
  }
  json report = json::array();
  for (const auto& r : rows) report.push_back(eval::to_json(r));
  write_json(out_dir / "report.json", report);
  if (o.csv) {
    std::ofstream f = open_out(out_dir / "report.csv");
    eval::write_report_csv(f, rows);
  }
  eval::write_report_csv(out, rows);
  return kExitOk;
}

// ---- analyze --------------------------------------------------------------

json nullable(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

std::optional<double> try_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  try {
    return eval::spearman(x, y);
  } catch (const ValueError&) {
    return std::nullopt;  // constant input or too few clips
  }
}

int cmd_analyze(const Options& o, std::ostream& out) {
  if (o.dataset.empty() && o.log.empty()) throw ValidationError("analyze needs --dataset and/or --log");
  const fs::path out_dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  ensure_dir(out_dir);
  json stats = json::object();

  if (!o.dataset.empty()) {
    const data::Dataset ds = data::load_manifest(o.dataset);
    std::ofstream curves = open_out(out_dir / "diff_curves.csv");
    curves << "clip,motion_state,frame_index,size,mean_abs_diff\n";
    std::ofstream clip_csv = open_out(out_dir / "clip_stats.csv");
    clip_csv << "clip,motion_state,regime,mean_abs_diff,mean_objects,count_variance,small_object_proportion\n";

    std::vector<double> mean_counts, variances, smalls;
    std::map<std::string, std::pair<double, std::size_t>> by_motion;
    for (const data::Clip& clip : ds.clips) {
      if (clip.length() < 2) throw ValidationError("clip " + clip.id + " is shorter than two frames");
      const auto cs = router::diff_mean_curves(clip.frames, router::default_curve_sizes());
      for (const auto& c : cs) {
        for (std::size_t i = 0; i < c.mean_abs_diff.size(); ++i) {
          curves << clip.id << ',' << data::to_string(clip.motion) << ',' << i + 1 << ',' << c.size.label()
                 << ',' << c.mean_abs_diff[i] << '\n';
        }
      }
      double mad = 0.0;
      for (double v : cs.front().mean_abs_diff) mad += v;
      mad /= static_cast<double>(cs.front().mean_abs_diff.size());

      std::vector<double> counts;
      std::vector<num::Box> boxes;
      for (const auto& anns : clip.annotations) {
        counts.push_back(static_cast<double>(anns.size()));
        for (const auto& a : anns) boxes.push_back(a.box);
      }
      double mean_count = 0.0;
      for (double c : counts) mean_count += c;
      mean_count /= static_cast<double>(counts.size());
      const double var = eval::count_variance(counts);
      const auto& f0 = clip.frames.front();
      const double area = static_cast<double>(f0.extent(1) * f0.extent(2));
      const double small = boxes.empty() ? 0.0 : eval::small_object_proportion(boxes, area);

      clip_csv << clip.id << ',' << data::to_string(clip.motion) << ',' << clip.regime << ',' << mad << ','
               << mean_count << ',' << var << ',' << small << '\n';
      mean_counts.push_back(mean_count);
      variances.push_back(var);
      smalls.push_back(small);
      auto& m = by_motion[data::to_string(clip.motion)];
      m.first += mad;
      ++m.second;
    }
    json motion = json::object();
    for (const auto& [k, v] : by_motion) motion[k] = v.first / static_cast<double>(v.second);
    stats["mean_abs_diff_by_motion"] = motion;

    if (!o.bank.empty()) {
      // Per-clip accuracy of each branch against scene statistics.
      bank::LoadedBank lb = bank::load_bank(o.bank);
      std::ofstream sp = open_out(out_dir / "spearman.csv");
      sp << "branch,factor,rho\n";
      json table = json::array();
      for (std::size_t b = 0; b < lb.bank.size(); ++b) {
        std::vector<double> per_clip;
        for (const data::Clip& clip : ds.clips) {
          eval::FixedBranchSystem sys(lb.bank, b, o.seed);
          const auto records = eval::simulate_stream(sys, clip);
          per_clip.push_back(eval::sap(records, clip, lb.bank.size()).sAP);
        }
        const std::vector<std::pair<std::string, const std::vector<double>*>> factors{
            {"mean_objects", &mean_counts}, {"count_variance", &variances}, {"small_object_proportion", &smalls}};
        for (const auto& [name, xs] : factors) {
          const auto rho = try_spearman(*xs, per_clip);
          sp << b << ',' << name << ',';
          if (rho) sp << *rho;
          sp << '\n';
          table.push_back({{"branch", b}, {"factor", name}, {"rho", nullable(rho)}});
        }
      }
      stats["spearman"] = table;
    }
    out << "analysed " << ds.clips.size() << " clips\n";
  }

  if (!o.log.empty()) {
    std::ifstream in(o.log);
    if (!in) throw IoError("cannot open " + o.log);
    std::map<std::string, std::vector<std::size_t>> picks;
    std::size_t k = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json r;
      try {
        r = json::parse(line);
      } catch (const json::parse_error&) {
        throw ValidationError(o.log + ":" + std::to_string(lineno) + " is not a JSON record");
      }
      const auto sigma = r.at("sigma").get<std::size_t>();
      picks[r.at("phase").get<std::string>()].push_back(sigma);
      k = std::max(k, sigma + 1);
    }
    std::vector<eval::SelectionRow> rows;
    json sel = json::object();
    for (const auto& [phase, s] : picks) {
      const auto pct = eval::selection_stats(s, k);
      rows.push_back({phase, pct, {}});
      sel[phase] = pct;
    }
    std::ofstream f = open_out(out_dir / "selection.csv");
    eval::write_selection_table(f, rows);
    stats["selection"] = sel;
    out << "selection statistics over " << picks.size() << " phases\n";
  }

  write_json(out_dir / "stats.json", stats);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"dyronet: dynamic routing for streaming perception on synthetic driving clips"};
  app.require_subcommand(1);

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed")->each([&o](const std::string&) { o.seed_given = true; });
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset from a JSON spec");
  gen->add_option("--spec", o.spec, "Spec JSON (two_regime recipe and/or explicit clips)")->required();
  common(gen);
  gen->get_option("--out")->required();

  auto* init = app.add_subcommand("init", "Create a bank with freshly initialised weights");
  common(init);
  init->get_option("--out")->required();
  init->add_option("--scales", o.scales, "Branch scales, ascending")->delimiter(',');
  init->add_option("--latency", o.latency, "Simulated latency per branch (ms)")->delimiter(',');
  init->add_option("--jitter", o.jitter, "Latency jitter per branch (ms)")->delimiter(',');
  init->add_option("--router-overhead", o.router_overhead, "Router overhead (ms)");
  init->add_option("--rank", o.rank, "LoRA rank (0 = default rule)");
  init->add_option("--height", o.height);
  init->add_option("--width", o.width);
  init->add_option("--classes", o.classes);
  init->add_flag("!--no-gate", o.with_gate, "Skip the MoE gate");

  auto* trn = app.add_subcommand("train", "Train branches, router or MoE gate");
  common(trn);
  trn->add_option("--bank", o.bank, "Bank manifest")->required();
  trn->add_option("--dataset", o.dataset, "Dataset root or manifest")->required();
  trn->add_option("--phase", o.phase, "pretrain | branches | router | both | gate");
  trn->add_option("--epochs-branch", o.epochs_branch);
  trn->add_option("--epochs-router", o.epochs_router);
  trn->add_option("--alternate", o.alternate, "Rounds of alternating phases (0 = sequential)");
  trn->add_option("--batch-size", o.batch_size);
  trn->add_option("--time-unit", o.time_unit_ms, "Latency unit (ms) before the softmax");
  trn->add_option("--workers", o.workers);
  trn->add_option("--epochs", o.pretrain_epochs, "Pretraining epochs");
  trn->add_option("--lr", o.pretrain_lr, "Pretraining learning rate");
  trn->add_option("--branch", o.only_branch, "Pretrain only this branch");
  trn->add_option("--regime", o.regime, "Train only on clips of this regime");

  auto* ev = app.add_subcommand("eval", "Streaming evaluation of one or more policies");
  common(ev);
  ev->add_option("--bank", o.bank, "Bank manifest")->required();
  ev->add_option("--dataset", o.dataset, "Dataset root or manifest")->required();
  ev->add_option("--policy", o.policies, "dyronet | random | moe | sign | branch:<i>")->delimiter(',');
  ev->add_flag("--csv", o.csv, "Also write report.csv");
  ev->add_flag("--wallclock", o.wallclock, "Measure latency instead of simulating it");
  ev->add_option("--fps", o.fps);
  ev->add_option("--conf", o.conf, "Detection confidence threshold");
  ev->add_option("--nms", o.nms, "NMS IoU threshold");
  ev->add_option("--workers", o.workers);

  auto* an = app.add_subcommand("analyze", "Scene statistics, diff curves and selection tables");
  common(an);
  an->add_option("--dataset", o.dataset, "Dataset root or manifest");
  an->add_option("--bank", o.bank, "Bank manifest for per-clip accuracy correlations");
  an->add_option("--log", o.log, "Training log (JSON lines)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitValidation;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    int code = kExitFailure;
    if (gen->parsed()) {
      o.command = "gen";
      code = cmd_gen(o, out);
    } else if (init->parsed()) {
      o.command = "init";
      code = cmd_init(o, out);
    } else if (trn->parsed()) {
      o.command = "train";
      code = cmd_train(o, out);
    } else if (ev->parsed()) {
      o.command = "eval";
      code = cmd_eval(o, out);
    } else if (an->parsed()) {
      o.command = "analyze";
      code = cmd_analyze(o, out);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fs::path dir = o.out;
    if (dir.empty()) dir = o.command == "train" ? fs::path(o.bank).parent_path() : fs::path(".");
    if (dir.empty()) dir = ".";
    write_run_json(dir, o, wall);
    return code;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "fatal: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace dyronet::cli
