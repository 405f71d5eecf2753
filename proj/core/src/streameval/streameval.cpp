#include "dyronet/streameval/streameval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "dyronet/error.hpp"

namespace dyronet::eval {

using branch::Annotation;
using branch::Detection;

std::vector<PredictionRecord> simulate_stream(StreamingSystem& system, const data::Clip& clip,
                                              double fps) {
  if (clip.length() == 0) throw ValidationError("simulate_stream: empty clip");
  if (!(fps > 0.0)) throw ValidationError("simulate_stream: fps must be positive");
  const double period = 1000.0 / fps;
  std::vector<PredictionRecord> out;
  double free_at = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < clip.length(); ++i) {
    const double arrival = static_cast<double>(i) * period;
    if (arrival < free_at) continue;  // busy: the frame is dropped
    FrameOutput r = system.process(clip, i);
    if (!(r.latency_ms >= 0.0) || !std::isfinite(r.latency_ms)) {
      throw NumericError("simulate_stream: latency must be finite and >= 0");
    }
    PredictionRecord rec;
    rec.source_frame = i;
    rec.detections = std::move(r.detections);
    rec.issued_at_ms = arrival;
    rec.latency_ms = r.latency_ms;
    rec.available_at_ms = arrival + r.latency_ms;
    rec.sigma = r.sigma;
    free_at = rec.available_at_ms;
    out.push_back(std::move(rec));
  }
  return out;
}

std::array<double, 10> iou_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(50 + 5 * k) / 100.0;
  return t;
}

namespace {

bool in_bucket(double area, SizeBucket b) {
  constexpr double kSmall = 32.0 * 32.0, kLarge = 96.0 * 96.0;
  switch (b) {
    case SizeBucket::kAll:
      return true;
    case SizeBucket::kSmall:
      return area < kSmall;
    case SizeBucket::kMedium:
      return area >= kSmall && area < kLarge;
    case SizeBucket::kLarge:
      return area >= kLarge;
  }
  return true;
}

struct ScoredMatch {
  double score;
  bool tp;
};

}  // namespace

std::optional<double> average_precision(const std::vector<FrameEval>& frames, int class_id,
                                        double iou_thresh, SizeBucket bucket) {
  std::vector<ScoredMatch> scored;
  std::size_t n_gt = 0;
  for (const FrameEval& f : frames) {
    // Ground truth outside the bucket is kept as "ignore": matching it
    // neither helps nor hurts. Non-ignored boxes are tried first.
    std::vector<const Annotation*> gts;
    std::vector<bool> ignored;
    for (int pass = 0; pass < 2; ++pass) {
      for (const Annotation& a : f.ground_truth) {
        if (a.class_id != class_id) continue;
        const bool ign = !in_bucket(a.box.area(), bucket);
        if (ign != (pass == 1)) continue;
        gts.push_back(&a);
        ignored.push_back(ign);
        if (!ign) ++n_gt;
      }
    }
    std::vector<const Detection*> dets;
    for (const Detection& d : f.detections)
      if (d.class_id == class_id) dets.push_back(&d);
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection* a, const Detection* b) { return a->score > b->score; });
    std::vector<bool> taken(gts.size(), false);
    for (const Detection* d : dets) {
      double best_iou = iou_thresh;
      std::ptrdiff_t best = -1;
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (taken[j]) continue;
        if (best >= 0 && !ignored[static_cast<std::size_t>(best)] && ignored[j]) break;
        const double v = num::iou(d->box, gts[j]->box);
        if (v < best_iou) continue;
        best_iou = v;
        best = static_cast<std::ptrdiff_t>(j);
      }
      if (best >= 0) {
        taken[static_cast<std::size_t>(best)] = true;
        if (!ignored[static_cast<std::size_t>(best)]) scored.push_back({d->score, true});
      } else if (in_bucket(d->box.area(), bucket)) {
        scored.push_back({d->score, false});
      }
    }
  }
  if (n_gt == 0) return std::nullopt;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.score > b.score; });
  std::vector<double> precision(scored.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (scored[k].tp) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Precision envelope, then sum at every recall step.
  for (std::size_t k = scored.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  for (std::size_t k = 0; k < scored.size(); ++k)
    if (scored[k].tp) ap += precision[k];
  return 100.0 * ap / static_cast<double>(n_gt);
}

SAPReport sap(const std::vector<ClipRecords>& clips, std::size_t num_branches) {
  std::vector<FrameEval> frames;
  std::vector<int> classes;
  SAPReport report;
  std::vector<double> latencies;
  std::vector<std::size_t> sigmas;
  for (const ClipRecords& cr : clips) {
    if (!cr.clip) throw ValidationError("sap: missing clip");
    const data::Clip& clip = *cr.clip;
    for (std::size_t i = 1; i < cr.records.size(); ++i) {
      if (cr.records[i].available_at_ms < cr.records[i - 1].available_at_ms) {
        throw ValidationError("sap: records must be sorted by available_at");
      }
    }
    const double period = 1000.0 / clip.fps;
    std::size_t next = 0;
    const PredictionRecord* current = nullptr;
    for (std::size_t j = 0; j < clip.length(); ++j) {
      const double t = static_cast<double>(j) * period;
      while (next < cr.records.size() && cr.records[next].available_at_ms <= t) current = &cr.records[next++];
      FrameEval fe;
      if (current) fe.detections = current->detections;
      fe.ground_truth = clip.annotations[j];
      for (const Annotation& a : fe.ground_truth) {
        if (std::find(classes.begin(), classes.end(), a.class_id) == classes.end()) classes.push_back(a.class_id);
      }
      frames.push_back(std::move(fe));
    }
    for (const PredictionRecord& r : cr.records) {
      latencies.push_back(r.latency_ms);
      sigmas.push_back(r.sigma);
    }
    report.records += cr.records.size();
  }
  if (classes.empty()) throw ValueError("sap: no ground-truth boxes to evaluate against");
  std::sort(classes.begin(), classes.end());
  report.frames_evaluated = frames.size();

  const auto thresholds = iou_thresholds();
  auto bucket_ap = [&](SizeBucket b, std::array<double, 10>* per_thr) -> std::optional<double> {
    double sum = 0.0;
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      double acc = 0.0;
      std::size_t n = 0;
      for (int c : classes) {
        if (auto ap = average_precision(frames, c, thresholds[k], b)) {
          acc += *ap;
          ++n;
        }
      }
      if (n == 0) return std::nullopt;
      const double v = acc / static_cast<double>(n);
      if (per_thr) (*per_thr)[k] = v;
      sum += v;
    }
    return sum / static_cast<double>(thresholds.size());
  };
  report.sAP = bucket_ap(SizeBucket::kAll, &report.per_threshold).value_or(0.0);
  report.sAP50 = report.per_threshold[0];
  report.sAP75 = report.per_threshold[5];
  report.sAP_s = bucket_ap(SizeBucket::kSmall, nullptr);
  report.sAP_m = bucket_ap(SizeBucket::kMedium, nullptr);
  report.sAP_l = bucket_ap(SizeBucket::kLarge, nullptr);
  if (!latencies.empty()) {
    report.mean_latency_ms = latency_report(latencies).mean;
    report.selection_percent = selection_stats(sigmas, std::max<std::size_t>(1, num_branches));
  }
  return report;
}

SAPReport sap(const std::vector<PredictionRecord>& records, const data::Clip& clip,
              std::size_t num_branches) {
  return sap(std::vector<ClipRecords>{{&clip, records}}, num_branches);
}

LatencyReport latency_report(const std::vector<double>& latencies_ms) {
  if (latencies_ms.empty()) throw ValueError("latency_report: no latencies");
  std::vector<double> v = latencies_ms;
  std::sort(v.begin(), v.end());
  LatencyReport r;
  double sum = 0.0;
  for (double x : v) sum += x;
  r.mean = sum / static_cast<double>(v.size());
  auto pct = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return frac == 0.0 ? v[lo] : v[lo] + (v[hi] - v[lo]) * frac;
  };
  r.p50 = pct(0.50);
  r.p99 = pct(0.99);
  return r;
}

LatencyReport latency_report(const std::vector<PredictionRecord>& records) {
  std::vector<double> v;
  for (const PredictionRecord& r : records) v.push_back(r.latency_ms);
  return latency_report(v);
}

std::vector<double> selection_stats(const std::vector<std::size_t>& selections, std::size_t num_branches) {
  if (selections.empty()) throw ValueError("selection_stats: empty selection log");
  if (num_branches == 0) throw ValidationError("selection_stats: need at least one branch");
  std::vector<std::size_t> counts(num_branches, 0);
  for (std::size_t s : selections) {
    if (s >= num_branches) throw RangeError("selection_stats: branch index " + std::to_string(s) + " out of range");
    ++counts[s];
  }
  std::vector<double> pct(num_branches);
  for (std::size_t i = 0; i < num_branches; ++i) {
    pct[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(selections.size());
  }
  return pct;
}

void write_selection_table(std::ostream& out, const std::vector<SelectionRow>& rows) {
  std::size_t k = 0;
  for (const SelectionRow& r : rows) k = std::max({k, r.training.size(), r.inference.size()});
  out << "bank";
  for (std::size_t i = 0; i < k; ++i) out << ",train_model_" << (i + 1);
  for (std::size_t i = 0; i < k; ++i) out << ",infer_model_" << (i + 1);
  out << '\n';
  char buf[32];
  auto cells = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < k; ++i) {
      if (i < v.size()) {
        std::snprintf(buf, sizeof(buf), "%.2f", v[i]);
        out << ',' << buf;
      } else {
        out << ',';
      }
    }
  };
  for (const SelectionRow& r : rows) {
    out << r.label;
    cells(r.training);
    cells(r.inference);
    out << '\n';
  }
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t q = i; q <= j; ++q) rank[idx[q]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman: length mismatch");
  if (x.size() < 2) throw ValueError("spearman: need at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw NumericError("spearman: non-finite input");
  }
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValueError("spearman: undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double small_object_proportion(const std::vector<num::Box>& boxes, double frame_area, double threshold) {
  if (!(frame_area > 0.0)) throw ValidationError("small_object_proportion: frame area must be positive");
  if (boxes.empty()) throw ValueError("small_object_proportion: no annotations");
  std::size_t small = 0;
  for (const num::Box& b : boxes)
    if (b.area() / frame_area < threshold) ++small;
  return static_cast<double>(small) / static_cast<double>(boxes.size());
}

double count_variance(const std::vector<double>& counts) {
  if (counts.size() < 2) throw ValueError("count_variance: need at least two frames");
  double mean = 0.0;
  for (double c : counts) mean += c;
  mean /= static_cast<double>(counts.size());
  double acc = 0.0;
  for (double c : counts) acc += (c - mean) * (c - mean);
  return acc / static_cast<double>(counts.size());
}

nlohmann::json to_json(const SAPReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"sAP", r.sAP},
          {"sAP50", r.sAP50},
          {"sAP75", r.sAP75},
          {"sAP_s", opt(r.sAP_s)},
          {"sAP_m", opt(r.sAP_m)},
          {"sAP_l", opt(r.sAP_l)},
          {"per_threshold", r.per_threshold},
          {"mean_latency_ms", r.mean_latency_ms},
          {"selection_percent", r.selection_percent},
          {"frames_evaluated", r.frames_evaluated},
          {"records", r.records}};
}

nlohmann::json to_json(const PolicyRow& row) {
  nlohmann::json j = to_json(row.report);
  j["policy"] = row.policy;
  return j;
}

void write_report_csv(std::ostream& out, const std::vector<PolicyRow>& rows) {
  out << "policy,latency_ms,sAP,sAP50,sAP75,sAP_s,sAP_m,sAP_l\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  for (const PolicyRow& r : rows) {
    out << r.policy << ',' << num(r.report.mean_latency_ms) << ',' << num(r.report.sAP) << ','
        << num(r.report.sAP50) << ',' << num(r.report.sAP75) << ',' << opt(r.report.sAP_s) << ','
        << opt(r.report.sAP_m) << ',' << opt(r.report.sAP_l) << '\n';
  }
}

}  // namespace dyronet::eval
