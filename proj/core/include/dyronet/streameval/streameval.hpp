#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyronet/branchnet/head.hpp"
#include "dyronet/dataset/synth.hpp"

namespace dyronet::eval {

struct PredictionRecord {
  std::size_t source_frame = 0;
  std::vector<branch::Detection> detections;
  double issued_at_ms = 0.0;
  double available_at_ms = 0.0;
  double latency_ms = 0.0;
  std::size_t sigma = 0;  // branch that produced it (0 for single-model systems)
};

// What a streaming system returns for one processed frame.
struct FrameOutput {
  std::vector<branch::Detection> detections;
  double latency_ms = 0.0;
  std::size_t sigma = 0;
};

class StreamingSystem {
 public:
  virtual ~StreamingSystem() = default;
  virtual FrameOutput process(const data::Clip& clip, std::size_t frame) = 0;
};

// Frames arrive every 1000 / fps ms. A frame is processed only if the
// system is idle when it arrives; frames arriving mid-inference are dropped.
std::vector<PredictionRecord> simulate_stream(StreamingSystem& system, const data::Clip& clip,
                                              double fps = 30.0);

// IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> iou_thresholds();

enum class SizeBucket { kAll, kSmall, kMedium, kLarge };

struct SAPReport {
  double sAP = 0.0;
  double sAP50 = 0.0;
  double sAP75 = 0.0;
  // Empty when no ground-truth box falls in the bucket.
  std::optional<double> sAP_s, sAP_m, sAP_l;
  std::array<double, 10> per_threshold{};
  double mean_latency_ms = 0.0;
  std::vector<double> selection_percent;  // per branch, over processed frames
  std::size_t frames_evaluated = 0;
  std::size_t records = 0;
};

struct ClipRecords {
  const data::Clip* clip = nullptr;
  std::vector<PredictionRecord> records;  // sorted by available_at_ms
};

// Streaming AP over one or more clips. Every annotated frame time t_j is
// matched to the record with the greatest available_at <= t_j. Throws
// ValueError when there is no ground truth at all.
SAPReport sap(const std::vector<ClipRecords>& clips, std::size_t num_branches = 1);
SAPReport sap(const std::vector<PredictionRecord>& records, const data::Clip& clip,
              std::size_t num_branches = 1);

// Plain AP in percent for one class and threshold over (frame, detections,
// ground truth) triples; exposed for testing the matcher.
struct FrameEval {
  std::vector<branch::Detection> detections;
  std::vector<branch::Annotation> ground_truth;
};
std::optional<double> average_precision(const std::vector<FrameEval>& frames, int class_id,
                                        double iou_thresh, SizeBucket bucket = SizeBucket::kAll);

struct LatencyReport {
  double mean = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
};

// Percentiles use linear interpolation between order statistics.
LatencyReport latency_report(const std::vector<double>& latencies_ms);
LatencyReport latency_report(const std::vector<PredictionRecord>& records);

// Percentage of entries equal to each branch index.
std::vector<double> selection_stats(const std::vector<std::size_t>& selections, std::size_t num_branches);

// One row per bank: training-time then inference-time percentages per
// branch, written as CSV with two decimals.
struct SelectionRow {
  std::string label;
  std::vector<double> training;
  std::vector<double> inference;
};
void write_selection_table(std::ostream& out, const std::vector<SelectionRow>& rows);

double spearman(const std::vector<double>& x, const std::vector<double>& y);
double small_object_proportion(const std::vector<num::Box>& boxes, double frame_area,
                               double threshold = 0.01);
double count_variance(const std::vector<double>& per_frame_counts);

struct PolicyRow {
  std::string policy;
  SAPReport report;
};

nlohmann::json to_json(const SAPReport& r);
nlohmann::json to_json(const PolicyRow& row);
// Columns: policy, latency_ms, sAP, sAP50, sAP75, sAP_s, sAP_m, sAP_l.
void write_report_csv(std::ostream& out, const std::vector<PolicyRow>& rows);

}  // namespace dyronet::eval
