#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "dyronet/error.hpp"
#include "dyronet/streameval/policies.hpp"
#include "dyronet/streameval/streameval.hpp"
#include "oracles.hpp"

using namespace dyronet;
using num::NdArray;

namespace {

// Clip with one object per frame moving `step` px to the right.
data::Clip moving_clip(std::size_t n, double step, double w = 10.0, double h = 10.0) {
  data::Clip c;
  c.id = "c";
  for (std::size_t i = 0; i < n; ++i) {
    c.frames.emplace_back(num::Shape{1, 8, 8});
    const double x = 2.0 + step * static_cast<double>(i);
    c.annotations.push_back({{num::Box{x, 5.0, x + w, 5.0 + h}, 0, 1}});
  }
  return c;
}

std::vector<branch::Detection> as_detections(const std::vector<branch::Annotation>& gt) {
  std::vector<branch::Detection> d;
  for (const auto& a : gt) d.push_back({a.box, a.class_id, 0.9});
  return d;
}

// Emits the ground truth of frame - delay with a fixed latency.
class OracleSystem : public eval::StreamingSystem {
 public:
  OracleSystem(double latency, std::size_t delay = 0) : latency_(latency), delay_(delay) {}
  eval::FrameOutput process(const data::Clip& clip, std::size_t frame) override {
    ++calls;
    const std::size_t src = frame >= delay_ ? frame - delay_ : 0;
    return {as_detections(clip.annotations[src]), latency_, 0};
  }
  std::size_t calls = 0;

 private:
  double latency_;
  std::size_t delay_;
};

}  // namespace

TEST(SimulateStream, ZeroLatencyProcessesEveryFrame) {
  const auto clip = moving_clip(6, 1.0);
  OracleSystem sys(0.0);
  const auto recs = eval::simulate_stream(sys, clip);
  ASSERT_EQ(recs.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(recs[i].source_frame, i);
    EXPECT_DOUBLE_EQ(recs[i].available_at_ms, recs[i].issued_at_ms);
    EXPECT_NEAR(recs[i].issued_at_ms, 1000.0 / 30.0 * i, 1e-9);
  }
}

TEST(SimulateStream, FiftyMillisecondsSkipsEveryOtherFrame) {
  const auto clip = moving_clip(10, 1.0);
  OracleSystem sys(50.0);
  const auto recs = eval::simulate_stream(sys, clip);
  ASSERT_EQ(recs.size(), 5u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].source_frame, 2 * i);
    EXPECT_DOUBLE_EQ(recs[i].available_at_ms, recs[i].issued_at_ms + 50.0);
  }
  EXPECT_EQ(sys.calls, 5u);
}

TEST(SimulateStream, StarvationLeavesOneRecord) {
  const auto clip = moving_clip(4, 1.0);
  OracleSystem sys(1000.0);
  const auto recs = eval::simulate_stream(sys, clip);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_GT(recs[0].available_at_ms, 3 * 1000.0 / 30.0);
}

TEST(Sap, PerfectZeroLatencyOracleIs100) {
  const auto clip = moving_clip(8, 3.0, 40.0, 40.0);
  OracleSystem sys(0.0);
  const auto r = eval::sap(eval::simulate_stream(sys, clip), clip);
  EXPECT_DOUBLE_EQ(r.sAP, 100.0);
  EXPECT_DOUBLE_EQ(r.sAP50, 100.0);
  EXPECT_DOUBLE_EQ(r.sAP75, 100.0);
  ASSERT_TRUE(r.sAP_m.has_value());
  EXPECT_DOUBLE_EQ(*r.sAP_m, 100.0);
  EXPECT_FALSE(r.sAP_s.has_value());
  EXPECT_FALSE(r.sAP_l.has_value());
}

TEST(Sap, NothingAvailableIsZero) {
  const auto clip = moving_clip(5, 1.0);
  std::vector<eval::PredictionRecord> recs{{0, as_detections(clip.annotations[0]), 0.0, 5000.0, 5000.0, 0}};
  EXPECT_EQ(eval::sap(recs, clip).sAP, 0.0);
  EXPECT_EQ(eval::sap(std::vector<eval::PredictionRecord>{}, clip).sAP, 0.0);
}

TEST(Sap, OneFrameDelayOnFastObjectsMissesAtHalfIoU) {
  // Boxes 10 px wide moving 12 px per frame never overlap their successor.
  const auto clip = moving_clip(8, 12.0);
  OracleSystem sys(0.0, 1);
  const auto r = eval::sap(eval::simulate_stream(sys, clip), clip);
  // Frame 0 is the only hit (it repeats itself), so AP stays far below 100.
  OracleSystem perfect(0.0);
  EXPECT_LT(r.sAP50, eval::sap(eval::simulate_stream(perfect, clip), clip).sAP50);
  std::vector<data::Clip> tail{clip};
  tail[0].frames.erase(tail[0].frames.begin());
  tail[0].annotations.erase(tail[0].annotations.begin());
  std::vector<eval::PredictionRecord> shifted;
  for (std::size_t i = 0; i < tail[0].length(); ++i) {
    const double t = 1000.0 / 30.0 * i;
    shifted.push_back({i, as_detections(clip.annotations[i]), t, t, 0.0, 0});
  }
  EXPECT_EQ(eval::sap(shifted, tail[0]).sAP50, 0.0);
}

TEST(Sap, CausalMatching) {
  const auto clip = moving_clip(5, 1.0);
  std::vector<eval::PredictionRecord> late;
  for (std::size_t i = 0; i < 5; ++i) {
    const double t = 1000.0 / 30.0 * i;
    late.push_back({i, as_detections(clip.annotations[i]), t, t + 1e-6, 1e-6, 0});
  }
  // Every record shows up just after its own frame, so each frame is matched
  // against the previous frame's boxes (frame 0 against nothing).
  const auto r = eval::sap(late, clip);
  EXPECT_LT(r.sAP, 100.0);
}

TEST(Sap, MeanOfPerThresholdAndRange) {
  const auto clip = moving_clip(12, 2.0, 12.0, 12.0);
  for (double lat : {0.0, 20.0, 40.0, 70.0}) {
    OracleSystem sys(lat);
    const auto r = eval::sap(eval::simulate_stream(sys, clip), clip);
    const double m = std::accumulate(r.per_threshold.begin(), r.per_threshold.end(), 0.0) / 10.0;
    EXPECT_NEAR(r.sAP, m, 1e-9);
    EXPECT_GE(r.sAP, 0.0);
    EXPECT_LE(r.sAP, 100.0);
    EXPECT_DOUBLE_EQ(r.sAP50, r.per_threshold[0]);
    EXPECT_DOUBLE_EQ(r.sAP75, r.per_threshold[5]);
  }
}

TEST(Sap, DroppingRecordsNeverHelpsTheOracle) {
  const auto clip = moving_clip(10, 2.0, 12.0, 12.0);
  OracleSystem sys(0.0);
  const auto recs = eval::simulate_stream(sys, clip);
  const double full = eval::sap(recs, clip).sAP;
  for (std::size_t drop = 0; drop < recs.size(); ++drop) {
    auto fewer = recs;
    fewer.erase(fewer.begin() + static_cast<long>(drop));
    EXPECT_LE(eval::sap(fewer, clip).sAP, full);
  }
}

TEST(Sap, EmptyGroundTruthThrows) {
  data::Clip c;
  c.frames.emplace_back(num::Shape{1, 8, 8});
  c.annotations.emplace_back();
  EXPECT_THROW(eval::sap(std::vector<eval::PredictionRecord>{}, c), ValueError);
}

TEST(AveragePrecision, HandCases) {
  const branch::Annotation gt{num::Box{0, 0, 10, 10}, 0, 1};
  // One hit with a higher-scoring false positive: precision 1/2 at recall 1.
  std::vector<eval::FrameEval> f{{{{num::Box{50, 50, 60, 60}, 0, 0.9}, {gt.box, 0, 0.5}}, {gt}}};
  EXPECT_NEAR(*eval::average_precision(f, 0, 0.5), 50.0, 1e-9);
  // Hit first: AP 100 even with a trailing false positive.
  f[0].detections[0].score = 0.1;
  EXPECT_NEAR(*eval::average_precision(f, 0, 0.5), 100.0, 1e-9);
  // A class without ground truth has no AP.
  EXPECT_FALSE(eval::average_precision(f, 3, 0.5).has_value());
}

TEST(LatencyReport, Examples) {
  EXPECT_DOUBLE_EQ(eval::latency_report(std::vector<double>{10, 20, 30}).mean, 20.0);
  const auto c = eval::latency_report(std::vector<double>(7, 37.61));
  EXPECT_DOUBLE_EQ(c.mean, 37.61);
  EXPECT_DOUBLE_EQ(c.p50, 37.61);
  EXPECT_DOUBLE_EQ(c.p99, 37.61);
  EXPECT_DOUBLE_EQ(eval::latency_report(std::vector<double>{30, 10, 20}).mean, 20.0);
  EXPECT_DOUBLE_EQ(eval::latency_report(std::vector<double>{30, 10, 20}).p50, 20.0);
  EXPECT_THROW(eval::latency_report(std::vector<double>{}), ValueError);
}

TEST(SelectionStats, Examples) {
  const auto s = eval::selection_stats({0, 0, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(s[0], 75.0);
  EXPECT_DOUBLE_EQ(s[1], 25.0);
  EXPECT_EQ(eval::selection_stats({0, 0}, 1), std::vector<double>{100.0});
  EXPECT_THROW(eval::selection_stats({}, 2), ValueError);
  num::Rng rng(1);
  std::vector<std::size_t> sel(333);
  for (auto& v : sel) v = rng.below(3);
  const auto p = eval::selection_stats(sel, 3);
  EXPECT_NEAR(p[0] + p[1] + p[2], 100.0, 0.01);
}

TEST(SelectionStats, TableLayout) {
  std::ostringstream out;
  eval::write_selection_table(out, {{"S+L", {75, 25}, {0.02, 99.98}}});
  EXPECT_NE(out.str().find("S+L,75.00,25.00,0.02,99.98"), std::string::npos);
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(eval::spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(eval::spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  EXPECT_NEAR(eval::spearman({1, 2, 3}, {2, 1, 3}), 0.5, 1e-12);
  EXPECT_THROW(eval::spearman({1, 1, 1}, {1, 2, 3}), ValueError);
  EXPECT_THROW(eval::spearman({1}, {1}), ValueError);
  EXPECT_THROW(eval::spearman({1, 2}, {1, 2, 3}), DimensionError);
}

TEST(Spearman, MatchesBruteForceOnShortInputs) {
  num::Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(4));
      y[i] = static_cast<double>(rng.below(4));
    }
    const auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
    };
    if (constant(x) || constant(y)) continue;
    EXPECT_NEAR(eval::spearman(x, y), oracle::spearman(x, y), 1e-12);
  }
}

TEST(SmallObjects, Examples) {
  EXPECT_EQ(eval::small_object_proportion({num::Box{0, 0, 100, 50}}, 100 * 100), 0.0);
  const std::vector<num::Box> boxes{num::Box::from_xywh(0, 0, 5, 10), num::Box::from_xywh(0, 0, 10, 20),
                                    num::Box::from_xywh(0, 0, 9, 11)};
  EXPECT_NEAR(eval::small_object_proportion(boxes, 100 * 100), 2.0 / 3.0, 1e-12);
  EXPECT_THROW(eval::small_object_proportion({}, 100), ValueError);
  EXPECT_THROW(eval::small_object_proportion(boxes, 0), ValidationError);
}

TEST(CountVariance, Examples) {
  EXPECT_EQ(eval::count_variance({3, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(eval::count_variance({1, 3}), 1.0);
  EXPECT_THROW(eval::count_variance({}), ValueError);
}

TEST(Policies, ParseNames) {
  EXPECT_EQ(eval::parse_policy("dyronet").kind, eval::PolicySpec::Kind::kDyRoNet);
  EXPECT_EQ(eval::parse_policy("moe").kind, eval::PolicySpec::Kind::kMoe);
  const auto b = eval::parse_policy("branch:1");
  EXPECT_EQ(b.kind, eval::PolicySpec::Kind::kBranch);
  EXPECT_EQ(b.branch, 1u);
  EXPECT_EQ(b.name(), "branch:1");
  EXPECT_THROW(eval::parse_policy("fastest"), ValidationError);
  EXPECT_THROW(eval::parse_policy("branch:x"), ValidationError);
}

TEST(Policies, ExecutionCountsPerFrame) {
  std::vector<bank::Branch> b;
  b.push_back({branch::ToyDetector(branch::scale_preset("S"), {}, 1), {10.0, 0.0}});
  b.push_back({branch::ToyDetector(branch::scale_preset("M"), {}, 2), {20.0, 0.0}});
  bank::ModelBank bank(std::move(b), 0.5);
  router::RouterNet router(2, 1), gate(2, 2);
  data::SyntheticClipSpec spec;
  spec.length = 6;
  const data::Dataset ds{{data::gen_clip(spec, 1)}};

  eval::DyRoNetSystem dy(bank, router, 1);
  const auto r = eval::evaluate(dy, ds, 2);
  EXPECT_EQ(bank.executions()[0] + bank.executions()[1], r.records);
  EXPECT_NEAR(r.selection_percent[0] + r.selection_percent[1], 100.0, 0.01);

  bank.reset_executions();
  eval::MoeSystem moe(bank, gate, 1);
  const auto m = eval::evaluate(moe, ds, 2);
  EXPECT_EQ(bank.executions()[0], m.records);
  EXPECT_EQ(bank.executions()[1], m.records);
  EXPECT_DOUBLE_EQ(m.mean_latency_ms, 30.5);

  bank.reset_executions();
  eval::SignSystem sign(bank, 1);
  const auto s = eval::evaluate(sign, ds, 2);
  EXPECT_EQ(bank.executions()[0] + bank.executions()[1], s.records);
}

TEST(Report, JsonAndCsv) {
  eval::SAPReport r;
  r.sAP = 12.5;
  r.sAP_s = 3.0;
  r.mean_latency_ms = 30.25;
  r.selection_percent = {40, 60};
  const auto j = eval::to_json(r);
  EXPECT_EQ(j["sAP"], 12.5);
  EXPECT_TRUE(j["sAP_m"].is_null());
  std::ostringstream out;
  eval::write_report_csv(out, {{"dyronet", r}});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "policy,latency_ms,sAP,sAP50,sAP75,sAP_s,sAP_m,sAP_l");
}
