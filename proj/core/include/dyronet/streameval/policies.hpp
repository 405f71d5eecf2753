#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "dyronet/bank/bank.hpp"
#include "dyronet/router/router.hpp"
#include "dyronet/streameval/streameval.hpp"

namespace dyronet::eval {

struct DetectParams {
  double conf_thresh = 0.5;
  double nms_iou = 0.5;
};

// Router picks one branch per frame; latency = branch + router overhead.
class DyRoNetSystem : public StreamingSystem {
 public:
  DyRoNetSystem(bank::ModelBank& bank, const router::RouterNet& router, std::uint64_t seed,
                DetectParams params = {});
  FrameOutput process(const data::Clip& clip, std::size_t frame) override;

 private:
  bank::ModelBank& bank_;
  const router::RouterNet& router_;
  num::Rng rng_;
  DetectParams params_;
};

// Uniformly random branch per frame.
class RandomSystem : public StreamingSystem {
 public:
  RandomSystem(bank::ModelBank& bank, std::uint64_t seed, DetectParams params = {});
  FrameOutput process(const data::Clip& clip, std::size_t frame) override;

 private:
  bank::ModelBank& bank_;
  bank::RandomSelector selector_;
  num::Rng rng_;
  DetectParams params_;
};

// Sign of the mean frame difference: positive -> largest branch, else the
// smallest.
class SignSystem : public StreamingSystem {
 public:
  SignSystem(bank::ModelBank& bank, std::uint64_t seed, DetectParams params = {});
  FrameOutput process(const data::Clip& clip, std::size_t frame) override;

 private:
  bank::ModelBank& bank_;
  num::Rng rng_;
  DetectParams params_;
};

// All branches, mixed by a gate network.
class MoeSystem : public StreamingSystem {
 public:
  MoeSystem(bank::ModelBank& bank, const router::RouterNet& gate, std::uint64_t seed,
            DetectParams params = {});
  FrameOutput process(const data::Clip& clip, std::size_t frame) override;

 private:
  bank::ModelBank& bank_;
  const router::RouterNet& gate_;
  num::Rng rng_;
  DetectParams params_;
};

// A single branch, no routing cost.
class FixedBranchSystem : public StreamingSystem {
 public:
  FixedBranchSystem(bank::ModelBank& bank, std::size_t index, std::uint64_t seed, DetectParams params = {});
  FrameOutput process(const data::Clip& clip, std::size_t frame) override;

 private:
  bank::ModelBank& bank_;
  std::size_t index_;
  num::Rng rng_;
  DetectParams params_;
};

struct PolicySpec {
  enum class Kind { kDyRoNet, kRandom, kMoe, kSign, kBranch } kind = Kind::kDyRoNet;
  std::size_t branch = 0;

  std::string name() const;
};

// "dyronet", "random", "moe", "sign" or "branch:<i>". Throws
// ValidationError otherwise.
PolicySpec parse_policy(const std::string& text);

// `gate` is required for the moe policy.
std::unique_ptr<StreamingSystem> make_system(const PolicySpec& policy, bank::ModelBank& bank,
                                             const router::RouterNet& router,
                                             const router::RouterNet* gate, std::uint64_t seed,
                                             DetectParams params = {});

// Streams every clip through the system and scores them jointly.
SAPReport evaluate(StreamingSystem& system, const data::Dataset& ds, std::size_t num_branches,
                   double fps = 30.0);

}  // namespace dyronet::eval
