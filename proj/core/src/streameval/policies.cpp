#include "dyronet/streameval/policies.hpp"

#include "dyronet/error.hpp"

namespace dyronet::eval {

namespace {

router::FrameDiff diff_at(const data::Clip& clip, std::size_t t, std::size_t pooled) {
  return router::frame_diff(clip.frames[t], clip.frames[t == 0 ? 0 : t - 1], pooled);
}

std::vector<branch::Detection> detect(const bank::ModelBank& bank, const branch::HeadLogits& logits,
                                      const DetectParams& p) {
  return branch::decode(logits, bank.geometry(), p.conf_thresh, p.nms_iou);
}

}  // namespace

DyRoNetSystem::DyRoNetSystem(bank::ModelBank& bank, const router::RouterNet& router,
                             std::uint64_t seed, DetectParams params)
    : bank_(bank), router_(router), rng_(seed), params_(params) {
  if (router.num_branches() != bank.size()) throw DimensionError("router width differs from bank size");
}

FrameOutput DyRoNetSystem::process(const data::Clip& clip, std::size_t frame) {
  const auto decision = router::route(diff_at(clip, frame, router_.config().input_size), router_);
  bank::DispatchResult r = bank::dispatch(decision, bank_, clip.frames, frame, rng_);
  return {detect(bank_, r.logits, params_), r.latency_ms, r.sigma};
}

RandomSystem::RandomSystem(bank::ModelBank& bank, std::uint64_t seed, DetectParams params)
    : bank_(bank), selector_(seed), rng_(seed ^ 0x5EEDULL), params_(params) {}

FrameOutput RandomSystem::process(const data::Clip& clip, std::size_t frame) {
  const std::size_t sigma = selector_.select(bank_);
  double ms = 0.0;
  const auto logits = bank_.run(sigma, clip.frames, frame, rng_, &ms);
  return {detect(bank_, logits, params_), ms, sigma};
}

SignSystem::SignSystem(bank::ModelBank& bank, std::uint64_t seed, DetectParams params)
    : bank_(bank), rng_(seed), params_(params) {}

FrameOutput SignSystem::process(const data::Clip& clip, std::size_t frame) {
  const std::size_t sigma = router::mean_diff_criterion(diff_at(clip, frame, 1), bank_.size());
  double ms = 0.0;
  const auto logits = bank_.run(sigma, clip.frames, frame, rng_, &ms);
  return {detect(bank_, logits, params_), ms, sigma};
}

MoeSystem::MoeSystem(bank::ModelBank& bank, const router::RouterNet& gate, std::uint64_t seed,
                     DetectParams params)
    : bank_(bank), gate_(gate), rng_(seed), params_(params) {
  if (gate.num_branches() != bank.size()) throw DimensionError("gate width differs from bank size");
}

FrameOutput MoeSystem::process(const data::Clip& clip, std::size_t frame) {
  const auto diff = diff_at(clip, frame, gate_.config().input_size);
  bank::MoeResult r = bank::moe_combine(bank_, clip.frames, frame, gate_, diff, rng_);
  return {detect(bank_, r.logits, params_), r.latency_ms, num::argmax(r.weights)};
}

FixedBranchSystem::FixedBranchSystem(bank::ModelBank& bank, std::size_t index, std::uint64_t seed,
                                     DetectParams params)
    : bank_(bank), index_(index), rng_(seed), params_(params) {
  if (index >= bank.size()) throw RangeError("branch " + std::to_string(index) + " not in bank");
}

FrameOutput FixedBranchSystem::process(const data::Clip& clip, std::size_t frame) {
  double ms = 0.0;
  const auto logits = bank_.run(index_, clip.frames, frame, rng_, &ms);
  return {detect(bank_, logits, params_), ms, index_};
}

std::string PolicySpec::name() const {
  switch (kind) {
    case Kind::kDyRoNet:
      return "dyronet";
    case Kind::kRandom:
      return "random";
    case Kind::kMoe:
      return "moe";
    case Kind::kSign:
      return "sign";
    case Kind::kBranch:
      return "branch:" + std::to_string(branch);
  }
  return "dyronet";
}

PolicySpec parse_policy(const std::string& text) {
  PolicySpec p;
  if (text == "dyronet") return p;
  if (text == "random") {
    p.kind = PolicySpec::Kind::kRandom;
    return p;
  }
  if (text == "moe") {
    p.kind = PolicySpec::Kind::kMoe;
    return p;
  }
  if (text == "sign") {
    p.kind = PolicySpec::Kind::kSign;
    return p;
  }
  const std::string prefix = "branch:";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size()) {
    const std::string digits = text.substr(prefix.size());
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.size() < 10) {
      p.kind = PolicySpec::Kind::kBranch;
      p.branch = std::stoul(digits);
      return p;
    }
  }
  throw ValidationError("unknown policy '" + text + "'");
}

std::unique_ptr<StreamingSystem> make_system(const PolicySpec& policy, bank::ModelBank& bank,
                                             const router::RouterNet& router,
                                             const router::RouterNet* gate, std::uint64_t seed,
                                             DetectParams params) {
  switch (policy.kind) {
    case PolicySpec::Kind::kDyRoNet:
      return std::make_unique<DyRoNetSystem>(bank, router, seed, params);
    case PolicySpec::Kind::kRandom:
      return std::make_unique<RandomSystem>(bank, seed, params);
    case PolicySpec::Kind::kSign:
      return std::make_unique<SignSystem>(bank, seed, params);
    case PolicySpec::Kind::kMoe:
      if (!gate) throw ValidationError("the moe policy needs a trained gate in the bank manifest");
      return std::make_unique<MoeSystem>(bank, *gate, seed, params);
    case PolicySpec::Kind::kBranch:
      return std::make_unique<FixedBranchSystem>(bank, policy.branch, seed, params);
  }
  throw ValidationError("unknown policy");
}

SAPReport evaluate(StreamingSystem& system, const data::Dataset& ds, std::size_t num_branches, double fps) {
  std::vector<ClipRecords> all;
  for (const data::Clip& clip : ds.clips) all.push_back({&clip, simulate_stream(system, clip, fps)});
  return sap(all, num_branches);
}

}  // namespace dyronet::eval
