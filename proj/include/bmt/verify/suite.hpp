#pragma once

// The verification suite behind `bmt verify` and the acceptance tests:
// finite-difference gradient checks for every layer and the joint network,
// identity-stitch independence, and the feature and metric oracles.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bmt/grad_check.hpp"
#include "bmt/rng.hpp"

namespace bmt::verify {

struct CheckResult {
  std::string name;
  double measured = 0.0;   // max relative error, or mismatch count
  double threshold = 0.0;  // pass when measured < threshold
  bool passed = false;
  std::string detail;
};

/// One randomly configured gradient check. `fault_scale` multiplies one
/// analytic gradient tensor to emulate a backward bug (1.0 = no fault).
struct GradCase {
  std::string name;
  double threshold;
  std::function<GradCheckResult(Rng&, double fault_scale)> run;
};

/// fc, batchnorm, dropout, gru_unrolled, bigru_encoder, cross_stitch,
/// softmax_ce, mse, joint_multitask, joint_concat_mlp.
const std::vector<GradCase>& gradient_cases();

struct SuiteOptions {
  std::uint64_t seed = 20190401;
  int configs_per_case = 10;
  double fault_scale = 1.0;  // applied to the fc case only
};

std::vector<CheckResult> gradient_checks(const SuiteOptions& opt);

/// Identity-initialised stitches, no training: the multitask network's two
/// outputs must equal the isolated branch networks bit for bit, in infer
/// mode and in train mode with shared dropout streams.
CheckResult identity_stitch_check(int inputs, std::uint64_t seed);

/// TF1-TF12 and tokens on synthetic tweets against the reference oracles,
/// with and without entity metadata.
CheckResult feature_oracle_check(std::size_t tweets, std::uint64_t seed);

/// compute_metrics against the brute-force recount on random pairs.
CheckResult metrics_recount_check(std::size_t pairs, std::uint64_t seed);

std::vector<CheckResult> run_all(const SuiteOptions& opt);

}  // namespace bmt::verify
