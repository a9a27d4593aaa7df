// SPDX-License-Identifier: Apache-2.0
//
// The acceptance criteria, shared by the acceptance test binary and
// `lmdm verify`. Each criterion returns a pass/fail result with a one-line
// detail; none of them throws on a failed check.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lmdm/arcforcing.hpp"
#include "lmdm/data.hpp"
#include "lmdm/dit.hpp"
#include "lmdm/flow.hpp"
#include "lmdm/train.hpp"

namespace lmdm::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
};

/// "PASS  3 nfe-accounting  (0.4 s)  detail"
std::string format_result(const CriterionResult& r);

struct AcceptanceOptions {
  /// Seeds for the seed-swept criteria (at least 20 for the full suite).
  int seeds = 20;
  /// Skips the criteria that need trained models (7, 8, 10).
  bool fast = false;
  std::uint64_t seed = 7;
  /// Progress lines (may be empty).
  std::function<void(const std::string&)> log;
};

/// Data, base model and post-trained model shared by criteria 7, 8 and 10.
/// Built on first use.
class ToyRun {
 public:
  explicit ToyRun(const AcceptanceOptions& opts);

  const SyntheticProcess& process() const { return process_; }
  const std::vector<CorpusItem>& corpus() const { return corpus_; }
  const ModelConfig& model_config() const { return mc_; }
  const TrainConfig& train_config() const { return tc_; }
  ArcConfig arc_config() const;

  /// Trains the base model with the default schedule (once).
  const DiT& base();
  double initial_loss();
  double final_loss();

  /// Post-trains a copy of the base model (once).
  const DiT& post();
  double post_seconds();
  const std::vector<ArcLosses>& arc_log();

 private:
  void log(const std::string& line) const;
  AcceptanceOptions opts_;
  SyntheticProcess process_;
  std::vector<CorpusItem> corpus_;
  ModelConfig mc_;
  TrainConfig tc_;
  std::unique_ptr<DiT> base_, post_;
  double initial_loss_ = 0.0, final_loss_ = 0.0, post_seconds_ = 0.0;
  std::vector<ArcLosses> arc_log_;
};

/// Mean drift over blocks [first, last) and drift slope, averaged over
/// `seeds` primed 12-block EncDec rollouts.
struct DriftSummary {
  double late_mean = 0.0;
  double slope = 0.0;
  std::vector<double> per_block;
};
DriftSummary drift_summary(const DiT& model, const SamplerConfig& sampler, const SyntheticProcess& process, int seeds,
                           int blocks = 12, int first = 5, int last = 12, std::uint64_t seed = 0);

/// The default post-training and evaluation samplers.
SamplerConfig pre_sampler();
SamplerConfig post_sampler();

CriterionResult criterion_context_invariance(const AcceptanceOptions& opts);
CriterionResult criterion_cache_equivalence(const AcceptanceOptions& opts);
CriterionResult criterion_nfe_accounting(const AcceptanceOptions& opts);
CriterionResult criterion_cost_ordering(const AcceptanceOptions& opts);
CriterionResult criterion_gradients(const AcceptanceOptions& opts);
CriterionResult criterion_sampler_identities(const AcceptanceOptions& opts);
CriterionResult criterion_toy_training(const AcceptanceOptions& opts, ToyRun& run);
CriterionResult criterion_drift_reduction(const AcceptanceOptions& opts, ToyRun& run);
CriterionResult criterion_arc_anchors(const AcceptanceOptions& opts);
CriterionResult criterion_transition(const AcceptanceOptions& opts, ToyRun& run);

/// Runs the selected criteria in order (all when `ids` is empty).
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts, const std::vector<int>& ids = {});

}  // namespace lmdm::verify
