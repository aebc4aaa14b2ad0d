#pragma once

#include <cstdint>
#include <vector>

#include "fsl/embedding.hpp"
#include "fsl/learners.hpp"
#include "fsl/taskgen.hpp"

namespace fsl {

struct RiskEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int num_draws = 0;
};

/// Monte-Carlo estimate of the expected query cross-entropy when each task
/// uses only the classifier rows named by its own classes (subset softmax).
/// One draw is one fresh episode, scored over its query set. W must carry a
/// row for every class of md.
RiskEstimate estimate_gls_risk(const MetaDistribution& md,
                               const GlobalClassifier& w,
                               const EmbeddingModel& embedding, int draws,
                               std::uint64_t seed);

/// Same draw scheme but scored with the softmax over all classes, i.e. the
/// loss the flattened pre-training objective estimates.
RiskEstimate estimate_pretrain_risk(const MetaDistribution& md,
                                    const GlobalClassifier& w,
                                    const EmbeddingModel& embedding, int draws,
                                    std::uint64_t seed);

struct RiskOrderingReport {
  RiskEstimate gls;
  RiskEstimate pretrain;
  bool holds = false;              // subset risk <= full risk + 3 combined SE
  long long pointwise_violations = 0;  // paired query points with subset > full
  long long paired_samples = 0;
};

/// Shares one stream of episodes between both estimators so the subset/full
/// losses are paired pointwise on every query sample.
RiskOrderingReport verify_risk_ordering(const MetaDistribution& md,
                               const GlobalClassifier& w,
                               const EmbeddingModel& embedding, int draws,
                               std::uint64_t seed);

struct RateStudyConfig {
  OptimizerConfig opt;     // shared by both trainers
  double reg = 1e-4;
  int embed_dim = 0;       // 0 = input dimension
  int eval_draws = 2000;
  bool add_bias = true;
  std::uint64_t seed = 0;
};

struct RateStudyRow {
  int num_tasks = 0;        // T
  long long num_samples = 0;  // T * task size
  RiskEstimate gls_risk;      // episodic subset-softmax training
  RiskEstimate pretrain_risk;  // flattened full-softmax training
  int seeds_averaged = 0;
};

/// For each T: train a subset-softmax model episodically and a full-softmax
/// model on the flattened equivalent, then score both on fresh draws from the
/// same stream. Values are averaged over `seeds` replicates; std_error is the
/// spread across replicates.
std::vector<RateStudyRow> rate_study(const MetaDistribution& md,
                                     const std::vector<int>& t_grid, int seeds,
                                     const RateStudyConfig& cfg);

struct MetaTestReport {
  double mean_accuracy = 0.0;
  double ci95_half_width = 0.0;  // 1.96 * sd / sqrt(T)
  int num_tasks = 0;
  std::vector<double> per_task;
};

/// Mean query accuracy over a task list with a normal-approximation interval.
MetaTestReport meta_test(const std::vector<Task>& tasks,
                         const EmbeddingModel& embedding, TaskBuilder builder,
                         const EvalConfig& cfg,
                         const GlobalClassifier* gls = nullptr, int jobs = 1);

}  // namespace fsl
