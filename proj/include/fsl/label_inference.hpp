#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "fsl/embedding.hpp"
#include "fsl/taskgen.hpp"

namespace fsl {

struct ClusterState {
  std::vector<Eigen::VectorXd> centroids;
  std::vector<double> sample_counts;  // N_v, reset to 1 at each sweep start
  std::vector<long> match_counts;     // class-assignment events this sweep
  int size() const { return static_cast<int>(centroids.size()); }
};

// Statistic fed to the pruning threshold after each sweep:
//   matches - match counts against the total number of class matches
//             (default: matching events are what the binomial split models,
//             so mean and variance are on the right scale),
//   samples - absorbed sample counts against their sweep total (samples
//             arrive in task-sized blocks, inflating the true variance well
//             past the binomial model's),
//   tasks   - sample counts against the task count (literal reading).
enum class PruneMode { samples, matches, tasks };

struct InferenceConfig {
  int v_init = 0;
  double q = 3.0;
  int max_sweeps = 50;
  std::uint64_t seed = 0;
  PruneMode prune_mode = PruneMode::matches;
};

struct TaskAssignment {
  bool discarded = false;
  std::vector<int> cluster_of_local;  // length ways when not discarded
};

struct LabelAssignment {
  std::vector<TaskAssignment> tasks;
  int num_clustered = 0;
  int num_discarded = 0;
};

struct LabelerResult {
  ClusterState state;
  LabelAssignment assignment;
  int sweeps_executed = 0;
  std::vector<int> cluster_count_trace;  // V after each sweep
};

/// Mean embedded feature of one local class over support and query together.
Eigen::VectorXd class_mean(const Task& task, int local_label,
                           const EmbeddingModel& embedding);

/// Nearest centroid by squared Euclidean distance, lowest index on ties.
int match_class(const Eigen::VectorXd& mean, const ClusterState& state);

/// Folds a batch of embedded samples into centroid v as a running weighted
/// mean and bumps its counters.
void update_centroid(ClusterState& state, int v,
                     const std::vector<Eigen::VectorXd>& batch);

/// count/V - q * sqrt(count * (1/V) * (1 - 1/V)): mean minus q standard
/// deviations of a binomial split of `count` events over V clusters.
double prune_threshold(double count, int v, double q);

/// Constrained clustering over episodes: every sweep matches each task's
/// class means to distinct centroids, folds matched samples in, then prunes
/// rarely matched centroids; stops when the cluster count is stable. A final
/// read-only pass assigns tasks against the frozen centroids.
LabelerResult learn_labeler(const std::vector<Task>& tasks,
                            const EmbeddingModel& embedding,
                            const InferenceConfig& cfg);

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Eigen::VectorXd> centroids;
  std::vector<double> objective_trace;  // within-cluster sum of squares
};

/// Lloyd's algorithm seeded with k distinct data points.
KMeansResult kmeans_baseline(const std::vector<Eigen::VectorXd>& points, int k,
                             int iters, std::uint64_t seed);

/// Fraction of (cluster, truth) pairs whose cluster majority truth (lowest
/// label on ties) equals their own truth.
double clustering_accuracy(
    const std::vector<std::pair<int, int>>& assigned_vs_truth);

/// Flattens the non-discarded tasks with inferred cluster ids as global
/// labels, relabeled onto a dense range.
FlatDataset label_dataset(const std::vector<Task>& tasks,
                          const LabelAssignment& assignment);

/// Connected components of the cluster co-occurrence graph: clusters are
/// joined when they appear in the same task. Components and their members
/// come back sorted.
std::vector<std::vector<int>> infer_domains(const std::vector<Task>& tasks,
                                            const LabelAssignment& assignment);

}  // namespace fsl
