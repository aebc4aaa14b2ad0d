#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "fsl/rng.hpp"

namespace fsl {

struct Sample {
  std::int64_t id = 0;
  Eigen::VectorXd features;
  std::optional<int> global_label;
  std::optional<int> domain_id;
};

/// Flat multi-class dataset: the merged view of an episode collection.
struct FlatDataset {
  std::vector<Sample> samples;
  int c_effective = 0;

  bool has_labels() const;
  int dim() const;
  /// Remaps global labels onto 0..C-1 in sorted order and returns, for each
  /// dense id, the label it replaced.
  std::vector<int> relabel_dense();
};

/// Generative description of an episode family: k-way tasks over C Gaussian
/// classes with a shared noise scale.
struct MetaDistribution {
  int num_classes = 0;                       // C
  std::vector<Eigen::VectorXd> class_means;  // one per class, pairwise distinct
  double noise_std = 1.0;
  int ways = 0;        // k, classes per task
  int shots = 0;       // n, support samples per class
  int query_size = 0;  // m, total query draws per task
  std::optional<std::vector<int>> domain_of_class;
  std::uint64_t seed = 0;

  int dim() const;
  int task_size() const { return ways * shots + query_size; }
  void validate() const;
};

/// Class means are random unit vectors scaled by `separation`; a negative
/// separation selects the default 4 * noise_std.
MetaDistribution make_planted_md(int num_classes, int dim, int ways, int shots,
                                 int query_size, double noise_std,
                                 double separation, std::uint64_t seed,
                                 int num_domains = 1);

struct TaskRecord {
  std::int64_t sample_id = 0;
  Eigen::VectorXd x;
  int label = 0;  // local label in [0, ways)
};

/// One episode. local_to_global is hidden from learners; it exists for
/// scoring and for row selection from a global classifier.
struct Task {
  int task_id = 0;
  int ways = 0;
  std::vector<TaskRecord> support;
  std::vector<TaskRecord> query;
  std::optional<std::vector<int>> local_to_global;
};

/// Draws one episode: k distinct classes (from a single domain when domains
/// are declared), a random local relabeling, n Gaussian support draws per
/// class and m query draws with uniform local labels.
Task sample_task(const MetaDistribution& md, Rng& rng);

/// T independent episodes with task ids 0..T-1 and globally unique sample ids.
std::vector<Task> sample_meta_training_set(const MetaDistribution& md,
                                           int num_tasks, Rng& rng);

/// Splits a labeled dataset into sample-disjoint episodes without
/// replacement. Classes are consumed greedily (largest remaining pool first,
/// ties broken by shuffle) and stop appearing once they cannot fill a support
/// block plus one query; the split ends when no further task can be formed.
std::vector<Task> gfsl_partition(const FlatDataset& ds, int ways, int shots,
                                 int query_size, Rng& rng);

/// Concatenates every record, support before query, preserving task order.
/// Global labels are attached from local_to_global where available.
FlatDataset flatten(const std::vector<Task>& tasks, bool dedup_ids = false);

/// Balanced sample pool drawn from the class conditionals of `md`.
FlatDataset make_flat_dataset(const MetaDistribution& md, int per_class,
                              Rng& rng);

}  // namespace fsl
