#include "fsl/label_inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace fsl {

namespace {

struct UnionFind {
  std::vector<int> parent, rank_;
  explicit UnionFind(int n) : parent(n), rank_(n, 0) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }
};

// Per-task cache: class sums and counts over support plus query, so sweeps
// reuse one embedding pass.
struct TaskClassStats {
  std::vector<Eigen::VectorXd> sums;
  std::vector<int> counts;
  std::vector<Eigen::VectorXd> means;
};

TaskClassStats class_stats(const Task& task, const EmbeddingModel& embedding) {
  TaskClassStats st;
  int k = task.ways;
  int p = embedding.out_dim();
  st.sums.assign(k, Eigen::VectorXd::Zero(p));
  st.counts.assign(k, 0);
  auto fold = [&](const std::vector<TaskRecord>& records) {
    for (const TaskRecord& r : records) {
      if (r.label < 0 || r.label >= k)
        throw std::invalid_argument("learn_labeler: local label out of range");
      st.sums[r.label] += embedding.embed(r.x);
      ++st.counts[r.label];
    }
  };
  fold(task.support);
  fold(task.query);
  st.means.resize(k);
  for (int j = 0; j < k; ++j) {
    if (st.counts[j] == 0)
      throw std::invalid_argument("learn_labeler: task has an empty local class");
    st.means[j] = st.sums[j] / st.counts[j];
  }
  return st;
}

bool all_distinct(const std::vector<int>& v) {
  std::unordered_set<int> seen;
  for (int x : v)
    if (!seen.insert(x).second) return false;
  return true;
}

}  // namespace

Eigen::VectorXd class_mean(const Task& task, int local_label,
                           const EmbeddingModel& embedding) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(embedding.out_dim());
  int count = 0;
  auto fold = [&](const std::vector<TaskRecord>& records) {
    for (const TaskRecord& r : records)
      if (r.label == local_label) {
        sum += embedding.embed(r.x);
        ++count;
      }
  };
  fold(task.support);
  fold(task.query);
  if (count == 0)
    throw std::invalid_argument("class_mean: no samples with local label " +
                                std::to_string(local_label));
  return sum / count;
}

int match_class(const Eigen::VectorXd& mean, const ClusterState& state) {
  if (state.centroids.empty()) throw std::invalid_argument("match_class: no centroids");
  int best = 0;
  double best_d = (mean - state.centroids[0]).squaredNorm();
  for (int v = 1; v < state.size(); ++v) {
    double d = (mean - state.centroids[v]).squaredNorm();
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = v;
    }
  }
  return best;
}

void update_centroid(ClusterState& state, int v,
                     const std::vector<Eigen::VectorXd>& batch) {
  if (v < 0 || v >= state.size()) throw std::invalid_argument("update_centroid: bad cluster index");
  if (batch.empty()) throw std::invalid_argument("update_centroid: empty batch");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(state.centroids[v].size());
  for (const auto& e : batch) sum += e;
  double n = static_cast<double>(batch.size());
  state.centroids[v] = (state.sample_counts[v] * state.centroids[v] + sum) /
                       (state.sample_counts[v] + n);
  state.sample_counts[v] += n;
  state.match_counts[v] += 1;
}

double prune_threshold(double count, int v, double q) {
  if (v < 1) throw std::invalid_argument("prune_threshold: cluster count must be positive");
  double p = 1.0 / v;
  return count * p - q * std::sqrt(count * p * (1.0 - p));
}

LabelerResult learn_labeler(const std::vector<Task>& tasks,
                            const EmbeddingModel& embedding,
                            const InferenceConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("learn_labeler: no tasks");
  int k = tasks.front().ways;
  for (const Task& t : tasks)
    if (t.ways != k)
      throw std::invalid_argument("learn_labeler: tasks disagree on the number of ways");
  if (cfg.v_init < k)
    throw std::invalid_argument("learn_labeler: v_init must be at least the task way count");
  if (cfg.max_sweeps < 1) throw std::invalid_argument("learn_labeler: max_sweeps must be positive");

  std::vector<TaskClassStats> stats;
  stats.reserve(tasks.size());
  for (const Task& t : tasks) stats.push_back(class_stats(t, embedding));

  // Seed centroids with the class means of ceil(v_init / k) distinct tasks.
  int init_tasks = (cfg.v_init + k - 1) / k;
  if (init_tasks > static_cast<int>(tasks.size()))
    throw std::invalid_argument("learn_labeler: not enough tasks to seed v_init clusters");
  std::vector<int> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(cfg.seed, 0x696e6974);
  std::shuffle(order.begin(), order.end(), rng);

  LabelerResult result;
  ClusterState& state = result.state;
  for (int i = 0; i < init_tasks && state.size() < cfg.v_init; ++i)
    for (int j = 0; j < k && state.size() < cfg.v_init; ++j)
      state.centroids.push_back(stats[order[i]].means[j]);
  state.sample_counts.assign(state.size(), 1.0);
  state.match_counts.assign(state.size(), 0);

  // Sweep in a seeded shuffled order. Running means depend on arrival order,
  // and structured task lists (e.g. no-replacement partitions interleave
  // classes in waves) would otherwise lock every centroid at the start of a
  // sweep, leaving no window for a centroid to be recaptured by an
  // uncovered class.
  std::vector<int> sweep_order(tasks.size());
  std::iota(sweep_order.begin(), sweep_order.end(), 0);
  Rng sweep_rng = make_rng(cfg.seed, 0x73776565);
  std::shuffle(sweep_order.begin(), sweep_order.end(), sweep_rng);

  for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    int v_before = state.size();
    std::fill(state.sample_counts.begin(), state.sample_counts.end(), 1.0);
    std::fill(state.match_counts.begin(), state.match_counts.end(), 0L);
    double samples_absorbed = 0.0;
    long matches_total = 0;

    for (int ti : sweep_order) {
      const TaskClassStats& st = stats[ti];
      std::vector<int> matched(k);
      for (int j = 0; j < k; ++j) matched[j] = match_class(st.means[j], state);
      // A task only counts when its classes land on k distinct clusters;
      // otherwise it is skipped this sweep and retried after updates.
      if (!all_distinct(matched)) continue;
      for (int j = 0; j < k; ++j) {
        int v = matched[j];
        state.centroids[v] = (state.sample_counts[v] * state.centroids[v] + st.sums[j]) /
                             (state.sample_counts[v] + st.counts[j]);
        state.sample_counts[v] += st.counts[j];
        state.match_counts[v] += 1;
        samples_absorbed += st.counts[j];
        ++matches_total;
      }
    }
    ++result.sweeps_executed;

    double stat_total = 0.0;
    switch (cfg.prune_mode) {
      case PruneMode::samples: stat_total = samples_absorbed; break;
      case PruneMode::matches: stat_total = static_cast<double>(matches_total); break;
      case PruneMode::tasks: stat_total = static_cast<double>(tasks.size()); break;
    }
    double threshold = prune_threshold(stat_total, state.size(), cfg.q);
    ClusterState kept;
    for (int v = 0; v < state.size(); ++v) {
      double stat = (cfg.prune_mode == PruneMode::matches)
                        ? static_cast<double>(state.match_counts[v])
                        : state.sample_counts[v];
      if (stat >= threshold) {
        kept.centroids.push_back(state.centroids[v]);
        kept.sample_counts.push_back(state.sample_counts[v]);
        kept.match_counts.push_back(state.match_counts[v]);
      }
    }
    state = std::move(kept);
    result.cluster_count_trace.push_back(state.size());
    if (state.size() == v_before) break;
  }

  // Final read-only pass against the frozen centroids.
  result.assignment.tasks.reserve(tasks.size());
  for (const TaskClassStats& st : stats) {
    std::vector<int> matched(k);
    for (int j = 0; j < k; ++j) matched[j] = match_class(st.means[j], state);
    TaskAssignment ta;
    if (all_distinct(matched)) {
      ta.cluster_of_local = std::move(matched);
      ++result.assignment.num_clustered;
    } else {
      ta.discarded = true;
      ++result.assignment.num_discarded;
    }
    result.assignment.tasks.push_back(std::move(ta));
  }
  return result;
}

KMeansResult kmeans_baseline(const std::vector<Eigen::VectorXd>& points, int k,
                             int iters, std::uint64_t seed) {
  if (points.empty()) throw std::invalid_argument("kmeans_baseline: no points");
  if (k < 1 || k > static_cast<int>(points.size()))
    throw std::invalid_argument("kmeans_baseline: cluster count out of range");
  KMeansResult result;
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x6b6d);
  std::shuffle(order.begin(), order.end(), rng);
  result.centroids.reserve(k);
  for (int v = 0; v < k; ++v) result.centroids.push_back(points[order[v]]);

  result.assignment.assign(points.size(), -1);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = (points[i] - result.centroids[0]).squaredNorm();
      for (int v = 1; v < k; ++v) {
        double d = (points[i] - result.centroids[v]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = v;
        }
      }
      wcss += best_d;
      if (result.assignment[i] != best) {
        result.assignment[i] = best;
        changed = true;
      }
    }
    result.objective_trace.push_back(wcss);
    if (!changed) break;
    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(points.front().size()));
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[result.assignment[i]] += points[i];
      ++counts[result.assignment[i]];
    }
    for (int v = 0; v < k; ++v)
      if (counts[v] > 0) result.centroids[v] = sums[v] / counts[v];
    // An empty cluster keeps its previous centroid.
  }
  return result;
}

double clustering_accuracy(
    const std::vector<std::pair<int, int>>& assigned_vs_truth) {
  if (assigned_vs_truth.empty())
    throw std::invalid_argument("clustering_accuracy: empty assignment");
  std::map<int, std::map<int, int>> counts;  // cluster -> truth -> count
  for (const auto& [cluster, truth] : assigned_vs_truth) ++counts[cluster][truth];
  std::map<int, int> majority;
  for (const auto& [cluster, hist] : counts) {
    int best_label = hist.begin()->first;
    int best_count = hist.begin()->second;
    for (const auto& [label, count] : hist)
      if (count > best_count) {  // ties keep the lowest label, map order does that
        best_count = count;
        best_label = label;
      }
    majority[cluster] = best_label;
  }
  int correct = 0;
  for (const auto& [cluster, truth] : assigned_vs_truth)
    if (majority.at(cluster) == truth) ++correct;
  return static_cast<double>(correct) / static_cast<double>(assigned_vs_truth.size());
}

FlatDataset label_dataset(const std::vector<Task>& tasks,
                          const LabelAssignment& assignment) {
  if (tasks.size() != assignment.tasks.size())
    throw std::invalid_argument("label_dataset: assignment does not match the task list");
  FlatDataset out;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const TaskAssignment& ta = assignment.tasks[t];
    if (ta.discarded) continue;
    auto append = [&](const std::vector<TaskRecord>& records) {
      for (const TaskRecord& r : records) {
        Sample s;
        s.id = r.sample_id;
        s.features = r.x;
        s.global_label = ta.cluster_of_local.at(r.label);
        out.samples.push_back(std::move(s));
      }
    };
    append(tasks[t].support);
    append(tasks[t].query);
  }
  if (out.samples.empty())
    throw std::invalid_argument("label_dataset: every task was discarded, nothing to label");
  out.relabel_dense();
  return out;
}

std::vector<std::vector<int>> infer_domains(const std::vector<Task>& tasks,
                                            const LabelAssignment& assignment) {
  if (tasks.size() != assignment.tasks.size())
    throw std::invalid_argument("infer_domains: assignment does not match the task list");
  std::map<int, int> index_of;  // cluster id -> union-find slot
  for (const TaskAssignment& ta : assignment.tasks) {
    if (ta.discarded) continue;
    for (int v : ta.cluster_of_local) index_of.emplace(v, 0);
  }
  int n = 0;
  for (auto& [cluster, idx] : index_of) idx = n++;
  UnionFind uf(n);
  for (const TaskAssignment& ta : assignment.tasks) {
    if (ta.discarded) continue;
    for (std::size_t j = 1; j < ta.cluster_of_local.size(); ++j)
      uf.unite(index_of.at(ta.cluster_of_local[0]), index_of.at(ta.cluster_of_local[j]));
  }
  std::map<int, std::vector<int>> groups;  // root slot -> cluster ids
  for (const auto& [cluster, idx] : index_of) groups[uf.find(idx)].push_back(cluster);
  std::vector<std::vector<int>> components;
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    components.push_back(std::move(members));
  }
  std::sort(components.begin(), components.end());
  return components;
}

}  // namespace fsl
