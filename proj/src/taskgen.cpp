#include "fsl/taskgen.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace fsl {

namespace {

Eigen::VectorXd gaussian_vector(int dim, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
  return v;
}

// Uniform removal from an index pool; order within the pool is scratch state.
int pop_uniform(std::vector<int>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::size_t i = pick(rng);
  std::swap(pool[i], pool.back());
  int out = pool.back();
  pool.pop_back();
  return out;
}

}  // namespace

bool FlatDataset::has_labels() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(),
                     [](const Sample& s) { return s.global_label.has_value(); });
}

int FlatDataset::dim() const {
  return samples.empty() ? 0 : static_cast<int>(samples.front().features.size());
}

std::vector<int> FlatDataset::relabel_dense() {
  std::map<int, int> dense;  // ordered, so dense ids follow sorted labels
  for (const Sample& s : samples) {
    if (!s.global_label) throw std::invalid_argument("relabel_dense: sample without a global label");
    dense.emplace(*s.global_label, 0);
  }
  std::vector<int> original;
  original.reserve(dense.size());
  for (auto& [label, id] : dense) {
    id = static_cast<int>(original.size());
    original.push_back(label);
  }
  for (Sample& s : samples) s.global_label = dense.at(*s.global_label);
  c_effective = static_cast<int>(original.size());
  return original;
}

int MetaDistribution::dim() const {
  return class_means.empty() ? 0 : static_cast<int>(class_means.front().size());
}

void MetaDistribution::validate() const {
  if (ways < 2) throw std::invalid_argument("meta distribution: ways must be at least 2");
  if (num_classes < ways) throw std::invalid_argument("meta distribution: fewer classes than ways");
  if (shots < 1) throw std::invalid_argument("meta distribution: shots must be positive");
  if (query_size < 1) throw std::invalid_argument("meta distribution: query size must be positive");
  if (noise_std < 0) throw std::invalid_argument("meta distribution: negative noise scale");
  if (static_cast<int>(class_means.size()) != num_classes)
    throw std::invalid_argument("meta distribution: class mean count does not match num_classes");
  int d = dim();
  for (const auto& m : class_means)
    if (static_cast<int>(m.size()) != d)
      throw std::invalid_argument("meta distribution: inconsistent class mean dimensions");
  for (std::size_t a = 0; a < class_means.size(); ++a)
    for (std::size_t b = a + 1; b < class_means.size(); ++b)
      if (class_means[a] == class_means[b])
        throw std::invalid_argument("meta distribution: duplicate class means");
  if (domain_of_class && static_cast<int>(domain_of_class->size()) != num_classes)
    throw std::invalid_argument("meta distribution: domain map size does not match num_classes");
}

MetaDistribution make_planted_md(int num_classes, int dim, int ways, int shots,
                                 int query_size, double noise_std,
                                 double separation, std::uint64_t seed,
                                 int num_domains) {
  if (separation < 0) separation = 4.0 * noise_std;
  MetaDistribution md;
  md.num_classes = num_classes;
  md.noise_std = noise_std;
  md.ways = ways;
  md.shots = shots;
  md.query_size = query_size;
  md.seed = seed;
  Rng rng = make_rng(seed, 0x6d64);
  md.class_means.reserve(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    Eigen::VectorXd v = gaussian_vector(dim, rng);
    while (v.norm() == 0.0) v = gaussian_vector(dim, rng);
    md.class_means.push_back(separation * (v / v.norm()));
  }
  if (num_domains > 1) {
    std::vector<int> dom(num_classes);
    for (int c = 0; c < num_classes; ++c)
      dom[c] = static_cast<int>(static_cast<long long>(c) * num_domains / num_classes);
    md.domain_of_class = std::move(dom);
  }
  md.validate();
  return md;
}

Task sample_task(const MetaDistribution& md, Rng& rng) {
  md.validate();
  std::vector<int> chosen;
  if (md.domain_of_class) {
    std::map<int, std::vector<int>> by_domain;
    for (int c = 0; c < md.num_classes; ++c) by_domain[(*md.domain_of_class)[c]].push_back(c);
    std::vector<int> eligible;
    for (const auto& [dom, members] : by_domain)
      if (static_cast<int>(members.size()) >= md.ways) eligible.push_back(dom);
    if (eligible.empty())
      throw std::invalid_argument("sample_task: no domain holds enough classes for a task");
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    std::vector<int> members = by_domain.at(eligible[pick(rng)]);
    std::shuffle(members.begin(), members.end(), rng);
    chosen.assign(members.begin(), members.begin() + md.ways);
  } else {
    std::vector<int> ids(md.num_classes);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    chosen.assign(ids.begin(), ids.begin() + md.ways);
  }
  // Random permutation decouples local labels from global class identity.
  std::shuffle(chosen.begin(), chosen.end(), rng);

  Task task;
  task.ways = md.ways;
  task.local_to_global = chosen;
  std::normal_distribution<double> gauss(0.0, 1.0);
  int d = md.dim();
  std::int64_t next_id = 0;
  auto draw = [&](int global) {
    Eigen::VectorXd x = md.class_means[global];
    for (int i = 0; i < d; ++i) x[i] += md.noise_std * gauss(rng);
    return x;
  };
  for (int j = 0; j < md.ways; ++j)
    for (int s = 0; s < md.shots; ++s)
      task.support.push_back({next_id++, draw(chosen[j]), j});
  std::uniform_int_distribution<int> pick_label(0, md.ways - 1);
  for (int qi = 0; qi < md.query_size; ++qi) {
    int j = pick_label(rng);
    task.query.push_back({next_id++, draw(chosen[j]), j});
  }
  return task;
}

std::vector<Task> sample_meta_training_set(const MetaDistribution& md,
                                           int num_tasks, Rng& rng) {
  if (num_tasks < 1) throw std::invalid_argument("sample_meta_training_set: need at least one task");
  std::vector<Task> tasks;
  tasks.reserve(num_tasks);
  std::int64_t stride = md.task_size();
  for (int t = 0; t < num_tasks; ++t) {
    Rng task_rng = make_rng(rng(), 0x7461736b);
    Task task = sample_task(md, task_rng);
    task.task_id = t;
    for (auto& r : task.support) r.sample_id += stride * t;
    for (auto& r : task.query) r.sample_id += stride * t;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<Task> gfsl_partition(const FlatDataset& ds, int ways, int shots,
                                 int query_size, Rng& rng) {
  if (ways < 2 || shots < 1 || query_size < 1)
    throw std::invalid_argument("gfsl_partition: ways/shots/query sizes out of range");
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (!ds.samples[i].global_label)
      throw std::invalid_argument("gfsl_partition: sample " + std::to_string(ds.samples[i].id) +
                                  " has no global label");

  std::map<int, std::vector<int>> pools;  // class -> indices into ds.samples
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    pools[*ds.samples[i].global_label].push_back(static_cast<int>(i));

  std::vector<Task> tasks;
  for (int task_id = 0;; ++task_id) {
    std::vector<int> eligible;
    for (const auto& [cls, pool] : pools)
      if (static_cast<int>(pool.size()) >= shots + 1) eligible.push_back(cls);
    if (static_cast<int>(eligible.size()) < ways) break;
    // Largest pools first keeps consumption even; the shuffle only breaks ties.
    std::shuffle(eligible.begin(), eligible.end(), rng);
    std::stable_sort(eligible.begin(), eligible.end(), [&](int a, int b) {
      return pools.at(a).size() > pools.at(b).size();
    });
    eligible.resize(ways);
    std::size_t available = 0;
    for (int cls : eligible) available += pools.at(cls).size();
    if (available < static_cast<std::size_t>(ways) * shots + query_size) break;

    std::vector<int> locals = eligible;
    std::shuffle(locals.begin(), locals.end(), rng);
    Task task;
    task.task_id = task_id;
    task.ways = ways;
    task.local_to_global = locals;
    for (int j = 0; j < ways; ++j) {
      auto& pool = pools.at(locals[j]);
      for (int s = 0; s < shots; ++s) {
        const Sample& sample = ds.samples[pop_uniform(pool, rng)];
        task.support.push_back({sample.id, sample.features, j});
      }
    }
    // Queries cycle over the classes so the block drains pools evenly; a
    // drained class simply stops contributing.
    std::vector<int> order(ways);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int taken = 0;
    while (taken < query_size) {
      bool progressed = false;
      for (int j : order) {
        if (taken >= query_size) break;
        auto& pool = pools.at(locals[j]);
        if (pool.empty()) continue;
        const Sample& sample = ds.samples[pop_uniform(pool, rng)];
        task.query.push_back({sample.id, sample.features, j});
        ++taken;
        progressed = true;
      }
      if (!progressed) break;
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

FlatDataset flatten(const std::vector<Task>& tasks, bool dedup_ids) {
  FlatDataset out;
  std::unordered_set<std::int64_t> seen;
  std::unordered_set<int> labels;
  auto append = [&](const Task& task, const TaskRecord& r) {
    if (dedup_ids && !seen.insert(r.sample_id).second) return;
    Sample s;
    s.id = r.sample_id;
    s.features = r.x;
    if (task.local_to_global) {
      s.global_label = (*task.local_to_global)[r.label];
      labels.insert(*s.global_label);
    }
    out.samples.push_back(std::move(s));
  };
  for (const Task& task : tasks) {
    for (const TaskRecord& r : task.support) append(task, r);
    for (const TaskRecord& r : task.query) append(task, r);
  }
  out.c_effective = static_cast<int>(labels.size());
  return out;
}

FlatDataset make_flat_dataset(const MetaDistribution& md, int per_class,
                              Rng& rng) {
  if (per_class < 1) throw std::invalid_argument("make_flat_dataset: per_class must be positive");
  md.validate();
  FlatDataset out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  int d = md.dim();
  std::int64_t next_id = 0;
  for (int c = 0; c < md.num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Sample s;
      s.id = next_id++;
      s.features = md.class_means[c];
      for (int j = 0; j < d; ++j) s.features[j] += md.noise_std * gauss(rng);
      s.global_label = c;
      if (md.domain_of_class) s.domain_id = (*md.domain_of_class)[c];
      out.samples.push_back(std::move(s));
    }
  }
  out.c_effective = md.num_classes;
  return out;
}

}  // namespace fsl
