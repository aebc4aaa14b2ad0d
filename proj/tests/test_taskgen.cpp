#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fsl/io.hpp"
#include "fsl/rng.hpp"
#include "fsl/taskgen.hpp"

using namespace fsl;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("planted distribution has unit-direction means at the requested scale") {
  MetaDistribution md = make_planted_md(10, 16, 5, 5, 15, 1.0, -1.0, 7);
  CHECK(md.num_classes == 10);
  CHECK(md.dim() == 16);
  CHECK(md.task_size() == 40);
  for (const auto& m : md.class_means) CHECK(m.norm() == doctest::Approx(4.0).epsilon(1e-12));

  MetaDistribution wide = make_planted_md(6, 8, 3, 2, 4, 0.5, 2.5, 3);
  for (const auto& m : wide.class_means) CHECK(m.norm() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("episode shapes: k*n support rows, m query rows, dense local labels") {
  MetaDistribution md = make_planted_md(10, 16, 5, 5, 15, 1.0, -1.0, 7);
  Rng rng = make_rng(7, 1);
  Task t = sample_task(md, rng);
  CHECK(t.support.size() == 25);
  CHECK(t.query.size() == 15);
  REQUIRE(t.local_to_global.has_value());
  CHECK(t.local_to_global->size() == 5);

  // Support arrives in class blocks: n consecutive rows per local label.
  for (int j = 0; j < 5; ++j)
    for (int s = 0; s < 5; ++s) CHECK(t.support[j * 5 + s].label == j);
  std::set<int> support_labels, query_labels, globals;
  for (const auto& r : t.support) support_labels.insert(r.label);
  for (const auto& r : t.query) {
    CHECK(r.label >= 0);
    CHECK(r.label < 5);
    query_labels.insert(r.label);
  }
  CHECK(support_labels.size() == 5);
  for (int g : *t.local_to_global) {
    CHECK(g >= 0);
    CHECK(g < 10);
    globals.insert(g);
  }
  CHECK(globals.size() == 5);  // distinct classes
}

TEST_CASE("a task over all classes uses each exactly once") {
  MetaDistribution md = make_planted_md(6, 8, 6, 2, 6, 1.0, -1.0, 11);
  Rng rng = make_rng(11, 2);
  Task t = sample_task(md, rng);
  std::set<int> globals(t.local_to_global->begin(), t.local_to_global->end());
  CHECK(globals == std::set<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("zero noise puts every draw exactly on its class mean") {
  MetaDistribution md = make_planted_md(8, 12, 4, 3, 10, 0.0, 5.0, 21);
  Rng rng = make_rng(21, 3);
  Task t = sample_task(md, rng);
  auto expect_mean = [&](const TaskRecord& r) {
    int g = (*t.local_to_global)[r.label];
    CHECK(r.x == md.class_means[g]);
  };
  for (const auto& r : t.support) expect_mean(r);
  for (const auto& r : t.query) expect_mean(r);
}

TEST_CASE("invalid episode shapes are rejected") {
  CHECK_THROWS_AS(make_planted_md(4, 8, 5, 5, 15, 1.0, -1.0, 1),
                  std::invalid_argument);  // more ways than classes
  CHECK_THROWS_AS(make_planted_md(10, 8, 1, 5, 15, 1.0, -1.0, 1),
                  std::invalid_argument);  // single-way task
  CHECK_THROWS_AS(make_planted_md(10, 8, 5, 0, 15, 1.0, -1.0, 1),
                  std::invalid_argument);  // no shots
  CHECK_THROWS_AS(make_planted_md(10, 8, 5, 5, 0, 1.0, -1.0, 1),
                  std::invalid_argument);  // no queries
  MetaDistribution md = make_planted_md(10, 8, 5, 5, 15, 1.0, -1.0, 1);
  Rng rng = make_rng(1);
  CHECK_THROWS_AS(sample_meta_training_set(md, 0, rng), std::invalid_argument);
  md.noise_std = -0.5;
  CHECK_THROWS_AS(sample_task(md, rng), std::invalid_argument);
}

TEST_CASE("task ids are sequential and sample ids globally unique") {
  MetaDistribution md = make_planted_md(10, 16, 5, 5, 15, 1.0, -1.0, 9);
  Rng rng = make_rng(9, 4);
  auto tasks = sample_meta_training_set(md, 12, rng);
  REQUIRE(tasks.size() == 12);
  std::set<std::int64_t> ids;
  for (int t = 0; t < 12; ++t) {
    CHECK(tasks[t].task_id == t);
    for (const auto& r : tasks[t].support) CHECK(ids.insert(r.sample_id).second);
    for (const auto& r : tasks[t].query) CHECK(ids.insert(r.sample_id).second);
  }
  CHECK(ids.size() == 12u * 40u);
}

TEST_CASE("one seed reproduces the same episodes byte for byte") {
  MetaDistribution md = make_planted_md(10, 16, 5, 5, 15, 1.0, -1.0, 13);
  Rng a = make_rng(13, 5), b = make_rng(13, 5);
  auto ta = sample_meta_training_set(md, 8, a);
  auto tb = sample_meta_training_set(md, 8, b);
  save_tasks_csv("taskgen_a.csv", ta);
  save_tasks_csv("taskgen_b.csv", tb);
  CHECK(slurp("taskgen_a.csv") == slurp("taskgen_b.csv"));
  std::remove("taskgen_a.csv");
  std::remove("taskgen_b.csv");
}

TEST_CASE("flatten keeps support before query and attaches global labels") {
  MetaDistribution md = make_planted_md(10, 16, 5, 5, 15, 1.0, -1.0, 17);
  Rng rng = make_rng(17, 6);
  auto tasks = sample_meta_training_set(md, 2, rng);
  FlatDataset flat = flatten(tasks);
  REQUIRE(flat.samples.size() == 80);
  CHECK(flat.has_labels());
  // Order: task 0 support, task 0 query, task 1 support, task 1 query.
  for (int i = 0; i < 25; ++i) CHECK(flat.samples[i].id == tasks[0].support[i].sample_id);
  for (int i = 0; i < 15; ++i) CHECK(flat.samples[25 + i].id == tasks[0].query[i].sample_id);
  for (int i = 0; i < 25; ++i) CHECK(flat.samples[40 + i].id == tasks[1].support[i].sample_id);
  int idx = 0;
  for (const auto& task : tasks) {
    for (const auto& r : task.support)
      CHECK(*flat.samples[idx++].global_label == (*task.local_to_global)[r.label]);
    for (const auto& r : task.query)
      CHECK(*flat.samples[idx++].global_label == (*task.local_to_global)[r.label]);
  }
}

TEST_CASE("flatten size scales as tasks times task size") {
  MetaDistribution md = make_planted_md(20, 8, 5, 5, 75, 1.0, -1.0, 19);
  Rng rng = make_rng(19, 7);
  auto tasks = sample_meta_training_set(md, 38, rng);
  FlatDataset flat = flatten(tasks);
  CHECK(flat.samples.size() == 38u * 100u);  // 380 tasks of size 100 would give 38000
  CHECK(flat.c_effective == 20);
}

TEST_CASE("flatten can drop repeated sample ids") {
  MetaDistribution md = make_planted_md(10, 8, 5, 2, 5, 1.0, -1.0, 23);
  Rng rng = make_rng(23, 8);
  auto tasks = sample_meta_training_set(md, 1, rng);
  std::vector<Task> doubled = {tasks[0], tasks[0]};
  CHECK(flatten(doubled).samples.size() == 30);
  CHECK(flatten(doubled, true).samples.size() == 15);
}

TEST_CASE("relabel_dense maps sorted labels onto a dense range") {
  FlatDataset ds;
  for (int label : {9, 3, 7, 7, 3}) {
    Sample s;
    s.id = static_cast<std::int64_t>(ds.samples.size());
    s.features = Eigen::VectorXd::Zero(2);
    s.global_label = label;
    ds.samples.push_back(std::move(s));
  }
  std::vector<int> original = ds.relabel_dense();
  CHECK(original == std::vector<int>{3, 7, 9});
  CHECK(ds.c_effective == 3);
  std::vector<int> got;
  for (const auto& s : ds.samples) got.push_back(*s.global_label);
  CHECK(got == std::vector<int>{2, 0, 1, 1, 0});
}

TEST_CASE("balanced pool splits into exactly N/(kn+m) disjoint episodes") {
  MetaDistribution md = make_planted_md(10, 16, 5, 5, 75, 1.0, -1.0, 29);
  Rng pool_rng = make_rng(29, 9);
  FlatDataset pool = make_flat_dataset(md, 100, pool_rng);
  REQUIRE(pool.samples.size() == 1000);
  Rng part_rng = make_rng(29, 10);
  auto tasks = gfsl_partition(pool, 5, 5, 75, part_rng);
  CHECK(tasks.size() == 10);
  std::set<std::int64_t> seen;
  std::set<std::int64_t> pool_ids;
  for (const auto& s : pool.samples) pool_ids.insert(s.id);
  for (const auto& t : tasks) {
    CHECK(t.support.size() == 25);
    CHECK(t.query.size() == 75);
    REQUIRE(t.local_to_global.has_value());
    std::set<int> classes(t.local_to_global->begin(), t.local_to_global->end());
    CHECK(classes.size() == 5);
    for (const auto& r : t.support) {
      CHECK(seen.insert(r.sample_id).second);  // disjoint across tasks
      CHECK(pool_ids.count(r.sample_id) == 1);
    }
    for (const auto& r : t.query) {
      CHECK(seen.insert(r.sample_id).second);
      CHECK(pool_ids.count(r.sample_id) == 1);
    }
  }
  CHECK(seen.size() == 1000);  // balanced pool is consumed completely
}

TEST_CASE("partition samples keep their pool labels") {
  MetaDistribution md = make_planted_md(6, 4, 3, 2, 6, 1.0, -1.0, 31);
  Rng pool_rng = make_rng(31, 11);
  FlatDataset pool = make_flat_dataset(md, 20, pool_rng);
  std::map<std::int64_t, int> truth;
  for (const auto& s : pool.samples) truth[s.id] = *s.global_label;
  Rng part_rng = make_rng(31, 12);
  auto tasks = gfsl_partition(pool, 3, 2, 6, part_rng);
  REQUIRE(!tasks.empty());
  for (const auto& t : tasks) {
    for (const auto& r : t.support) CHECK(truth.at(r.sample_id) == (*t.local_to_global)[r.label]);
    for (const auto& r : t.query) CHECK(truth.at(r.sample_id) == (*t.local_to_global)[r.label]);
  }
}

TEST_CASE("partition never over-draws on uneven pools") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng cfg_rng = make_rng(seed, 13);
    int classes = 4 + static_cast<int>(cfg_rng() % 5);      // 4..8
    int ways = 2 + static_cast<int>(cfg_rng() % 3);         // 2..4
    if (ways > classes) ways = classes;
    int shots = 1 + static_cast<int>(cfg_rng() % 3);        // 1..3
    int query = 2 + static_cast<int>(cfg_rng() % 8);        // 2..9
    MetaDistribution md = make_planted_md(classes, 6, ways, shots, query, 1.0, -1.0, seed);
    FlatDataset pool = make_flat_dataset(md, 5 + static_cast<int>(cfg_rng() % 30), cfg_rng);
    // Make the pool uneven by dropping a suffix of the last class.
    while (!pool.samples.empty() && *pool.samples.back().global_label == classes - 1 &&
           pool.samples.size() % 3 != 0)
      pool.samples.pop_back();
    Rng part_rng = make_rng(seed, 14);
    auto tasks = gfsl_partition(pool, ways, shots, query, part_rng);
    std::size_t task_size = static_cast<std::size_t>(ways) * shots + query;
    CHECK(tasks.size() <= pool.samples.size() / task_size);
    std::set<std::int64_t> seen;
    for (const auto& t : tasks) {
      CHECK(static_cast<int>(t.support.size()) == ways * shots);
      CHECK(static_cast<int>(t.query.size()) == query);
      for (const auto& r : t.support) CHECK(seen.insert(r.sample_id).second);
      for (const auto& r : t.query) CHECK(seen.insert(r.sample_id).second);
    }
  }
}

TEST_CASE("declared domains confine every task to one domain") {
  MetaDistribution md = make_planted_md(12, 8, 3, 2, 6, 1.0, -1.0, 37, 3);
  REQUIRE(md.domain_of_class.has_value());
  // Classes split evenly across the three domains.
  std::map<int, int> per_domain;
  for (int c = 0; c < 12; ++c) per_domain[(*md.domain_of_class)[c]]++;
  REQUIRE(per_domain.size() == 3);
  for (const auto& [dom, count] : per_domain) CHECK(count == 4);

  Rng rng = make_rng(37, 15);
  auto tasks = sample_meta_training_set(md, 50, rng);
  std::set<int> domains_seen;
  for (const auto& t : tasks) {
    std::set<int> doms;
    for (int g : *t.local_to_global) doms.insert((*md.domain_of_class)[g]);
    CHECK(doms.size() == 1);
    domains_seen.insert(*doms.begin());
  }
  CHECK(domains_seen.size() == 3);  // 50 draws hit every domain
}

TEST_CASE("make_flat_dataset is balanced and labeled") {
  MetaDistribution md = make_planted_md(5, 6, 3, 2, 4, 0.5, -1.0, 41);
  Rng rng = make_rng(41, 16);
  FlatDataset ds = make_flat_dataset(md, 7, rng);
  REQUIRE(ds.samples.size() == 35);
  CHECK(ds.c_effective == 5);
  std::map<int, int> counts;
  for (const auto& s : ds.samples) counts[*s.global_label]++;
  for (int c = 0; c < 5; ++c) CHECK(counts[c] == 7);
  CHECK_THROWS_AS(make_flat_dataset(md, 0, rng), std::invalid_argument);
}
