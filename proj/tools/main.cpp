// Command-line front end: every experiment is a subcommand driven by a JSON
// config (--config) with flag overrides, emitting CSV artifacts plus a
// deterministic report.json into the output directory.
//
// Exit codes: 0 success, 1 stage failure, 2 usage or config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsl/augmentation.hpp"
#include "fsl/io.hpp"
#include "fsl/label_inference.hpp"
#include "fsl/learners.hpp"
#include "fsl/representation.hpp"
#include "fsl/rng.hpp"
#include "fsl/taskgen.hpp"
#include "fsl/theory_eval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fsl;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv | grid
  std::string tasks_csv;             // episodic input, source = csv
  std::string flat_csv;              // labeled flat input for pretrain
  int classes = 10;
  int dim = 16;
  int ways = 5;
  int shots = 5;
  int query = 15;
  int tasks = 200;
  double noise_std = 1.0;
  double separation = -1.0;  // negative = 4 * noise_std
  int domains = 1;
  int per_class = 100;  // pool size per class (no-replacement and pretrain)
  int rows = 6, cols = 6;
  bool no_replacement = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  int jobs = 1;
  DataConfig data;
  int embed_dim = 0;  // 0 = input dimension
  double ridge_lambda = 1e-3;
  int sim_steps = 1000;
  double sim_lr = 0.01;
  int v_init = 60;
  double q = 3.0;
  int max_sweeps = 50;
  std::string prune_mode = "matches";
  int pre_steps = 2000;
  double pre_lr = 0.5;
  double pre_reg = 1e-4;
  bool rotate = false;
  int ft_steps = 500;
  double ft_lr = 0.01;
  int eval_draws = 1000;
  int eval_tasks = 200;
  bool eval_normalize = true;
  double logistic_c_inv = 1.0;
  std::string builder = "ridge";
};

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["jobs"] = c.jobs;
  json d;
  d["source"] = c.data.source;
  d["tasks_csv"] = c.data.tasks_csv;
  d["flat_csv"] = c.data.flat_csv;
  d["classes"] = c.data.classes;
  d["dim"] = c.data.dim;
  d["ways"] = c.data.ways;
  d["shots"] = c.data.shots;
  d["query"] = c.data.query;
  d["tasks"] = c.data.tasks;
  d["noise_std"] = c.data.noise_std;
  d["separation"] = c.data.separation;
  d["domains"] = c.data.domains;
  d["per_class"] = c.data.per_class;
  d["rows"] = c.data.rows;
  d["cols"] = c.data.cols;
  d["no_replacement"] = c.data.no_replacement;
  j["data"] = d;
  j["embed_dim"] = c.embed_dim;
  j["ridge_lambda"] = c.ridge_lambda;
  j["sim"] = json{{"steps", c.sim_steps}, {"lr", c.sim_lr}};
  j["inference"] = json{{"v_init", c.v_init},
                        {"q", c.q},
                        {"max_sweeps", c.max_sweeps},
                        {"prune_mode", c.prune_mode}};
  j["pretrain"] = json{{"steps", c.pre_steps},
                       {"lr", c.pre_lr},
                       {"reg", c.pre_reg},
                       {"rotate", c.rotate}};
  j["finetune"] = json{{"steps", c.ft_steps}, {"lr", c.ft_lr}};
  j["eval"] = json{{"draws", c.eval_draws},
                   {"tasks", c.eval_tasks},
                   {"normalize", c.eval_normalize},
                   {"logistic_c_inv", c.logistic_c_inv},
                   {"builder", c.builder}};
  return j;
}

void merge(json& base, const json& user) {
  for (const auto& [k, v] : user.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object())
      merge(base[k], v);
    else
      base[k] = v;
  }
}

void check_keys(const json& user, const json& ref, const std::string& prefix) {
  for (const auto& [k, v] : user.items()) {
    if (!ref.contains(k)) throw ConfigError("unknown config key: " + prefix + k);
    if (v.is_object() && ref.at(k).is_object())
      check_keys(v, ref.at(k), prefix + k + ".");
  }
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out = j.at("out").get<std::string>();
    c.jobs = j.at("jobs").get<int>();
    const json& d = j.at("data");
    c.data.source = d.at("source").get<std::string>();
    c.data.tasks_csv = d.at("tasks_csv").get<std::string>();
    c.data.flat_csv = d.at("flat_csv").get<std::string>();
    c.data.classes = d.at("classes").get<int>();
    c.data.dim = d.at("dim").get<int>();
    c.data.ways = d.at("ways").get<int>();
    c.data.shots = d.at("shots").get<int>();
    c.data.query = d.at("query").get<int>();
    c.data.tasks = d.at("tasks").get<int>();
    c.data.noise_std = d.at("noise_std").get<double>();
    c.data.separation = d.at("separation").get<double>();
    c.data.domains = d.at("domains").get<int>();
    c.data.per_class = d.at("per_class").get<int>();
    c.data.rows = d.at("rows").get<int>();
    c.data.cols = d.at("cols").get<int>();
    c.data.no_replacement = d.at("no_replacement").get<bool>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.ridge_lambda = j.at("ridge_lambda").get<double>();
    c.sim_steps = j.at("sim").at("steps").get<int>();
    c.sim_lr = j.at("sim").at("lr").get<double>();
    c.v_init = j.at("inference").at("v_init").get<int>();
    c.q = j.at("inference").at("q").get<double>();
    c.max_sweeps = j.at("inference").at("max_sweeps").get<int>();
    c.prune_mode = j.at("inference").at("prune_mode").get<std::string>();
    c.pre_steps = j.at("pretrain").at("steps").get<int>();
    c.pre_lr = j.at("pretrain").at("lr").get<double>();
    c.pre_reg = j.at("pretrain").at("reg").get<double>();
    c.rotate = j.at("pretrain").at("rotate").get<bool>();
    c.ft_steps = j.at("finetune").at("steps").get<int>();
    c.ft_lr = j.at("finetune").at("lr").get<double>();
    c.eval_draws = j.at("eval").at("draws").get<int>();
    c.eval_tasks = j.at("eval").at("tasks").get<int>();
    c.eval_normalize = j.at("eval").at("normalize").get<bool>();
    c.logistic_c_inv = j.at("eval").at("logistic_c_inv").get<double>();
    c.builder = j.at("eval").at("builder").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

PruneMode parse_prune_mode(const std::string& s) {
  if (s == "samples") return PruneMode::samples;
  if (s == "matches") return PruneMode::matches;
  if (s == "tasks") return PruneMode::tasks;
  throw ConfigError("inference.prune_mode must be samples, matches or tasks");
}

TaskBuilder parse_builder(const std::string& s) {
  if (s == "ridge") return TaskBuilder::ridge;
  if (s == "logistic") return TaskBuilder::logistic;
  if (s == "gls") return TaskBuilder::gls;
  throw ConfigError("eval.builder must be ridge, logistic or gls");
}

void validate_config(const RunConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(c.jobs >= 1, "jobs must be >= 1");
  need(c.data.source == "synthetic" || c.data.source == "csv" ||
           c.data.source == "grid",
       "data.source must be synthetic, csv or grid");
  need(c.data.classes >= 2, "data.classes must be >= 2");
  need(c.data.dim >= 1, "data.dim must be >= 1");
  need(c.data.ways >= 2, "data.ways must be >= 2");
  need(c.data.shots >= 1, "data.shots must be >= 1");
  need(c.data.query >= 1, "data.query must be >= 1");
  need(c.data.tasks >= 1, "data.tasks must be >= 1");
  need(c.data.noise_std >= 0.0, "data.noise_std must be >= 0");
  need(c.data.domains >= 1, "data.domains must be >= 1");
  need(c.data.per_class >= 1, "data.per_class must be >= 1");
  need(c.data.rows >= 1 && c.data.cols >= 1, "grid shape must be positive");
  need(c.embed_dim >= 0, "embed_dim must be >= 0");
  need(c.ridge_lambda > 0.0, "ridge_lambda must be > 0");
  need(c.sim_steps >= 0 && c.sim_lr > 0.0, "sim settings out of range");
  need(c.v_init >= 1, "inference.v_init must be >= 1");
  need(c.q >= 0.0, "inference.q must be >= 0");
  need(c.max_sweeps >= 1, "inference.max_sweeps must be >= 1");
  parse_prune_mode(c.prune_mode);
  need(c.pre_steps >= 1 && c.pre_lr > 0.0 && c.pre_reg >= 0.0,
       "pretrain settings out of range");
  need(c.ft_steps >= 0 && c.ft_lr > 0.0, "finetune settings out of range");
  need(c.eval_draws >= 1, "eval.draws must be >= 1");
  need(c.eval_tasks >= 1, "eval.tasks must be >= 1");
  need(c.logistic_c_inv > 0.0, "eval.logistic_c_inv must be > 0");
  parse_builder(c.builder);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is empty");
  if (!fs::exists(path))
    throw ConfigError(std::string(what) + " not found: " + path);
}

std::string out_path(const RunConfig& c, const char* name) {
  return (fs::path(c.out) / name).string();
}

// Fixed per-purpose seed streams so every subcommand draws independently.
constexpr std::uint64_t kStreamMd = 101;
constexpr std::uint64_t kStreamPool = 102;
constexpr std::uint64_t kStreamTasks = 103;
constexpr std::uint64_t kStreamEval = 104;
constexpr std::uint64_t kStreamInfer = 105;
constexpr std::uint64_t kStreamGrid = 106;
constexpr std::uint64_t kStreamFlat = 107;
constexpr std::uint64_t kStreamTheta = 108;
constexpr std::uint64_t kStreamFinetune = 109;
constexpr std::uint64_t kStreamDraws = 110;
constexpr std::uint64_t kStreamRate = 111;
constexpr std::uint64_t kStreamSim = 112;

MetaDistribution make_md(const RunConfig& c) {
  return make_planted_md(c.data.classes, c.data.dim, c.data.ways, c.data.shots,
                         c.data.query, c.data.noise_std, c.data.separation,
                         mix_seed(c.seed, kStreamMd), c.data.domains);
}

std::vector<Task> training_tasks(const RunConfig& c) {
  if (c.data.source == "csv") {
    require_file(c.data.tasks_csv, "data.tasks_csv");
    return load_tasks_csv(c.data.tasks_csv);
  }
  if (c.data.source == "grid")
    throw ConfigError("episodic commands need data.source synthetic or csv");
  MetaDistribution md = make_md(c);
  if (c.data.no_replacement) {
    Rng rng = make_rng(c.seed, kStreamPool);
    FlatDataset pool = make_flat_dataset(md, c.data.per_class, rng);
    return gfsl_partition(pool, md.ways, md.shots, md.query_size, rng);
  }
  Rng rng = make_rng(c.seed, kStreamTasks);
  return sample_meta_training_set(md, c.data.tasks, rng);
}

std::vector<Task> evaluation_tasks(const RunConfig& c) {
  if (c.data.source == "csv") {
    require_file(c.data.tasks_csv, "data.tasks_csv");
    return load_tasks_csv(c.data.tasks_csv);
  }
  MetaDistribution md = make_md(c);
  Rng rng = make_rng(c.seed, kStreamEval);
  return sample_meta_training_set(md, c.eval_tasks, rng);
}

int task_dim(const std::vector<Task>& tasks) {
  for (const Task& t : tasks) {
    if (!t.support.empty()) return static_cast<int>(t.support.front().x.size());
    if (!t.query.empty()) return static_cast<int>(t.query.front().x.size());
  }
  throw std::runtime_error("no records in the task list");
}

long long record_count(const std::vector<Task>& tasks) {
  long long n = 0;
  for (const Task& t : tasks) n += static_cast<long long>(t.support.size() + t.query.size());
  return n;
}

InferenceConfig inference_config(const RunConfig& c) {
  return InferenceConfig{c.v_init, c.q, c.max_sweeps, mix_seed(c.seed, kStreamInfer),
                         parse_prune_mode(c.prune_mode)};
}

EvalConfig eval_config(const RunConfig& c) {
  EvalConfig ec;
  ec.normalize = c.eval_normalize;
  ec.ridge = RidgeConfig{c.ridge_lambda};
  ec.logistic_c_inv = c.logistic_c_inv;
  return ec;
}

// Clustering accuracy against the generative labels, when the tasks carry any.
std::optional<double> truth_accuracy(const std::vector<Task>& tasks,
                                     const LabelAssignment& assignment) {
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (assignment.tasks[i].discarded || !tasks[i].local_to_global) continue;
    const std::vector<int>& ltg = *tasks[i].local_to_global;
    for (int j = 0; j < tasks[i].ways; ++j)
      pairs.emplace_back(assignment.tasks[i].cluster_of_local[j], ltg[j]);
  }
  if (pairs.empty()) return std::nullopt;
  return clustering_accuracy(pairs);
}

json risk_json(const RiskEstimate& r) {
  return json{{"value", r.value}, {"std_error", r.std_error}, {"num_draws", r.num_draws}};
}

void write_report(const RunConfig& c, const std::string& command,
                  const json& results) {
  json rep;
  rep["command"] = command;
  rep["config"] = to_json(c);
  rep["results"] = results;
  std::ofstream f(out_path(c, "report.json"));
  if (!f) throw std::runtime_error("cannot write " + out_path(c, "report.json"));
  f << rep.dump(2) << "\n";
}

void write_report_csv(const RunConfig& c,
                      const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream f(out_path(c, "report.csv"));
  if (!f) throw std::runtime_error("cannot write " + out_path(c, "report.csv"));
  f << "key,value\n";
  for (const auto& [k, v] : rows) f << k << ',' << v << "\n";
}

// ---------------------------------------------------------------- commands

json cmd_simulate(const RunConfig& c) {
  if (c.data.source != "synthetic")
    throw ConfigError("simulate needs data.source = synthetic");
  std::vector<Task> tasks = training_tasks(c);
  save_tasks_csv(out_path(c, "tasks.csv"), tasks);
  json r;
  r["tasks"] = tasks.size();
  r["samples"] = record_count(tasks);
  r["no_replacement"] = c.data.no_replacement;
  std::cout << "simulate: wrote " << tasks.size() << " tasks\n";
  return r;
}

json cmd_infer_labels(const RunConfig& c, const std::string& embedding_path) {
  std::vector<Task> tasks = training_tasks(c);
  EmbeddingModel model;
  if (!embedding_path.empty()) {
    require_file(embedding_path, "--embedding");
    model = load_embedding_csv(embedding_path);
  } else {
    model = EmbeddingModel::identity(task_dim(tasks));
  }
  LabelerResult lr = learn_labeler(tasks, model, inference_config(c));
  save_clusters_csv(out_path(c, "clusters.csv"), lr.state);
  save_assignment_csv(out_path(c, "assignment.csv"), lr.assignment,
                      tasks.front().ways);
  if (lr.assignment.num_clustered > 0)
    save_flat_csv(out_path(c, "labeled.csv"), label_dataset(tasks, lr.assignment));
  json r;
  r["clusters"] = lr.state.size();
  r["sweeps_executed"] = lr.sweeps_executed;
  r["cluster_count_trace"] = lr.cluster_count_trace;
  r["tasks_clustered"] = lr.assignment.num_clustered;
  r["tasks_discarded"] = lr.assignment.num_discarded;
  if (auto acc = truth_accuracy(tasks, lr.assignment)) r["clustering_accuracy"] = *acc;
  std::cout << "infer-labels: " << lr.state.size() << " clusters after "
            << lr.sweeps_executed << " sweeps, " << lr.assignment.num_discarded
            << " tasks discarded\n";
  return r;
}

json cmd_pretrain(const RunConfig& c) {
  FlatDataset flat;
  bool rotated = false;
  if (!c.data.flat_csv.empty()) {
    require_file(c.data.flat_csv, "data.flat_csv");
    if (c.rotate) throw ConfigError("rotation augmentation needs grid data");
    flat = load_flat_csv(c.data.flat_csv);
  } else if (c.data.source == "grid") {
    GridDataset gd = make_planted_grid(c.data.classes, c.data.per_class,
                                       c.data.rows, c.data.cols, c.data.noise_std,
                                       c.data.separation < 0 ? 4.0 * c.data.noise_std
                                                             : c.data.separation,
                                       mix_seed(c.seed, kStreamGrid));
    if (c.rotate) {
      gd = augment_rotations(gd);
      rotated = true;
    }
    flat = to_flat(gd);
  } else if (c.data.source == "synthetic") {
    if (c.rotate) throw ConfigError("rotation augmentation needs grid data");
    MetaDistribution md = make_md(c);
    Rng rng = make_rng(c.seed, kStreamFlat);
    flat = make_flat_dataset(md, c.data.per_class, rng);
  } else {
    throw ConfigError("pretrain needs data.flat_csv or a synthetic/grid source");
  }
  flat.relabel_dense();
  int d = flat.dim();
  int p = c.embed_dim > 0 ? c.embed_dim : d;
  LinearEmbedding theta =
      LinearEmbedding::random_init(p, d, mix_seed(c.seed, kStreamTheta));
  SoftmaxResult res = softmax_train_joint(
      flat, theta, c.pre_reg, OptimizerConfig{c.pre_lr, c.pre_steps, 1e-6});
  save_classifier_csv(out_path(c, "classifier.csv"), res.classifier);
  save_embedding_csv(out_path(c, "embedding_pre.csv"),
                     EmbeddingModel{theta, std::nullopt});
  json r;
  r["samples"] = flat.samples.size();
  r["classes"] = flat.c_effective;
  r["rotated"] = rotated;
  r["final_loss"] = res.final_loss;
  r["steps_run"] = res.steps_run;
  std::cout << "pretrain: " << flat.samples.size() << " samples, "
            << flat.c_effective << " classes, final loss " << res.final_loss
            << "\n";
  return r;
}

json cmd_finetune(const RunConfig& c, std::string embedding_path) {
  if (embedding_path.empty()) embedding_path = out_path(c, "embedding_pre.csv");
  require_file(embedding_path, "--embedding");
  EmbeddingModel pre = load_embedding_csv(embedding_path);
  if (pre.adapter)
    throw std::runtime_error("embedding already carries an adapter: " +
                             embedding_path);
  std::vector<Task> tasks = training_tasks(c);
  MetaTrainConfig mc{c.ft_lr, c.ft_steps, RidgeConfig{c.ridge_lambda}, 0,
                     mix_seed(c.seed, kStreamFinetune)};
  FinetuneResult ft = meta_finetune_residual(pre.base, tasks, mc);
  save_embedding_csv(out_path(c, "embedding_final.csv"), ft.model);
  json r;
  r["steps"] = c.ft_steps;
  if (!ft.loss_trace.empty()) {
    r["loss_first"] = ft.loss_trace.front();
    r["loss_last"] = ft.loss_trace.back();
  }
  std::cout << "finetune: " << c.ft_steps << " adapter steps\n";
  return r;
}

json cmd_evaluate(const RunConfig& c, const std::string& embedding_path,
                  std::string classifier_path) {
  std::vector<Task> tasks = evaluation_tasks(c);
  EmbeddingModel model;
  if (!embedding_path.empty()) {
    require_file(embedding_path, "--embedding");
    model = load_embedding_csv(embedding_path);
  } else {
    model = EmbeddingModel::identity(task_dim(tasks));
  }
  TaskBuilder builder = parse_builder(c.builder);
  GlobalClassifier g;
  const GlobalClassifier* gp = nullptr;
  if (builder == TaskBuilder::gls) {
    if (classifier_path.empty()) classifier_path = out_path(c, "classifier.csv");
    require_file(classifier_path, "--classifier");
    g = load_classifier_csv(classifier_path);
    gp = &g;
  }
  MetaTestReport rep = meta_test(tasks, model, builder, eval_config(c), gp, c.jobs);
  json r;
  r["builder"] = c.builder;
  r["num_tasks"] = rep.num_tasks;
  r["mean_accuracy"] = rep.mean_accuracy;
  r["ci95_half_width"] = rep.ci95_half_width;
  write_report_csv(c, {{"builder", c.builder},
                       {"num_tasks", std::to_string(rep.num_tasks)},
                       {"mean_accuracy", format_double(rep.mean_accuracy)},
                       {"ci95_half_width", format_double(rep.ci95_half_width)}});
  std::cout << "evaluate: accuracy " << rep.mean_accuracy << " +/- "
            << rep.ci95_half_width << " over " << rep.num_tasks << " tasks\n";
  return r;
}

json cmd_verify_theory(const RunConfig& c, const std::string& classifier_path,
                       bool zero_w) {
  if (c.data.source != "synthetic")
    throw ConfigError("verify-theory needs data.source = synthetic");
  MetaDistribution md = make_md(c);
  EmbeddingModel model = EmbeddingModel::identity(md.dim());
  GlobalClassifier w;
  std::string mode;
  if (zero_w) {
    mode = "zero";
    w.has_bias = true;
    w.weights = Eigen::MatrixXd::Zero(md.num_classes, md.dim() + 1);
    for (int i = 0; i < md.num_classes; ++i) w.class_ids.push_back(i);
  } else if (!classifier_path.empty()) {
    mode = "loaded";
    require_file(classifier_path, "--classifier");
    w = load_classifier_csv(classifier_path);
  } else {
    mode = "trained";
    Rng rng = make_rng(c.seed, kStreamTasks);
    FlatDataset flat = flatten(sample_meta_training_set(md, c.data.tasks, rng));
    int p = c.embed_dim > 0 ? c.embed_dim : md.dim();
    LinearEmbedding theta =
        LinearEmbedding::random_init(p, md.dim(), mix_seed(c.seed, kStreamTheta));
    SoftmaxResult res =
        softmax_train_joint(flat, theta, c.pre_reg,
                            OptimizerConfig{c.pre_lr, c.pre_steps, 1e-6},
                            true, md.num_classes);
    w = res.classifier;
    model = EmbeddingModel{theta, std::nullopt};
  }
  RiskOrderingReport rep =
      verify_risk_ordering(md, w, model, c.eval_draws, mix_seed(c.seed, kStreamDraws));
  json r;
  r["mode"] = mode;
  r["gls"] = risk_json(rep.gls);
  r["pretrain"] = risk_json(rep.pretrain);
  r["holds"] = rep.holds;
  r["pointwise_violations"] = rep.pointwise_violations;
  r["paired_samples"] = rep.paired_samples;
  std::cout << "verify-theory: gls " << rep.gls.value << ", pretrain "
            << rep.pretrain.value << ", violations " << rep.pointwise_violations
            << ", holds " << (rep.holds ? "yes" : "no") << "\n";
  return r;
}

json cmd_rate_study(const RunConfig& c, const std::vector<int>& t_grid, int seeds) {
  if (c.data.source != "synthetic")
    throw ConfigError("rate-study needs data.source = synthetic");
  if (t_grid.empty()) throw ConfigError("rate-study needs a nonempty --t-grid");
  if (seeds < 1) throw ConfigError("--seeds must be >= 1");
  MetaDistribution md = make_md(c);
  RateStudyConfig rc{OptimizerConfig{c.pre_lr, c.pre_steps, 1e-6}, c.pre_reg,
                     c.embed_dim, c.eval_draws, true, mix_seed(c.seed, kStreamRate)};
  std::vector<RateStudyRow> rows = rate_study(md, t_grid, seeds, rc);
  std::ofstream f(out_path(c, "rate_study.csv"));
  if (!f) throw std::runtime_error("cannot write rate_study.csv");
  f << "tasks,samples,meta_gls_risk,meta_gls_se,pretrain_risk,pretrain_se,seeds\n";
  json jr = json::array();
  for (const RateStudyRow& row : rows) {
    f << row.num_tasks << ',' << row.num_samples << ','
      << format_double(row.gls_risk.value) << ','
      << format_double(row.gls_risk.std_error) << ','
      << format_double(row.pretrain_risk.value) << ','
      << format_double(row.pretrain_risk.std_error) << ',' << row.seeds_averaged
      << "\n";
    jr.push_back(json{{"tasks", row.num_tasks},
                      {"samples", row.num_samples},
                      {"meta_gls", risk_json(row.gls_risk)},
                      {"pretrain", risk_json(row.pretrain_risk)},
                      {"seeds_averaged", row.seeds_averaged}});
  }
  std::cout << "rate-study: " << rows.size() << " grid points, " << seeds
            << " seeds each\n";
  return json{{"rows", jr}};
}

json cmd_domains(const RunConfig& c, const std::string& embedding_path) {
  std::vector<Task> tasks = training_tasks(c);
  EmbeddingModel model;
  if (!embedding_path.empty()) {
    require_file(embedding_path, "--embedding");
    model = load_embedding_csv(embedding_path);
  } else {
    model = EmbeddingModel::identity(task_dim(tasks));
  }
  LabelerResult lr = learn_labeler(tasks, model, inference_config(c));
  save_clusters_csv(out_path(c, "clusters.csv"), lr.state);
  save_assignment_csv(out_path(c, "assignment.csv"), lr.assignment,
                      tasks.front().ways);
  std::vector<std::vector<int>> comps = infer_domains(tasks, lr.assignment);
  json r;
  r["clusters"] = lr.state.size();
  r["num_components"] = comps.size();
  r["components"] = comps;
  std::cout << "domains: " << comps.size() << " components over "
            << lr.state.size() << " clusters\n";
  return r;
}

json cmd_pipeline(const RunConfig& c, bool resume) {
  std::vector<Task> tasks = training_tasks(c);
  int d = task_dim(tasks);
  int p = c.embed_dim > 0 ? c.embed_dim : d;
  json stages;
  auto run_stage = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("stage ") + name + " failed: " +
                               e.what());
    }
  };

  // Episode-driven representation learning.
  EmbeddingModel sim_model;
  run_stage("replearn", [&] {
    std::string path = out_path(c, "embedding_sim.csv");
    if (resume && fs::exists(path)) {
      sim_model = load_embedding_csv(path);
      stages["replearn"] = json{{"resumed", true}};
    } else {
      MetaTrainConfig mc{c.sim_lr, c.sim_steps, RidgeConfig{c.ridge_lambda}, 0,
                         mix_seed(c.seed, kStreamSim)};
      MetaTrainResult res = meta_train_sim(tasks, d, p, mc);
      sim_model = EmbeddingModel{res.embedding, std::nullopt};
      save_embedding_csv(path, sim_model);
      stages["replearn"] =
          json{{"resumed", false},
               {"steps", c.sim_steps},
               {"loss_first", res.loss_trace.empty() ? 0.0 : res.loss_trace.front()},
               {"loss_last", res.loss_trace.empty() ? 0.0 : res.loss_trace.back()}};
    }
    std::cout << "[replearn] done\n";
  });

  // Global label inference over the learned representation.
  ClusterState state;
  LabelAssignment assignment;
  run_stage("learnlabeler", [&] {
    std::string cpath = out_path(c, "clusters.csv");
    std::string apath = out_path(c, "assignment.csv");
    int sweeps = 0;
    if (resume && fs::exists(cpath) && fs::exists(apath)) {
      state = load_clusters_csv(cpath);
      assignment = load_assignment_csv(apath);
      stages["learnlabeler"] = json{{"resumed", true},
                                    {"sweeps_executed", 0},
                                    {"clusters", state.size()}};
    } else {
      LabelerResult lr = learn_labeler(tasks, sim_model, inference_config(c));
      state = lr.state;
      assignment = lr.assignment;
      sweeps = lr.sweeps_executed;
      save_clusters_csv(cpath, state);
      save_assignment_csv(apath, assignment, tasks.front().ways);
      stages["learnlabeler"] = json{{"resumed", false},
                                    {"sweeps_executed", sweeps},
                                    {"clusters", state.size()},
                                    {"tasks_clustered", assignment.num_clustered},
                                    {"tasks_discarded", assignment.num_discarded}};
      if (auto acc = truth_accuracy(tasks, assignment))
        stages["learnlabeler"]["clustering_accuracy"] = *acc;
    }
    std::cout << "[learnlabeler] sweeps executed: " << sweeps << "\n";
  });

  // Cross-entropy pre-training on the inferred global labels.
  EmbeddingModel pre_model;
  GlobalClassifier classifier;
  run_stage("pretrain", [&] {
    std::string wpath = out_path(c, "classifier.csv");
    std::string epath = out_path(c, "embedding_pre.csv");
    if (resume && fs::exists(wpath) && fs::exists(epath)) {
      classifier = load_classifier_csv(wpath);
      pre_model = load_embedding_csv(epath);
      stages["pretrain"] = json{{"resumed", true}};
    } else {
      FlatDataset labeled = label_dataset(tasks, assignment);
      LinearEmbedding theta =
          LinearEmbedding::random_init(p, d, mix_seed(c.seed, kStreamTheta));
      SoftmaxResult res = softmax_train_joint(
          labeled, theta, c.pre_reg, OptimizerConfig{c.pre_lr, c.pre_steps, 1e-6});
      classifier = res.classifier;
      pre_model = EmbeddingModel{theta, std::nullopt};
      save_classifier_csv(wpath, classifier);
      save_embedding_csv(epath, pre_model);
      stages["pretrain"] = json{{"resumed", false},
                                {"samples", labeled.samples.size()},
                                {"classes", labeled.c_effective},
                                {"final_loss", res.final_loss},
                                {"steps_run", res.steps_run}};
    }
    std::cout << "[pretrain] done\n";
  });

  // Residual adapter fine-tuning on the original episodes.
  EmbeddingModel final_model;
  run_stage("metafinetune", [&] {
    std::string path = out_path(c, "embedding_final.csv");
    if (resume && fs::exists(path)) {
      final_model = load_embedding_csv(path);
      stages["metafinetune"] = json{{"resumed", true}};
    } else {
      MetaTrainConfig mc{c.ft_lr, c.ft_steps, RidgeConfig{c.ridge_lambda}, 0,
                         mix_seed(c.seed, kStreamFinetune)};
      FinetuneResult ft = meta_finetune_residual(pre_model.base, tasks, mc);
      final_model = ft.model;
      save_embedding_csv(path, final_model);
      stages["metafinetune"] =
          json{{"resumed", false},
               {"steps", c.ft_steps},
               {"loss_first", ft.loss_trace.empty() ? 0.0 : ft.loss_trace.front()},
               {"loss_last", ft.loss_trace.empty() ? 0.0 : ft.loss_trace.back()}};
    }
    std::cout << "[metafinetune] done\n";
  });

  // Few-shot evaluation of the pre-trained and fine-tuned representations.
  run_stage("eval", [&] {
    std::vector<Task> eval_ts = evaluation_tasks(c);
    EvalConfig ec = eval_config(c);
    MetaTestReport pre_rep =
        meta_test(eval_ts, pre_model, TaskBuilder::ridge, ec, nullptr, c.jobs);
    MetaTestReport fin_rep =
        meta_test(eval_ts, final_model, TaskBuilder::ridge, ec, nullptr, c.jobs);
    stages["eval"] = json{
        {"num_tasks", fin_rep.num_tasks},
        {"accuracy_pretrained",
         json{{"mean", pre_rep.mean_accuracy}, {"ci95", pre_rep.ci95_half_width}}},
        {"accuracy_final",
         json{{"mean", fin_rep.mean_accuracy}, {"ci95", fin_rep.ci95_half_width}}}};
    write_report_csv(
        c, {{"accuracy_pretrained", format_double(pre_rep.mean_accuracy)},
            {"accuracy_final", format_double(fin_rep.mean_accuracy)},
            {"num_eval_tasks", std::to_string(fin_rep.num_tasks)},
            {"clusters", std::to_string(state.size())}});
    std::cout << "[eval] final accuracy " << fin_rep.mean_accuracy << "\n";
  });

  return stages;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot meta-learning pipeline over vector-embedded episodes"};
  app.require_subcommand(1);

  std::string config_path, out_dir, tasks_csv, embedding_path, classifier_path;
  std::string builder, t_grid_str = "10,40,160";
  std::uint64_t seed = 0;
  double q = 3.0;
  int v_init = 60, jobs = 1, draws = 0, seeds = 5;
  bool rotate = false, resume = false, zero_w = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--jobs", jobs, "worker threads for evaluation");
    sub->add_option("--tasks-csv", tasks_csv, "episodic CSV input");
    sub->add_option("--q", q, "pruning aggressiveness");
    sub->add_option("--v-init", v_init, "initial cluster count");
    sub->add_flag("--rotate", rotate, "rotation-augment grid data");
    sub->add_option("--draws", draws, "Monte-Carlo draws");
    sub->add_option("--builder", builder, "task builder: ridge|logistic|gls");
  };

  CLI::App* c_sim = app.add_subcommand("simulate", "emit an episodic CSV");
  CLI::App* c_infer = app.add_subcommand("infer-labels", "cluster local classes");
  CLI::App* c_pre = app.add_subcommand("pretrain", "cross-entropy pre-training");
  CLI::App* c_ft = app.add_subcommand("finetune", "residual adapter fine-tuning");
  CLI::App* c_eval = app.add_subcommand("evaluate", "few-shot meta-test");
  CLI::App* c_theory = app.add_subcommand("verify-theory",
                                          "paired subset/full risk estimates");
  CLI::App* c_rate = app.add_subcommand("rate-study",
                                        "risk vs number of tasks");
  CLI::App* c_dom = app.add_subcommand("domains", "co-occurrence components");
  CLI::App* c_pipe = app.add_subcommand("pipeline", "full training pipeline");
  for (CLI::App* sub : {c_sim, c_infer, c_pre, c_ft, c_eval, c_theory, c_rate,
                        c_dom, c_pipe})
    add_common(sub);
  for (CLI::App* sub : {c_infer, c_ft, c_eval, c_dom})
    sub->add_option("--embedding", embedding_path, "embedding CSV");
  for (CLI::App* sub : {c_eval, c_theory})
    sub->add_option("--classifier", classifier_path, "classifier CSV");
  c_theory->add_flag("--zero-w", zero_w, "score the all-zero classifier");
  c_rate->add_option("--t-grid", t_grid_str, "comma-separated task counts");
  c_rate->add_option("--seeds", seeds, "replicates per grid point");
  c_pipe->add_flag("--resume", resume, "reuse existing stage artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  CLI::App* sub = app.get_subcommands().front();

  try {
    json base = to_json(RunConfig{});
    if (sub->count("--config")) {
      require_file(config_path, "--config");
      std::ifstream f(config_path);
      json user;
      try {
        user = json::parse(f);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("cannot parse ") + config_path + ": " +
                          e.what());
      }
      if (!user.is_object()) throw ConfigError("config root must be an object");
      check_keys(user, base, "");
      merge(base, user);
    }
    RunConfig cfg = parse_config(base);
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--out")) cfg.out = out_dir;
    if (sub->count("--jobs")) cfg.jobs = jobs;
    if (sub->count("--q")) cfg.q = q;
    if (sub->count("--v-init")) cfg.v_init = v_init;
    if (sub->count("--rotate")) cfg.rotate = true;
    if (sub->count("--draws")) cfg.eval_draws = draws;
    if (sub->count("--builder")) cfg.builder = builder;
    if (sub->count("--tasks-csv")) {
      cfg.data.source = "csv";
      cfg.data.tasks_csv = tasks_csv;
    }
    validate_config(cfg);
    fs::create_directories(cfg.out);

    json results;
    if (sub == c_sim) results = cmd_simulate(cfg);
    else if (sub == c_infer) results = cmd_infer_labels(cfg, embedding_path);
    else if (sub == c_pre) results = cmd_pretrain(cfg);
    else if (sub == c_ft) results = cmd_finetune(cfg, embedding_path);
    else if (sub == c_eval) results = cmd_evaluate(cfg, embedding_path, classifier_path);
    else if (sub == c_theory) results = cmd_verify_theory(cfg, classifier_path, zero_w);
    else if (sub == c_rate) {
      std::vector<int> t_grid;
      std::stringstream ss(t_grid_str);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          t_grid.push_back(std::stoi(tok));
        } catch (const std::exception&) {
          throw ConfigError("bad --t-grid entry: " + tok);
        }
      }
      results = cmd_rate_study(cfg, t_grid, seeds);
    } else if (sub == c_dom) results = cmd_domains(cfg, embedding_path);
    else if (sub == c_pipe) results = cmd_pipeline(cfg, resume);
    write_report(cfg, sub->get_name(), results);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
