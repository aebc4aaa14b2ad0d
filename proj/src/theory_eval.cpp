#include "fsl/theory_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fsl/parallel.hpp"
#include "fsl/representation.hpp"

namespace fsl {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Standard error of the mean, sample standard deviation over sqrt(n).
double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) /
                   static_cast<double>(v.size()));
}

RiskEstimate estimate_from(const std::vector<double>& per_draw) {
  return {mean_of(per_draw), se_of(per_draw), static_cast<int>(per_draw.size())};
}

struct PairedDraws {
  std::vector<double> gls, pretrain;  // per-draw query means
  long long pointwise_violations = 0;
  long long samples = 0;
};

// One stream of fresh episodes scored under both the subset softmax (rows of
// the task's own classes) and the full softmax, pointwise on each query.
PairedDraws paired_draws(const MetaDistribution& md, const GlobalClassifier& w,
                         const EmbeddingModel& embedding, int draws,
                         std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("risk estimate: draw count must be positive");
  md.validate();
  std::vector<int> all_rows(md.num_classes);
  for (int c = 0; c < md.num_classes; ++c) {
    all_rows[c] = w.row_of(c);
    if (all_rows[c] < 0)
      throw std::invalid_argument("risk estimate: classifier does not cover every class");
  }
  PairedDraws out;
  out.gls.reserve(draws);
  out.pretrain.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    Rng rng = make_rng(seed, 0x64726177 + static_cast<std::uint64_t>(i));
    Task task = sample_task(md, rng);
    const std::vector<int>& ltg = *task.local_to_global;
    std::vector<int> active_rows(ltg.size());
    for (std::size_t j = 0; j < ltg.size(); ++j) active_rows[j] = all_rows[ltg[j]];
    double gls_sum = 0.0, pre_sum = 0.0;
    for (const TaskRecord& q : task.query) {
      Eigen::VectorXd logits = w.logits(embedding.embed(q.x));
      int y_row = all_rows[ltg[q.label]];
      double gl = ce_loss(logits, y_row, active_rows);
      double pl = ce_loss(logits, y_row, all_rows);
      // Rounding in the two summation orders can split mathematically equal
      // losses by one ulp; only count real crossings.
      if (gl > pl + 1e-12 * std::max(1.0, std::abs(pl))) ++out.pointwise_violations;
      gls_sum += gl;
      pre_sum += pl;
      ++out.samples;
    }
    out.gls.push_back(gls_sum / task.query.size());
    out.pretrain.push_back(pre_sum / task.query.size());
  }
  return out;
}

}  // namespace

RiskEstimate estimate_gls_risk(const MetaDistribution& md,
                               const GlobalClassifier& w,
                               const EmbeddingModel& embedding, int draws,
                               std::uint64_t seed) {
  return estimate_from(paired_draws(md, w, embedding, draws, seed).gls);
}

RiskEstimate estimate_pretrain_risk(const MetaDistribution& md,
                                    const GlobalClassifier& w,
                                    const EmbeddingModel& embedding, int draws,
                                    std::uint64_t seed) {
  return estimate_from(paired_draws(md, w, embedding, draws, seed).pretrain);
}

RiskOrderingReport verify_risk_ordering(const MetaDistribution& md,
                               const GlobalClassifier& w,
                               const EmbeddingModel& embedding, int draws,
                               std::uint64_t seed) {
  PairedDraws pd = paired_draws(md, w, embedding, draws, seed);
  RiskOrderingReport report;
  report.gls = estimate_from(pd.gls);
  report.pretrain = estimate_from(pd.pretrain);
  report.pointwise_violations = pd.pointwise_violations;
  report.paired_samples = pd.samples;
  double combined = std::sqrt(report.gls.std_error * report.gls.std_error +
                              report.pretrain.std_error * report.pretrain.std_error);
  report.holds = report.gls.value <= report.pretrain.value + 3.0 * combined;
  return report;
}

namespace {

struct EpisodicModel {
  GlobalClassifier w;
  LinearEmbedding theta;
};

// Joint full-batch descent on the mean subset-softmax query loss over all
// tasks, so the episodic trainer differs from the flattened one only in its
// objective. A classifier row moves only through tasks that contain its class.
EpisodicModel train_episodic_subset(const std::vector<Task>& tasks, int num_classes,
                                    int in_dim, const LinearEmbedding& init,
                                    double reg, const OptimizerConfig& opt,
                                    bool add_bias) {
  for (const Task& task : tasks)
    if (!task.local_to_global)
      throw std::invalid_argument("rate study: episodic training needs global class ids");
  EpisodicModel model;
  model.theta = init;
  int p = static_cast<int>(init.theta.rows());
  int cols = p + (add_bias ? 1 : 0);
  model.w.weights = Eigen::MatrixXd::Zero(num_classes, cols);
  model.w.has_bias = add_bias;
  model.w.class_ids.resize(num_classes);
  std::iota(model.w.class_ids.begin(), model.w.class_ids.end(), 0);

  double t_count = static_cast<double>(tasks.size());
  for (int step = 0; step < opt.steps; ++step) {
    Eigen::MatrixXd grad_w = Eigen::MatrixXd::Zero(num_classes, cols);
    Eigen::MatrixXd grad_theta = Eigen::MatrixXd::Zero(p, in_dim);
    for (const Task& task : tasks) {
      const std::vector<int>& ltg = *task.local_to_global;
      int k = task.ways;
      double scale = static_cast<double>(task.query.size()) * t_count;
      for (const TaskRecord& q : task.query) {
        Eigen::VectorXd z = model.theta.theta * q.x;
        Eigen::VectorXd logits(k);
        for (int j = 0; j < k; ++j) {
          logits[j] = model.w.weights.row(ltg[j]).head(p).dot(z);
          if (add_bias) logits[j] += model.w.weights(ltg[j], p);
        }
        double mx = logits.maxCoeff();
        Eigen::ArrayXd e = (logits.array() - mx).exp();
        Eigen::ArrayXd probs = e / e.sum();
        Eigen::VectorXd dz = Eigen::VectorXd::Zero(p);
        for (int j = 0; j < k; ++j) {
          double coef = (probs[j] - (j == q.label ? 1.0 : 0.0)) / scale;
          grad_w.row(ltg[j]).head(p) += coef * z.transpose();
          if (add_bias) grad_w(ltg[j], p) += coef;
          dz += coef * model.w.weights.row(ltg[j]).head(p).transpose();
        }
        grad_theta += dz * q.x.transpose();
      }
    }
    grad_w.leftCols(p) += reg * model.w.weights.leftCols(p);
    double gnorm = std::max(grad_w.cwiseAbs().maxCoeff(), grad_theta.cwiseAbs().maxCoeff());
    if (gnorm < opt.grad_tol) break;
    model.w.weights -= opt.learning_rate * grad_w;
    model.theta.theta -= opt.learning_rate * grad_theta;
  }
  return model;
}

}  // namespace

std::vector<RateStudyRow> rate_study(const MetaDistribution& md,
                                     const std::vector<int>& t_grid, int seeds,
                                     const RateStudyConfig& cfg) {
  if (t_grid.empty()) throw std::invalid_argument("rate_study: empty task grid");
  if (seeds < 1) throw std::invalid_argument("rate_study: need at least one replicate");
  md.validate();
  int d = md.dim();
  int p = cfg.embed_dim > 0 ? cfg.embed_dim : d;

  std::vector<RateStudyRow> rows;
  rows.reserve(t_grid.size());
  for (int t : t_grid) {
    if (t < 1) throw std::invalid_argument("rate_study: task counts must be positive");
    std::vector<double> episodic_vals, flattened_vals;
    for (int rep = 0; rep < seeds; ++rep) {
      std::uint64_t base = mix_seed(cfg.seed, static_cast<std::uint64_t>(t) * 1009 + rep);
      Rng rng = make_rng(base, 0x74736b);
      std::vector<Task> tasks = sample_meta_training_set(md, t, rng);

      // Both sides share the same embedding initialization and optimizer.
      LinearEmbedding init = LinearEmbedding::random_init(p, d, mix_seed(base, 1));
      EpisodicModel episodic = train_episodic_subset(tasks, md.num_classes, d, init,
                                                     cfg.reg, cfg.opt, cfg.add_bias);
      FlatDataset flat = flatten(tasks);
      LinearEmbedding flat_theta = init;
      SoftmaxResult pre = softmax_train_joint(flat, flat_theta, cfg.reg, cfg.opt,
                                              cfg.add_bias, md.num_classes);

      std::uint64_t eval_seed = mix_seed(base, 2);
      episodic_vals.push_back(
          estimate_gls_risk(md, episodic.w, EmbeddingModel{episodic.theta, std::nullopt},
                            cfg.eval_draws, eval_seed)
              .value);
      flattened_vals.push_back(
          estimate_gls_risk(md, pre.classifier, EmbeddingModel{flat_theta, std::nullopt},
                            cfg.eval_draws, eval_seed)
              .value);
    }
    RateStudyRow row;
    row.num_tasks = t;
    row.num_samples = static_cast<long long>(t) * md.task_size();
    row.gls_risk = {mean_of(episodic_vals), se_of(episodic_vals), cfg.eval_draws};
    row.pretrain_risk = {mean_of(flattened_vals), se_of(flattened_vals), cfg.eval_draws};
    row.seeds_averaged = seeds;
    rows.push_back(row);
  }
  return rows;
}

MetaTestReport meta_test(const std::vector<Task>& tasks,
                         const EmbeddingModel& embedding, TaskBuilder builder,
                         const EvalConfig& cfg, const GlobalClassifier* gls,
                         int jobs) {
  if (tasks.empty()) throw std::invalid_argument("meta_test: no tasks");
  MetaTestReport report;
  report.num_tasks = static_cast<int>(tasks.size());
  report.per_task.assign(tasks.size(), 0.0);
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    report.per_task[i] = evaluate_task(tasks[i], embedding, builder, cfg, gls);
  });
  report.mean_accuracy = mean_of(report.per_task);
  if (tasks.size() >= 2) report.ci95_half_width = 1.96 * se_of(report.per_task);
  return report;
}

}  // namespace fsl
