#include "fsl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace fsl {

namespace {

// Design matrix from embedded samples, with the bias column of ones last.
Eigen::MatrixXd design_matrix(const std::vector<LabeledVector>& data,
                              bool add_bias) {
  int n = static_cast<int>(data.size());
  int p = static_cast<int>(data.front().z.size());
  Eigen::MatrixXd z(n, p + (add_bias ? 1 : 0));
  for (int i = 0; i < n; ++i) {
    z.row(i).head(p) = data[i].z.transpose();
    if (add_bias) z(i, p) = 1.0;
  }
  return z;
}

Eigen::MatrixXd scaled_one_hot(const std::vector<LabeledVector>& data, int k,
                               double scale, double shift) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(data.size(), k, shift);
  for (std::size_t i = 0; i < data.size(); ++i) t(i, data[i].label) += scale;
  return t;
}

double stable_softmax_rows(const Eigen::MatrixXd& logits,
                           const std::vector<int>& labels,
                           Eigen::MatrixXd& probs) {
  // Returns mean cross-entropy; probs receives the row-wise softmax.
  int n = static_cast<int>(logits.rows());
  probs.resize(logits.rows(), logits.cols());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
    double s = e.sum();
    probs.row(i) = (e / s).matrix();
    loss += -(logits(i, labels[i]) - mx) + std::log(s);
  }
  return loss / n;
}

struct DenseDataset {
  Eigen::MatrixXd x;        // N x d raw features
  std::vector<int> labels;  // dense 0..C-1
  int num_classes = 0;
};

DenseDataset check_dense(const FlatDataset& ds, int num_classes) {
  if (ds.samples.empty()) throw std::invalid_argument("softmax_train: empty dataset");
  DenseDataset out;
  int d = ds.dim();
  out.x.resize(ds.samples.size(), d);
  out.labels.reserve(ds.samples.size());
  std::unordered_set<int> present;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    if (!s.global_label) throw std::invalid_argument("softmax_train: sample without a global label");
    if (static_cast<int>(s.features.size()) != d)
      throw std::invalid_argument("softmax_train: inconsistent feature dimensions");
    out.x.row(i) = s.features.transpose();
    out.labels.push_back(*s.global_label);
    present.insert(*s.global_label);
  }
  if (present.size() < 2)
    throw std::invalid_argument("softmax_train: degenerate data, fewer than two classes present");
  int max_label = *std::max_element(out.labels.begin(), out.labels.end());
  int min_label = *std::min_element(out.labels.begin(), out.labels.end());
  if (min_label < 0) throw std::invalid_argument("softmax_train: negative class label");
  out.num_classes = (num_classes > 0) ? num_classes : max_label + 1;
  if (max_label >= out.num_classes)
    throw std::invalid_argument("softmax_train: label " + std::to_string(max_label) +
                                " outside the declared class range");
  return out;
}

// Shared full-batch descent loop; when theta is non-null the linear embedding
// is refreshed and updated each step alongside W.
SoftmaxResult softmax_descent(const DenseDataset& data, Eigen::MatrixXd* theta,
                              double reg, const OptimizerConfig& opt,
                              bool add_bias) {
  if (reg < 0) throw std::invalid_argument("softmax_train: negative regularization");
  int n = static_cast<int>(data.x.rows());
  int c = data.num_classes;
  int p = theta ? static_cast<int>(theta->rows()) : static_cast<int>(data.x.cols());
  int cols = p + (add_bias ? 1 : 0);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(c, cols);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, c);
  for (int i = 0; i < n; ++i) y(i, data.labels[i]) = 1.0;

  SoftmaxResult result;
  result.loss_trace.reserve(opt.steps);
  Eigen::MatrixXd z(n, cols), probs, grad_w, grad_theta;
  auto refresh = [&] {
    if (theta)
      z.leftCols(p) = data.x * theta->transpose();
    else
      z.leftCols(p) = data.x;
    if (add_bias) z.col(p).setOnes();
  };
  refresh();

  int step = 0;
  for (; step < opt.steps; ++step) {
    Eigen::MatrixXd logits = z * w.transpose();
    double loss = stable_softmax_rows(logits, data.labels, probs);
    loss += 0.5 * reg * w.leftCols(p).squaredNorm();
    result.loss_trace.push_back(loss);

    Eigen::MatrixXd delta = probs - y;  // N x C
    grad_w = delta.transpose() * z / n;
    grad_w.leftCols(p) += reg * w.leftCols(p);
    double gmax = grad_w.cwiseAbs().maxCoeff();
    if (theta) {
      grad_theta = (delta * w.leftCols(p)).transpose() * data.x / n;
      gmax = std::max(gmax, grad_theta.cwiseAbs().maxCoeff());
    }
    if (gmax < opt.grad_tol) break;
    w -= opt.learning_rate * grad_w;
    if (theta) {
      *theta -= opt.learning_rate * grad_theta;
      refresh();
    }
  }
  result.steps_run = step;

  Eigen::MatrixXd logits = z * w.transpose();
  result.final_loss = stable_softmax_rows(logits, data.labels, probs) +
                      0.5 * reg * w.leftCols(p).squaredNorm();
  result.classifier.weights = std::move(w);
  result.classifier.has_bias = add_bias;
  result.classifier.class_ids.resize(c);
  std::iota(result.classifier.class_ids.begin(), result.classifier.class_ids.end(), 0);
  return result;
}

}  // namespace

Eigen::VectorXd TaskClassifier::logits(const Eigen::VectorXd& z) const {
  if (!has_bias) return weights * z;
  int p = static_cast<int>(weights.cols()) - 1;
  return weights.leftCols(p) * z + weights.col(p);
}

Eigen::VectorXd GlobalClassifier::logits(const Eigen::VectorXd& z) const {
  if (!has_bias) return weights * z;
  int p = static_cast<int>(weights.cols()) - 1;
  return weights.leftCols(p) * z + weights.col(p);
}

int GlobalClassifier::row_of(int class_id) const {
  for (std::size_t r = 0; r < class_ids.size(); ++r)
    if (class_ids[r] == class_id) return static_cast<int>(r);
  return -1;
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

TaskClassifier ridge_fit(const std::vector<LabeledVector>& support,
                         const RidgeConfig& cfg) {
  if (support.empty()) throw std::invalid_argument("ridge_fit: empty support set");
  if (cfg.lambda <= 0) throw std::invalid_argument("ridge_fit: lambda must be positive");
  int k = 0;
  for (const auto& s : support) {
    if (s.label < 0) throw std::invalid_argument("ridge_fit: negative label");
    k = std::max(k, s.label + 1);
  }
  std::vector<int> counts(k, 0);
  for (const auto& s : support) ++counts[s.label];
  for (int j = 0; j < k; ++j)
    if (counts[j] == 0)
      throw std::invalid_argument("ridge_fit: no support samples for label " + std::to_string(j));
  int p = static_cast<int>(support.front().z.size());
  for (const auto& s : support)
    if (static_cast<int>(s.z.size()) != p)
      throw std::invalid_argument("ridge_fit: inconsistent embedding dimensions");

  int n = static_cast<int>(support.size());
  Eigen::MatrixXd z = design_matrix(support, cfg.add_bias);
  Eigen::MatrixXd t = scaled_one_hot(support, k, cfg.target_scale, cfg.target_shift);
  int cols = static_cast<int>(z.cols());
  Eigen::MatrixXd a = z.transpose() * z / n;
  // The bias coordinate carries no penalty.
  for (int i = 0; i < (cfg.add_bias ? cols - 1 : cols); ++i) a(i, i) += cfg.lambda;
  Eigen::MatrixXd b = z.transpose() * t / n;

  TaskClassifier clf;
  clf.weights = a.ldlt().solve(b).transpose();
  clf.has_bias = cfg.add_bias;
  clf.provenance = Provenance::ridge;
  return clf;
}

TaskClassifier gls_select(const GlobalClassifier& g,
                          const std::vector<int>& task_classes) {
  if (task_classes.empty()) throw std::invalid_argument("gls_select: empty class list");
  std::unordered_set<int> seen;
  for (int c : task_classes)
    if (!seen.insert(c).second)
      throw std::invalid_argument("gls_select: class " + std::to_string(c) + " listed twice");
  TaskClassifier clf;
  clf.weights.resize(task_classes.size(), g.weights.cols());
  for (std::size_t j = 0; j < task_classes.size(); ++j) {
    int row = g.row_of(task_classes[j]);
    if (row < 0)
      throw std::invalid_argument("gls_select: class " + std::to_string(task_classes[j]) +
                                  " missing from the global classifier");
    clf.weights.row(j) = g.weights.row(row);
  }
  clf.has_bias = g.has_bias;
  clf.provenance = Provenance::gls_selected;
  return clf;
}

double ce_loss(const Eigen::VectorXd& logits, int y,
               const std::vector<int>& active) {
  if (active.empty()) throw std::invalid_argument("ce_loss: empty active set");
  bool found = false;
  double mx = -std::numeric_limits<double>::infinity();
  for (int z : active) {
    if (z < 0 || z >= logits.size())
      throw std::invalid_argument("ce_loss: active index " + std::to_string(z) + " out of range");
    found = found || (z == y);
    mx = std::max(mx, logits[z]);
  }
  if (!found) throw std::invalid_argument("ce_loss: true label not in the active set");
  double s = 0.0;
  for (int z : active) s += std::exp(logits[z] - mx);
  return -(logits[y] - mx) + std::log(s);
}

SoftmaxResult softmax_train(const FlatDataset& ds, double reg,
                            const OptimizerConfig& opt, bool add_bias,
                            int num_classes) {
  DenseDataset data = check_dense(ds, num_classes);
  return softmax_descent(data, nullptr, reg, opt, add_bias);
}

SoftmaxResult softmax_train_joint(const FlatDataset& ds,
                                  LinearEmbedding& embedding, double reg,
                                  const OptimizerConfig& opt, bool add_bias,
                                  int num_classes) {
  DenseDataset data = check_dense(ds, num_classes);
  if (embedding.theta.cols() != data.x.cols())
    throw std::invalid_argument("softmax_train: embedding input dimension mismatch");
  return softmax_descent(data, &embedding.theta, reg, opt, add_bias);
}

namespace {

std::vector<LabeledVector> embed_records(const std::vector<TaskRecord>& records,
                                         const EmbeddingModel& embedding,
                                         bool unit_norm) {
  std::vector<LabeledVector> out;
  out.reserve(records.size());
  for (const TaskRecord& r : records) {
    Eigen::VectorXd z = embedding.embed(r.x);
    if (unit_norm) {
      double nrm = z.norm();
      if (nrm > 0) z /= nrm;
    }
    out.push_back({std::move(z), r.label});
  }
  return out;
}

TaskClassifier logistic_fit(const std::vector<LabeledVector>& support, int k,
                            double c_inv, const OptimizerConfig& opt) {
  if (c_inv <= 0) throw std::invalid_argument("evaluate_task: inverse regularization must be positive");
  int n = static_cast<int>(support.size());
  int p = static_cast<int>(support.front().z.size());
  Eigen::MatrixXd z = design_matrix(support, true);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = support[i].label;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, k);
  for (int i = 0; i < n; ++i) y(i, labels[i]) = 1.0;

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, p + 1);
  Eigen::MatrixXd probs;
  for (int step = 0; step < opt.steps; ++step) {
    Eigen::MatrixXd logits = z * w.transpose();
    stable_softmax_rows(logits, labels, probs);
    Eigen::MatrixXd grad = (probs - y).transpose() * z / n;
    grad.leftCols(p) += w.leftCols(p) / c_inv;
    if (grad.cwiseAbs().maxCoeff() < opt.grad_tol) break;
    w -= opt.learning_rate * grad;
  }
  TaskClassifier clf;
  clf.weights = std::move(w);
  clf.has_bias = true;
  clf.provenance = Provenance::logistic;
  return clf;
}

}  // namespace

double evaluate_task(const Task& task, const EmbeddingModel& embedding,
                     TaskBuilder builder, const EvalConfig& cfg,
                     const GlobalClassifier* gls) {
  if (task.query.empty()) throw std::invalid_argument("evaluate_task: task has no query set");
  if (task.support.empty() && builder != TaskBuilder::gls)
    throw std::invalid_argument("evaluate_task: task has no support set");

  TaskClassifier clf;
  switch (builder) {
    case TaskBuilder::ridge:
      clf = ridge_fit(embed_records(task.support, embedding, cfg.normalize), cfg.ridge);
      break;
    case TaskBuilder::logistic:
      clf = logistic_fit(embed_records(task.support, embedding, cfg.normalize),
                         task.ways, cfg.logistic_c_inv, cfg.logistic_opt);
      break;
    case TaskBuilder::gls: {
      if (!gls) throw std::invalid_argument("evaluate_task: gls builder needs a global classifier");
      if (!task.local_to_global)
        throw std::invalid_argument("evaluate_task: task carries no global class ids");
      clf = gls_select(*gls, *task.local_to_global);
      break;
    }
  }

  int correct = 0;
  for (const LabeledVector& q : embed_records(task.query, embedding, cfg.normalize))
    if (argmax_lowest(clf.logits(q.z)) == q.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(task.query.size());
}

}  // namespace fsl
