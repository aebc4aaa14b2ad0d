#pragma once

#include <Eigen/Dense>

#include <vector>

#include "fsl/embedding.hpp"
#include "fsl/taskgen.hpp"

namespace fsl {

struct LabeledVector {
  Eigen::VectorXd z;
  int label = 0;
};

struct RidgeConfig {
  double lambda = 1e-3;
  bool add_bias = true;
  // Affine map applied to one-hot targets; the default sends {0,1} to {-1,+1}.
  double target_scale = 2.0;
  double target_shift = -1.0;
};

enum class Provenance { ridge, gls_selected, logistic };

struct TaskClassifier {
  Eigen::MatrixXd weights;  // ways x (p, +1 column when has_bias)
  bool has_bias = false;
  Provenance provenance = Provenance::ridge;

  Eigen::VectorXd logits(const Eigen::VectorXd& z) const;
};

struct GlobalClassifier {
  Eigen::MatrixXd weights;  // C x (p, +1 column when has_bias)
  bool has_bias = false;
  std::vector<int> class_ids;  // row -> global label

  Eigen::VectorXd logits(const Eigen::VectorXd& z) const;
  int row_of(int class_id) const;  // -1 when the class is absent
};

/// Closed-form minimizer of mean ||W z - t||^2 + lambda ||W||_F^2 over the
/// support set, targets being scaled one-hot rows. The bias column, when
/// enabled, is excluded from the penalty.
TaskClassifier ridge_fit(const std::vector<LabeledVector>& support,
                         const RidgeConfig& cfg);

/// Task classifier assembled from the global rows named by task_classes, in
/// local-label order.
TaskClassifier gls_select(const GlobalClassifier& g,
                          const std::vector<int>& task_classes);

/// Cross-entropy with the softmax denominator restricted to `active`;
/// computed with max subtraction. Requires y to be listed in `active`.
double ce_loss(const Eigen::VectorXd& logits, int y,
               const std::vector<int>& active);

struct OptimizerConfig {
  double learning_rate = 0.5;
  int steps = 2000;
  double grad_tol = 1e-6;  // early exit when the gradient max-norm drops below
};

struct SoftmaxResult {
  GlobalClassifier classifier;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // objective before each step
  int steps_run = 0;
};

/// Full-batch gradient descent on mean cross-entropy over all classes plus
/// (reg/2) ||W||_F^2, bias column unpenalized, W initialized to zero.
/// Labels must lie in [0, C) where C defaults to the largest label plus one;
/// pass num_classes to widen C beyond the labels present.
SoftmaxResult softmax_train(const FlatDataset& ds, double reg,
                            const OptimizerConfig& opt, bool add_bias = true,
                            int num_classes = -1);

/// Same objective, but the dataset is first mapped through a linear embedding
/// which is updated alongside W by its exact gradient.
SoftmaxResult softmax_train_joint(const FlatDataset& ds,
                                  LinearEmbedding& embedding, double reg,
                                  const OptimizerConfig& opt,
                                  bool add_bias = true, int num_classes = -1);

enum class TaskBuilder { ridge, logistic, gls };

struct EvalConfig {
  bool normalize = true;  // unit-length embeddings before classification
  RidgeConfig ridge;
  double logistic_c_inv = 1.0;  // inverse regularization strength
  OptimizerConfig logistic_opt{0.5, 1000, 1e-8};
};

/// Fits a task classifier on the embedded support set and returns query
/// accuracy. Prediction ties break toward the lowest local label. The gls
/// builder takes rows from `gls` instead of fitting anything.
double evaluate_task(const Task& task, const EmbeddingModel& embedding,
                     TaskBuilder builder, const EvalConfig& cfg,
                     const GlobalClassifier* gls = nullptr);

/// Index of the largest entry, first one on ties.
int argmax_lowest(const Eigen::VectorXd& v);

}  // namespace fsl
