#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "fsl/embedding.hpp"
#include "fsl/learners.hpp"
#include "fsl/taskgen.hpp"

namespace fsl {

struct MetaTrainConfig {
  double learning_rate = 0.01;
  int steps = 1000;
  RidgeConfig ridge;
  int eval_every = 0;  // 0 = silent; otherwise progress granularity for callers
  std::uint64_t seed = 0;
};

/// Episode loss: ridge-fit the embedded support set, then mean squared error
/// of the predictions against scaled one-hot targets on the embedded query.
double meta_loss(const EmbeddingModel& model, const Task& task,
                 const RidgeConfig& cfg);

struct AdapterGradient {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};

struct MetaGradient {
  Eigen::MatrixXd d_theta;  // gradient through the ridge solve
  std::optional<AdapterGradient> d_adapter;
  double loss = 0.0;
};

/// Exact gradient of meta_loss with respect to the base matrix and, when an
/// adapter is present, its parameters, obtained by adjoint differentiation
/// of the normal-equations solve.
MetaGradient meta_grad(const EmbeddingModel& model, const Task& task,
                       const RidgeConfig& cfg);

struct MetaTrainResult {
  LinearEmbedding embedding;
  std::vector<double> loss_trace;  // episode loss before each step
};

/// Gradient descent on the episode loss, one task per step in cyclic order,
/// starting from an i.i.d. normal base with variance 1/in_dim.
MetaTrainResult meta_train_sim(const std::vector<Task>& tasks, int in_dim,
                               int out_dim, const MetaTrainConfig& cfg);

struct FinetuneResult {
  EmbeddingModel model;
  std::vector<double> loss_trace;
};

/// Residual fine-tuning: freezes `pre` and trains only adapter parameters,
/// starting from the identity (zero second layer).
FinetuneResult meta_finetune_residual(const LinearEmbedding& pre,
                                      const std::vector<Task>& tasks,
                                      const MetaTrainConfig& cfg);

}  // namespace fsl
