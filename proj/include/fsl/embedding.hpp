#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

namespace fsl {

struct LinearEmbedding {
  Eigen::MatrixXd theta;  // p x d

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return theta * x; }
  static LinearEmbedding identity(int dim);
  /// Entries i.i.d. normal with variance 1/in_dim.
  static LinearEmbedding random_init(int out_dim, int in_dim, std::uint64_t seed);
};

/// Two-layer residual head: z -> z + w2 * tanh(w1 z + b1) + b2.
struct ResidualAdapter {
  Eigen::MatrixXd w1, w2;  // p x p
  Eigen::VectorXd b1, b2;  // p

  Eigen::VectorXd operator()(const Eigen::VectorXd& z) const;
  /// w1 random, everything else zero, so the adapter starts as the identity.
  static ResidualAdapter zero_init(int dim, std::uint64_t seed);
};

/// Feature map shared across tasks: a linear base, optionally composed with a
/// residual adapter on the base features.
struct EmbeddingModel {
  LinearEmbedding base;
  std::optional<ResidualAdapter> adapter;

  Eigen::VectorXd embed(const Eigen::VectorXd& x) const;
  int out_dim() const { return static_cast<int>(base.theta.rows()); }
  int in_dim() const { return static_cast<int>(base.theta.cols()); }
  static EmbeddingModel identity(int dim);
};

/// Unit-length copy of v; rejects the zero vector.
Eigen::VectorXd normalize(const Eigen::VectorXd& v);

}  // namespace fsl
