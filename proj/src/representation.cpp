#include "fsl/representation.hpp"

#include <cmath>
#include <stdexcept>

namespace fsl {

LinearEmbedding LinearEmbedding::identity(int dim) {
  return {Eigen::MatrixXd::Identity(dim, dim)};
}

LinearEmbedding LinearEmbedding::random_init(int out_dim, int in_dim,
                                             std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x7468);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  Eigen::MatrixXd theta(out_dim, in_dim);
  for (int i = 0; i < out_dim; ++i)
    for (int j = 0; j < in_dim; ++j) theta(i, j) = gauss(rng);
  return {std::move(theta)};
}

Eigen::VectorXd ResidualAdapter::operator()(const Eigen::VectorXd& z) const {
  return z + w2 * (w1 * z + b1).array().tanh().matrix() + b2;
}

ResidualAdapter ResidualAdapter::zero_init(int dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x61646170);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  ResidualAdapter a;
  a.w1.resize(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a.w1(i, j) = gauss(rng);
  a.w2 = Eigen::MatrixXd::Zero(dim, dim);
  a.b1 = Eigen::VectorXd::Zero(dim);
  a.b2 = Eigen::VectorXd::Zero(dim);
  return a;
}

Eigen::VectorXd EmbeddingModel::embed(const Eigen::VectorXd& x) const {
  Eigen::VectorXd z = base(x);
  return adapter ? (*adapter)(z) : z;
}

EmbeddingModel EmbeddingModel::identity(int dim) {
  return {LinearEmbedding::identity(dim), std::nullopt};
}

Eigen::VectorXd normalize(const Eigen::VectorXd& v) {
  double nrm = v.norm();
  if (nrm == 0.0) throw std::invalid_argument("normalize: zero vector");
  return v / nrm;
}

namespace {

struct Forward {
  Eigen::MatrixXd zs, zq;    // embedded support/query, bias column appended
  Eigen::MatrixXd ts, tq;    // scaled one-hot targets
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  Eigen::MatrixXd v;         // ridge solution, (p+1) x k
  Eigen::MatrixXd err;       // query predictions minus targets
  double loss = 0.0;
  int p = 0;
};

void check_task(const Task& task) {
  if (task.support.empty() || task.query.empty())
    throw std::invalid_argument("meta loss: task needs both support and query samples");
  if (task.ways < 2) throw std::invalid_argument("meta loss: task needs at least two classes");
}

Eigen::MatrixXd embed_matrix(const EmbeddingModel& model,
                             const std::vector<TaskRecord>& records,
                             bool add_bias) {
  int p = model.out_dim();
  Eigen::MatrixXd z(records.size(), p + (add_bias ? 1 : 0));
  for (std::size_t i = 0; i < records.size(); ++i) {
    z.row(i).head(p) = model.embed(records[i].x).transpose();
    if (add_bias) z(i, p) = 1.0;
  }
  return z;
}

Eigen::MatrixXd targets(const std::vector<TaskRecord>& records, int k,
                        const RidgeConfig& cfg) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(records.size(), k, cfg.target_shift);
  for (std::size_t i = 0; i < records.size(); ++i) t(i, records[i].label) += cfg.target_scale;
  return t;
}

Forward forward(const EmbeddingModel& model, const Task& task,
                const RidgeConfig& cfg) {
  check_task(task);
  if (cfg.lambda <= 0) throw std::invalid_argument("meta loss: lambda must be positive");
  Forward f;
  f.p = model.out_dim();
  f.zs = embed_matrix(model, task.support, cfg.add_bias);
  f.zq = embed_matrix(model, task.query, cfg.add_bias);
  f.ts = targets(task.support, task.ways, cfg);
  f.tq = targets(task.query, task.ways, cfg);
  int n = static_cast<int>(f.zs.rows());
  int cols = static_cast<int>(f.zs.cols());
  Eigen::MatrixXd a = f.zs.transpose() * f.zs / n;
  for (int i = 0; i < (cfg.add_bias ? cols - 1 : cols); ++i) a(i, i) += cfg.lambda;
  f.ldlt.compute(a);
  f.v = f.ldlt.solve(f.zs.transpose() * f.ts / n);
  f.err = f.zq * f.v - f.tq;
  f.loss = f.err.squaredNorm() / static_cast<double>(f.zq.rows());
  return f;
}

}  // namespace

double meta_loss(const EmbeddingModel& model, const Task& task,
                 const RidgeConfig& cfg) {
  return forward(model, task, cfg).loss;
}

MetaGradient meta_grad(const EmbeddingModel& model, const Task& task,
                       const RidgeConfig& cfg) {
  Forward f = forward(model, task, cfg);
  int n = static_cast<int>(f.zs.rows());
  int m = static_cast<int>(f.zq.rows());

  // Adjoints of the normal equations A V = B:
  //   dL/dB = A^{-1} G,  dL/dA = -(A^{-1} G) V^T,  G = dL/dV.
  Eigen::MatrixXd g_v = 2.0 / m * (f.zq.transpose() * f.err);
  Eigen::MatrixXd g_b = f.ldlt.solve(g_v);
  Eigen::MatrixXd g_a = -g_b * f.v.transpose();
  // A and B are sample averages over the support rows, so each support row
  // receives (G_A + G_A^T) z / n + G_B t / n; query rows get the direct term.
  Eigen::MatrixXd d_zs = (f.zs * (g_a + g_a.transpose()) + f.ts * g_b.transpose()) / n;
  Eigen::MatrixXd d_zq = 2.0 / m * (f.err * f.v.transpose());

  MetaGradient out;
  out.loss = f.loss;
  int p = f.p;
  int d = model.in_dim();
  out.d_theta = Eigen::MatrixXd::Zero(p, d);
  if (model.adapter) {
    const ResidualAdapter& ad = *model.adapter;
    AdapterGradient g{Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, p),
                      Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
    auto accumulate = [&](const std::vector<TaskRecord>& records,
                          const Eigen::MatrixXd& d_rows) {
      for (std::size_t i = 0; i < records.size(); ++i) {
        Eigen::VectorXd z = model.base(records[i].x);
        Eigen::VectorXd t = (ad.w1 * z + ad.b1).array().tanh().matrix();
        Eigen::VectorXd ds = d_rows.row(i).head(p).transpose();
        g.w2 += ds * t.transpose();
        g.b2 += ds;
        Eigen::VectorXd da =
            ((ad.w2.transpose() * ds).array() * (1.0 - t.array().square())).matrix();
        g.w1 += da * z.transpose();
        g.b1 += da;
        // Chain back through the residual connection for the base gradient.
        Eigen::VectorXd dz = ds + ad.w1.transpose() * da;
        out.d_theta += dz * records[i].x.transpose();
      }
    };
    accumulate(task.support, d_zs);
    accumulate(task.query, d_zq);
    out.d_adapter = std::move(g);
  } else {
    for (std::size_t i = 0; i < task.support.size(); ++i)
      out.d_theta += d_zs.row(i).head(p).transpose() * task.support[i].x.transpose();
    for (std::size_t i = 0; i < task.query.size(); ++i)
      out.d_theta += d_zq.row(i).head(p).transpose() * task.query[i].x.transpose();
  }
  return out;
}

MetaTrainResult meta_train_sim(const std::vector<Task>& tasks, int in_dim,
                               int out_dim, const MetaTrainConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("meta_train_sim: no tasks");
  if (cfg.steps < 0) throw std::invalid_argument("meta_train_sim: negative step count");
  MetaTrainResult result;
  result.embedding = LinearEmbedding::random_init(out_dim, in_dim, cfg.seed);
  result.loss_trace.reserve(cfg.steps);
  EmbeddingModel model{result.embedding, std::nullopt};
  for (int step = 0; step < cfg.steps; ++step) {
    const Task& task = tasks[step % tasks.size()];
    MetaGradient g = meta_grad(model, task, cfg.ridge);
    result.loss_trace.push_back(g.loss);
    model.base.theta -= cfg.learning_rate * g.d_theta;
  }
  result.embedding = std::move(model.base);
  return result;
}

FinetuneResult meta_finetune_residual(const LinearEmbedding& pre,
                                      const std::vector<Task>& tasks,
                                      const MetaTrainConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("meta_finetune_residual: no tasks");
  FinetuneResult result;
  result.model.base = pre;
  result.model.adapter =
      ResidualAdapter::zero_init(static_cast<int>(pre.theta.rows()), cfg.seed);
  result.loss_trace.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    const Task& task = tasks[step % tasks.size()];
    MetaGradient g = meta_grad(result.model, task, cfg.ridge);
    result.loss_trace.push_back(g.loss);
    ResidualAdapter& ad = *result.model.adapter;
    // The frozen base never moves; only adapter parameters descend.
    ad.w1 -= cfg.learning_rate * g.d_adapter->w1;
    ad.b1 -= cfg.learning_rate * g.d_adapter->b1;
    ad.w2 -= cfg.learning_rate * g.d_adapter->w2;
    ad.b2 -= cfg.learning_rate * g.d_adapter->b2;
  }
  return result;
}

}  // namespace fsl
