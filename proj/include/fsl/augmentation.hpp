#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "fsl/taskgen.hpp"

namespace fsl {

struct GridSample {
  std::int64_t id = 0;
  int label = 0;
  Eigen::MatrixXd grid;  // h x w
};

struct GridDataset {
  std::vector<GridSample> samples;
  int num_classes = 0;
  bool augmented = false;  // guards against stacking the augmentation twice
};

/// Clockwise quarter turn: out(i, j) = in(h-1-j, i), realized as transpose
/// followed by a horizontal flip. Four applications give the identity.
Eigen::MatrixXd rotate90(const Eigen::MatrixXd& grid);

/// Expands the dataset with the 90/180/270 degree rotations of every sample.
/// Rotation r of class c becomes class c + C * r, so both the sample count
/// and the class count quadruple. Refuses an already augmented dataset.
GridDataset augment_rotations(const GridDataset& ds);

/// Row-major vectorization into a flat labeled dataset.
FlatDataset to_flat(const GridDataset& ds);

/// Per-class random grid patterns (unit Frobenius norm times `separation`)
/// plus Gaussian pixel noise.
GridDataset make_planted_grid(int num_classes, int per_class, int rows,
                              int cols, double noise_std, double separation,
                              std::uint64_t seed);

}  // namespace fsl
