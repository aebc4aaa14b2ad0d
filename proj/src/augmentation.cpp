#include "fsl/augmentation.hpp"

#include <stdexcept>
#include <string>

namespace fsl {

Eigen::MatrixXd rotate90(const Eigen::MatrixXd& grid) {
  if (grid.size() == 0) throw std::invalid_argument("rotate90: empty grid");
  return grid.transpose().rowwise().reverse();
}

GridDataset augment_rotations(const GridDataset& ds) {
  if (ds.augmented)
    throw std::invalid_argument("augment_rotations: dataset is already augmented");
  if (ds.samples.empty()) throw std::invalid_argument("augment_rotations: empty dataset");
  if (ds.num_classes < 1) throw std::invalid_argument("augment_rotations: class count not set");
  std::int64_t id_stride = 0;
  for (const GridSample& s : ds.samples) {
    if (s.label < 0 || s.label >= ds.num_classes)
      throw std::invalid_argument("augment_rotations: label " + std::to_string(s.label) +
                                  " outside 0.." + std::to_string(ds.num_classes - 1));
    id_stride = std::max(id_stride, s.id + 1);
  }

  GridDataset out;
  out.num_classes = 4 * ds.num_classes;
  out.augmented = true;
  out.samples.reserve(4 * ds.samples.size());
  for (int r = 0; r < 4; ++r) {
    for (const GridSample& s : ds.samples) {
      GridSample rotated;
      rotated.id = s.id + id_stride * r;  // fresh ids for the new copies
      rotated.label = s.label + ds.num_classes * r;
      rotated.grid = s.grid;
      for (int turn = 0; turn < r; ++turn) rotated.grid = rotate90(rotated.grid);
      out.samples.push_back(std::move(rotated));
    }
  }
  return out;
}

FlatDataset to_flat(const GridDataset& ds) {
  FlatDataset out;
  out.samples.reserve(ds.samples.size());
  for (const GridSample& s : ds.samples) {
    Sample flat;
    flat.id = s.id;
    flat.global_label = s.label;
    flat.features.resize(s.grid.size());
    int idx = 0;
    for (int i = 0; i < s.grid.rows(); ++i)
      for (int j = 0; j < s.grid.cols(); ++j) flat.features[idx++] = s.grid(i, j);
    out.samples.push_back(std::move(flat));
  }
  out.c_effective = ds.num_classes;
  return out;
}

GridDataset make_planted_grid(int num_classes, int per_class, int rows,
                              int cols, double noise_std, double separation,
                              std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1 || rows < 1 || cols < 1)
    throw std::invalid_argument("make_planted_grid: sizes must be positive");
  GridDataset out;
  out.num_classes = num_classes;
  Rng rng = make_rng(seed, 0x67726964);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::MatrixXd> patterns;
  patterns.reserve(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    Eigen::MatrixXd pat(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) pat(i, j) = gauss(rng);
    pat *= separation / pat.norm();
    patterns.push_back(std::move(pat));
  }
  std::int64_t next_id = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      GridSample sample;
      sample.id = next_id++;
      sample.label = c;
      sample.grid = patterns[c];
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) sample.grid(i, j) += noise_std * gauss(rng);
      out.samples.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace fsl
