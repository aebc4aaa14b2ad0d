#pragma once

#include <string>
#include <vector>

#include "fsl/augmentation.hpp"
#include "fsl/embedding.hpp"
#include "fsl/label_inference.hpp"
#include "fsl/learners.hpp"
#include "fsl/taskgen.hpp"

// CSV serialization. Floats are written in shortest round-trip form, so
// save followed by load reproduces every value exactly. Parse errors report
// the file name and 1-based line number.

namespace fsl {

// task_id,sample_id,role,local_label,global_label,f0,...  role is
// "support" or "query"; global_label is empty when unknown.
void save_tasks_csv(const std::string& path, const std::vector<Task>& tasks);
std::vector<Task> load_tasks_csv(const std::string& path);

// sample_id,global_label,f0,...
void save_flat_csv(const std::string& path, const FlatDataset& ds);
FlatDataset load_flat_csv(const std::string& path);

// class_id,w0,...,w{p-1}[,bias]
void save_classifier_csv(const std::string& path, const GlobalClassifier& g);
GlobalClassifier load_classifier_csv(const std::string& path);

// One block per matrix: "matrix,<name>,<rows>,<cols>" followed by the rows.
// Adapter blocks are present only for composed models.
void save_embedding_csv(const std::string& path, const EmbeddingModel& model);
EmbeddingModel load_embedding_csv(const std::string& path);

// cluster_id,sample_count,c0,...
void save_clusters_csv(const std::string& path, const ClusterState& state);
ClusterState load_clusters_csv(const std::string& path);

// task_id,local_label,cluster_id with cluster_id -1 on discarded tasks.
void save_assignment_csv(const std::string& path, const LabelAssignment& a,
                         int ways);
LabelAssignment load_assignment_csv(const std::string& path);

// sample_id,global_label,h,w,g00,g01,... row-major.
void save_grid_csv(const std::string& path, const GridDataset& ds);
GridDataset load_grid_csv(const std::string& path);

std::string format_double(double v);

}  // namespace fsl
