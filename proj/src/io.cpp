#include "fsl/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace fsl {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line,
                       const std::string& what) {
  throw std::runtime_error(path + " line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& s, const std::string& path, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(path, line, "cannot parse '" + s + "' as a number");
  return v;
}

long long parse_int(const std::string& s, const std::string& path, std::size_t line) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(path, line, "cannot parse '" + s + "' as an integer");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::vector<std::string> read_lines(std::ifstream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void save_tasks_csv(const std::string& path, const std::vector<Task>& tasks) {
  std::ofstream out = open_out(path);
  int d = 0;
  for (const Task& t : tasks) {
    if (!t.support.empty()) d = static_cast<int>(t.support.front().x.size());
    else if (!t.query.empty()) d = static_cast<int>(t.query.front().x.size());
    if (d > 0) break;
  }
  out << "task_id,sample_id,role,local_label,global_label";
  for (int i = 0; i < d; ++i) out << ",f" << i;
  out << "\n";
  auto write = [&](const Task& t, const TaskRecord& r, const char* role) {
    out << t.task_id << ',' << r.sample_id << ',' << role << ',' << r.label << ',';
    if (t.local_to_global) out << (*t.local_to_global)[r.label];
    for (int i = 0; i < r.x.size(); ++i) out << ',' << format_double(r.x[i]);
    out << "\n";
  };
  for (const Task& t : tasks) {
    for (const TaskRecord& r : t.support) write(t, r, "support");
    for (const TaskRecord& r : t.query) write(t, r, "query");
  }
}

std::vector<Task> load_tasks_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) fail(path, 1, "empty file, header expected");
  std::vector<std::string> header = split(lines[0]);
  if (header.size() < 6 || header[0] != "task_id" || header[1] != "sample_id" ||
      header[2] != "role" || header[3] != "local_label" || header[4] != "global_label")
    fail(path, 1, "unexpected header for an episode file");
  int d = static_cast<int>(header.size()) - 5;

  struct Row {
    std::size_t line;
    TaskRecord record;
    bool is_support;
    std::optional<int> global;
  };
  std::map<long long, std::vector<Row>> by_task;
  std::vector<long long> task_order;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) fail(path, li + 1, "blank line inside the table");
    std::vector<std::string> f = split(lines[li]);
    if (static_cast<int>(f.size()) != d + 5)
      fail(path, li + 1, "expected " + std::to_string(d + 5) + " fields, found " +
                             std::to_string(f.size()));
    Row row;
    row.line = li + 1;
    long long task_id = parse_int(f[0], path, li + 1);
    row.record.sample_id = parse_int(f[1], path, li + 1);
    if (f[2] == "support") row.is_support = true;
    else if (f[2] == "query") row.is_support = false;
    else fail(path, li + 1, "role must be 'support' or 'query', found '" + f[2] + "'");
    row.record.label = static_cast<int>(parse_int(f[3], path, li + 1));
    if (row.record.label < 0) fail(path, li + 1, "negative local label");
    if (!f[4].empty()) row.global = static_cast<int>(parse_int(f[4], path, li + 1));
    row.record.x.resize(d);
    for (int i = 0; i < d; ++i) row.record.x[i] = parse_double(f[5 + i], path, li + 1);
    if (by_task.find(task_id) == by_task.end()) task_order.push_back(task_id);
    by_task[task_id].push_back(std::move(row));
  }

  std::vector<Task> tasks;
  tasks.reserve(task_order.size());
  for (long long id : task_order) {
    const std::vector<Row>& rows = by_task.at(id);
    Task task;
    task.task_id = static_cast<int>(id);
    int ways = 0;
    for (const Row& r : rows) ways = std::max(ways, r.record.label + 1);
    task.ways = ways;
    std::vector<bool> seen(ways, false);
    std::vector<std::optional<int>> global_of(ways);
    bool any_global = false, all_global = true;
    for (const Row& r : rows) {
      seen[r.record.label] = true;
      if (r.global) {
        any_global = true;
        if (global_of[r.record.label] && *global_of[r.record.label] != *r.global)
          fail(path, r.line, "conflicting global labels for local label " +
                                 std::to_string(r.record.label));
        global_of[r.record.label] = r.global;
      } else {
        all_global = false;
      }
      (r.is_support ? task.support : task.query).push_back(r.record);
    }
    for (int j = 0; j < ways; ++j)
      if (!seen[j])
        fail(path, rows.front().line, "task " + std::to_string(id) +
                                          " local labels are not dense, missing " +
                                          std::to_string(j));
    if (any_global) {
      if (!all_global)
        fail(path, rows.front().line,
             "task " + std::to_string(id) + " mixes labeled and unlabeled rows");
      std::vector<int> ltg(ways);
      for (int j = 0; j < ways; ++j) ltg[j] = *global_of[j];
      task.local_to_global = std::move(ltg);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

void save_flat_csv(const std::string& path, const FlatDataset& ds) {
  std::ofstream out = open_out(path);
  int d = ds.dim();
  out << "sample_id,global_label";
  for (int i = 0; i < d; ++i) out << ",f" << i;
  out << "\n";
  for (const Sample& s : ds.samples) {
    out << s.id << ',';
    if (s.global_label) out << *s.global_label;
    for (int i = 0; i < s.features.size(); ++i) out << ',' << format_double(s.features[i]);
    out << "\n";
  }
}

FlatDataset load_flat_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) fail(path, 1, "empty file, header expected");
  std::vector<std::string> header = split(lines[0]);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "global_label")
    fail(path, 1, "unexpected header for a flat dataset file");
  int d = static_cast<int>(header.size()) - 2;
  FlatDataset ds;
  std::map<int, bool> labels;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> f = split(lines[li]);
    if (static_cast<int>(f.size()) != d + 2)
      fail(path, li + 1, "expected " + std::to_string(d + 2) + " fields, found " +
                             std::to_string(f.size()));
    Sample s;
    s.id = parse_int(f[0], path, li + 1);
    if (!f[1].empty()) {
      s.global_label = static_cast<int>(parse_int(f[1], path, li + 1));
      labels[*s.global_label] = true;
    }
    s.features.resize(d);
    for (int i = 0; i < d; ++i) s.features[i] = parse_double(f[2 + i], path, li + 1);
    ds.samples.push_back(std::move(s));
  }
  ds.c_effective = static_cast<int>(labels.size());
  return ds;
}

void save_classifier_csv(const std::string& path, const GlobalClassifier& g) {
  std::ofstream out = open_out(path);
  int cols = static_cast<int>(g.weights.cols());
  int p = g.has_bias ? cols - 1 : cols;
  out << "class_id";
  for (int i = 0; i < p; ++i) out << ",w" << i;
  if (g.has_bias) out << ",bias";
  out << "\n";
  for (int r = 0; r < g.weights.rows(); ++r) {
    out << g.class_ids[r];
    for (int i = 0; i < cols; ++i) out << ',' << format_double(g.weights(r, i));
    out << "\n";
  }
}

GlobalClassifier load_classifier_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) fail(path, 1, "empty file, header expected");
  std::vector<std::string> header = split(lines[0]);
  if (header.size() < 2 || header[0] != "class_id")
    fail(path, 1, "unexpected header for a classifier file");
  GlobalClassifier g;
  g.has_bias = header.back() == "bias";
  int cols = static_cast<int>(header.size()) - 1;
  g.weights.resize(lines.size() - 1, cols);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> f = split(lines[li]);
    if (static_cast<int>(f.size()) != cols + 1)
      fail(path, li + 1, "expected " + std::to_string(cols + 1) + " fields, found " +
                             std::to_string(f.size()));
    g.class_ids.push_back(static_cast<int>(parse_int(f[0], path, li + 1)));
    for (int i = 0; i < cols; ++i) g.weights(li - 1, i) = parse_double(f[1 + i], path, li + 1);
  }
  return g;
}

namespace {

void write_matrix_block(std::ofstream& out, const std::string& name,
                        const Eigen::MatrixXd& m) {
  out << "matrix," << name << ',' << m.rows() << ',' << m.cols() << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << "\n";
  }
}

}  // namespace

void save_embedding_csv(const std::string& path, const EmbeddingModel& model) {
  std::ofstream out = open_out(path);
  write_matrix_block(out, "theta", model.base.theta);
  if (model.adapter) {
    write_matrix_block(out, "adapter_w1", model.adapter->w1);
    write_matrix_block(out, "adapter_b1", model.adapter->b1.transpose());
    write_matrix_block(out, "adapter_w2", model.adapter->w2);
    write_matrix_block(out, "adapter_b2", model.adapter->b2.transpose());
  }
}

EmbeddingModel load_embedding_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  std::map<std::string, Eigen::MatrixXd> blocks;
  std::size_t li = 0;
  while (li < lines.size()) {
    std::vector<std::string> f = split(lines[li]);
    if (f.size() != 4 || f[0] != "matrix")
      fail(path, li + 1, "expected a 'matrix,<name>,<rows>,<cols>' block header");
    std::string name = f[1];
    long long rows = parse_int(f[2], path, li + 1);
    long long cols = parse_int(f[3], path, li + 1);
    if (rows < 1 || cols < 1) fail(path, li + 1, "bad matrix shape");
    Eigen::MatrixXd m(rows, cols);
    for (long long r = 0; r < rows; ++r) {
      if (li + 1 + r >= lines.size()) fail(path, li + 1, "matrix block is truncated");
      std::vector<std::string> row = split(lines[li + 1 + r]);
      if (static_cast<long long>(row.size()) != cols)
        fail(path, li + 2 + r, "expected " + std::to_string(cols) + " values, found " +
                                   std::to_string(row.size()));
      for (long long c = 0; c < cols; ++c)
        m(r, c) = parse_double(row[c], path, li + 2 + r);
    }
    if (!blocks.emplace(name, std::move(m)).second)
      fail(path, li + 1, "duplicate matrix block '" + name + "'");
    li += 1 + rows;
  }
  auto theta = blocks.find("theta");
  if (theta == blocks.end()) throw std::runtime_error(path + ": no 'theta' block");
  EmbeddingModel model;
  model.base.theta = theta->second;
  bool has_adapter = blocks.count("adapter_w1") > 0;
  if (has_adapter) {
    for (const char* name : {"adapter_w1", "adapter_b1", "adapter_w2", "adapter_b2"})
      if (!blocks.count(name))
        throw std::runtime_error(path + ": incomplete adapter, missing '" +
                                 std::string(name) + "'");
    ResidualAdapter a;
    a.w1 = blocks.at("adapter_w1");
    a.b1 = blocks.at("adapter_b1").row(0).transpose();
    a.w2 = blocks.at("adapter_w2");
    a.b2 = blocks.at("adapter_b2").row(0).transpose();
    model.adapter = std::move(a);
  }
  return model;
}

void save_clusters_csv(const std::string& path, const ClusterState& state) {
  std::ofstream out = open_out(path);
  int p = state.centroids.empty() ? 0 : static_cast<int>(state.centroids.front().size());
  out << "cluster_id,sample_count";
  for (int i = 0; i < p; ++i) out << ",c" << i;
  out << "\n";
  for (int v = 0; v < state.size(); ++v) {
    out << v << ',' << format_double(state.sample_counts[v]);
    for (int i = 0; i < state.centroids[v].size(); ++i)
      out << ',' << format_double(state.centroids[v][i]);
    out << "\n";
  }
}

ClusterState load_clusters_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) fail(path, 1, "empty file, header expected");
  std::vector<std::string> header = split(lines[0]);
  if (header.size() < 3 || header[0] != "cluster_id" || header[1] != "sample_count")
    fail(path, 1, "unexpected header for a cluster file");
  int p = static_cast<int>(header.size()) - 2;
  ClusterState state;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> f = split(lines[li]);
    if (static_cast<int>(f.size()) != p + 2)
      fail(path, li + 1, "expected " + std::to_string(p + 2) + " fields, found " +
                             std::to_string(f.size()));
    if (parse_int(f[0], path, li + 1) != static_cast<long long>(li - 1))
      fail(path, li + 1, "cluster ids must be consecutive from 0");
    state.sample_counts.push_back(parse_double(f[1], path, li + 1));
    Eigen::VectorXd c(p);
    for (int i = 0; i < p; ++i) c[i] = parse_double(f[2 + i], path, li + 1);
    state.centroids.push_back(std::move(c));
    state.match_counts.push_back(0);
  }
  return state;
}

void save_assignment_csv(const std::string& path, const LabelAssignment& a,
                         int ways) {
  std::ofstream out = open_out(path);
  out << "task_id,local_label,cluster_id\n";
  for (std::size_t t = 0; t < a.tasks.size(); ++t) {
    const TaskAssignment& ta = a.tasks[t];
    for (int j = 0; j < ways; ++j)
      out << t << ',' << j << ','
          << (ta.discarded ? -1 : ta.cluster_of_local.at(j)) << "\n";
  }
}

LabelAssignment load_assignment_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) fail(path, 1, "empty file, header expected");
  if (split(lines[0]) != std::vector<std::string>{"task_id", "local_label", "cluster_id"})
    fail(path, 1, "unexpected header for an assignment file");
  std::map<long long, std::vector<int>> by_task;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> f = split(lines[li]);
    if (f.size() != 3) fail(path, li + 1, "expected 3 fields");
    long long task_id = parse_int(f[0], path, li + 1);
    long long local = parse_int(f[1], path, li + 1);
    long long cluster = parse_int(f[2], path, li + 1);
    auto& v = by_task[task_id];
    if (static_cast<long long>(v.size()) != local)
      fail(path, li + 1, "local labels out of order for task " + std::to_string(task_id));
    v.push_back(static_cast<int>(cluster));
  }
  LabelAssignment out;
  long long expected = 0;
  for (const auto& [task_id, clusters] : by_task) {
    if (task_id != expected++)
      throw std::runtime_error(path + ": task ids must be consecutive from 0");
    TaskAssignment ta;
    if (!clusters.empty() && clusters.front() == -1) {
      ta.discarded = true;
      ++out.num_discarded;
    } else {
      ta.cluster_of_local = clusters;
      ++out.num_clustered;
    }
    out.tasks.push_back(std::move(ta));
  }
  return out;
}

void save_grid_csv(const std::string& path, const GridDataset& ds) {
  std::ofstream out = open_out(path);
  out << "sample_id,global_label,h,w";
  if (!ds.samples.empty()) {
    const Eigen::MatrixXd& g = ds.samples.front().grid;
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) out << ",g" << i << j;
  }
  out << "\n";
  for (const GridSample& s : ds.samples) {
    out << s.id << ',' << s.label << ',' << s.grid.rows() << ',' << s.grid.cols();
    for (int i = 0; i < s.grid.rows(); ++i)
      for (int j = 0; j < s.grid.cols(); ++j) out << ',' << format_double(s.grid(i, j));
    out << "\n";
  }
}

GridDataset load_grid_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) fail(path, 1, "empty file, header expected");
  std::vector<std::string> header = split(lines[0]);
  if (header.size() < 4 || header[0] != "sample_id" || header[1] != "global_label" ||
      header[2] != "h" || header[3] != "w")
    fail(path, 1, "unexpected header for a grid file");
  GridDataset ds;
  int max_label = -1;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> f = split(lines[li]);
    if (f.size() < 4) fail(path, li + 1, "row too short");
    GridSample s;
    s.id = parse_int(f[0], path, li + 1);
    s.label = static_cast<int>(parse_int(f[1], path, li + 1));
    long long h = parse_int(f[2], path, li + 1);
    long long w = parse_int(f[3], path, li + 1);
    if (h < 1 || w < 1) fail(path, li + 1, "grid shape must be positive");
    if (static_cast<long long>(f.size()) != 4 + h * w)
      fail(path, li + 1, "expected " + std::to_string(4 + h * w) + " fields, found " +
                             std::to_string(f.size()));
    s.grid.resize(h, w);
    int idx = 4;
    for (long long i = 0; i < h; ++i)
      for (long long j = 0; j < w; ++j) s.grid(i, j) = parse_double(f[idx++], path, li + 1);
    max_label = std::max(max_label, s.label);
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = max_label + 1;
  return ds;
}

}  // namespace fsl
