#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace compscore {

// Undirected vertex adjacency, loaded from a "n_vertices=N" header plus one
// "u v" edge per line.
struct AdjacencyGraph {
  int n_vertices = 0;
  std::vector<std::pair<int, int>> edges;

  static AdjacencyGraph from_file(const std::filesystem::path& path);
  static AdjacencyGraph grid(int rows, int cols);  // 4-neighbor lattice, test data
  void write_file(const std::filesystem::path& path) const;

  // CSR-style neighbor lists
  std::vector<std::vector<int>> neighbor_lists() const;
};

// Per-subject stacked maps: one value per (vertex, condition) cell.
// Cells are laid out vertex-major: cell = vertex * n_conditions + condition.
struct GroupMap {
  Eigen::MatrixXd values;  // [n_subjects, n_vertices * n_conditions]
  int n_vertices = 0;
  int n_conditions = 1;
  std::vector<std::string> condition_names;

  int cell(int vertex, int condition) const { return vertex * n_conditions + condition; }
};

// t = mean / (sd / sqrt(n)), df = n-1, per cell; NaN where sd == 0.
Eigen::VectorXd one_sample_t(const GroupMap& map);

enum class TestTail { greater, less, two_sided };

struct ClusterParams {
  double threshold_t = 0.0;  // cluster-forming threshold (positive)
  int min_extent = 1;        // minimum number of distinct vertices
  bool link_conditions = true;
  TestTail tail = TestTail::greater;
};

struct Cluster {
  std::vector<int> cells;  // sorted cell indices
  double mass = 0.0;       // sum of member t values
  int extent = 0;          // distinct vertices
  double p_value = 1.0;
};

// Groups supra-threshold cells into connected components: graph edges link
// cells at the same condition, and, when link_conditions, consecutive
// conditions link at the same vertex. Components spanning fewer than
// min_extent distinct vertices are dropped.
std::vector<Cluster> form_clusters(const Eigen::VectorXd& t_cells, const AdjacencyGraph& graph,
                                   int n_conditions, const ClusterParams& params);

struct ClusterResult {
  std::vector<Cluster> clusters;     // observed, by descending |mass|
  std::vector<double> null_max;      // max cluster statistic per permutation
  ClusterParams params;
  int n_perms = 0;
  std::uint64_t seed = 0;
};

// Sign-flip permutation test: each permutation flips every subject's whole
// map by an independent +-1, the max cluster mass forms the null, and
// cluster p = (1 + #{null >= observed}) / (1 + n_perms). Permutations are
// seeded individually (seed, permutation index), so results do not depend
// on the thread count.
ClusterResult permutation_test(const GroupMap& map, const AdjacencyGraph& graph, int n_perms,
                               std::uint64_t seed, const ClusterParams& params, int threads = 1);

}  // namespace compscore
