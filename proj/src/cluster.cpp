#include "compscore/cluster.hpp"

#include "compscore/csv.hpp"
#include "compscore/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace compscore {

namespace {

std::uint64_t permutation_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Disjoint-set over cell indices.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

// +1 / -1 / 0 membership per cell for the requested tail.
std::vector<std::int8_t> supra_signs(const Eigen::VectorXd& t_cells, const ClusterParams& params) {
  std::vector<std::int8_t> sign(static_cast<std::size_t>(t_cells.size()), 0);
  for (Eigen::Index i = 0; i < t_cells.size(); ++i) {
    const double t = t_cells[i];
    if (std::isnan(t)) continue;
    switch (params.tail) {
      case TestTail::greater:
        if (t > params.threshold_t) sign[static_cast<std::size_t>(i)] = 1;
        break;
      case TestTail::less:
        if (t < -params.threshold_t) sign[static_cast<std::size_t>(i)] = -1;
        break;
      case TestTail::two_sided:
        if (t > params.threshold_t) sign[static_cast<std::size_t>(i)] = 1;
        else if (t < -params.threshold_t) sign[static_cast<std::size_t>(i)] = -1;
        break;
    }
  }
  return sign;
}

// Ranking statistic: how extreme a cluster is for the requested tail.
double extremity(double mass, TestTail tail) {
  switch (tail) {
    case TestTail::greater: return mass;
    case TestTail::less: return -mass;
    case TestTail::two_sided: return std::fabs(mass);
  }
  return mass;
}

}  // namespace

AdjacencyGraph AdjacencyGraph::from_file(const std::filesystem::path& path) {
  const auto lines = read_lines(path.string());
  if (lines.empty() || lines[0].rfind("n_vertices=", 0) != 0) {
    throw ValidationError("graph file " + path.string() + ": first line must be 'n_vertices=N'");
  }
  AdjacencyGraph g;
  g.n_vertices = static_cast<int>(parse_long(std::string_view(lines[0]).substr(11)));
  if (g.n_vertices < 1) throw ValidationError("graph: n_vertices must be >= 1");
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto space = lines[i].find(' ');
    if (space == std::string::npos) {
      throw ValidationError("graph: line " + std::to_string(i + 1) + " is not 'u v'");
    }
    int u = static_cast<int>(parse_long(std::string_view(lines[i]).substr(0, space)));
    int v = static_cast<int>(parse_long(std::string_view(lines[i]).substr(space + 1)));
    if (u == v) throw ValidationError("graph: self-loop at vertex " + std::to_string(u));
    if (u < 0 || v < 0 || u >= g.n_vertices || v >= g.n_vertices) {
      throw ValidationError("graph: edge " + lines[i] + " outside [0, " +
                            std::to_string(g.n_vertices) + ")");
    }
    if (u > v) std::swap(u, v);
    if (seen.insert({u, v}).second) g.edges.emplace_back(u, v);
  }
  return g;
}

AdjacencyGraph AdjacencyGraph::grid(int rows, int cols) {
  AdjacencyGraph g;
  g.n_vertices = rows * cols;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int v = r * cols + c;
      if (c + 1 < cols) g.edges.emplace_back(v, v + 1);
      if (r + 1 < rows) g.edges.emplace_back(v, v + cols);
    }
  }
  return g;
}

void AdjacencyGraph::write_file(const std::filesystem::path& path) const {
  std::string out = "n_vertices=" + std::to_string(n_vertices) + "\n";
  for (const auto& [u, v] : edges) {
    out += std::to_string(u);
    out += ' ';
    out += std::to_string(v);
    out += '\n';
  }
  write_text_file(path.string(), out);
}

std::vector<std::vector<int>> AdjacencyGraph::neighbor_lists() const {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_vertices));
  for (const auto& [u, v] : edges) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    adj[static_cast<std::size_t>(v)].push_back(u);
  }
  return adj;
}

Eigen::VectorXd one_sample_t(const GroupMap& map) {
  const auto n = map.values.rows();
  if (n < 2) throw ValidationError("one_sample_t: needs at least 2 subjects");
  const auto n_cells = map.values.cols();
  Eigen::VectorXd t(n_cells);
  const double dn = static_cast<double>(n);
  for (Eigen::Index c = 0; c < n_cells; ++c) {
    const double mean = map.values.col(c).mean();
    const double ss = (map.values.col(c).array() - mean).square().sum();
    const double sd = std::sqrt(ss / (dn - 1.0));
    t[c] = sd > 0.0 ? mean / (sd / std::sqrt(dn)) : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

std::vector<Cluster> form_clusters(const Eigen::VectorXd& t_cells, const AdjacencyGraph& graph,
                                   int n_conditions, const ClusterParams& params) {
  if (params.threshold_t <= 0.0) {
    throw ValidationError("form_clusters: threshold_t must be positive");
  }
  if (n_conditions < 1 || t_cells.size() != static_cast<Eigen::Index>(graph.n_vertices) * n_conditions) {
    throw ValidationError("form_clusters: cell count does not match vertices x conditions");
  }
  const auto sign = supra_signs(t_cells, params);

  UnionFind uf(static_cast<std::size_t>(t_cells.size()));
  auto cell = [&](int vertex, int cond) { return vertex * n_conditions + cond; };
  for (const auto& [u, v] : graph.edges) {
    for (int c = 0; c < n_conditions; ++c) {
      const auto a = static_cast<std::size_t>(cell(u, c));
      const auto b = static_cast<std::size_t>(cell(v, c));
      if (sign[a] != 0 && sign[a] == sign[b]) uf.unite(a, b);
    }
  }
  if (params.link_conditions) {
    for (int v = 0; v < graph.n_vertices; ++v) {
      for (int c = 0; c + 1 < n_conditions; ++c) {
        const auto a = static_cast<std::size_t>(cell(v, c));
        const auto b = static_cast<std::size_t>(cell(v, c + 1));
        if (sign[a] != 0 && sign[a] == sign[b]) uf.unite(a, b);
      }
    }
  }

  std::vector<std::vector<int>> members(static_cast<std::size_t>(t_cells.size()));
  for (Eigen::Index i = 0; i < t_cells.size(); ++i) {
    if (sign[static_cast<std::size_t>(i)] != 0) {
      members[uf.find(static_cast<std::size_t>(i))].push_back(static_cast<int>(i));
    }
  }

  std::vector<Cluster> clusters;
  for (auto& cells : members) {
    if (cells.empty()) continue;
    std::set<int> vertices;
    double mass = 0.0;
    for (int c : cells) {
      vertices.insert(c / n_conditions);
      mass += t_cells[c];
    }
    if (static_cast<int>(vertices.size()) < params.min_extent) continue;
    Cluster cl;
    std::sort(cells.begin(), cells.end());
    cl.cells = std::move(cells);
    cl.mass = mass;
    cl.extent = static_cast<int>(vertices.size());
    clusters.push_back(std::move(cl));
  }
  std::sort(clusters.begin(), clusters.end(), [&](const Cluster& a, const Cluster& b) {
    const double ea = extremity(a.mass, params.tail);
    const double eb = extremity(b.mass, params.tail);
    if (ea != eb) return ea > eb;
    return a.cells < b.cells;  // deterministic tie-break
  });
  return clusters;
}

ClusterResult permutation_test(const GroupMap& map, const AdjacencyGraph& graph, int n_perms,
                               std::uint64_t seed, const ClusterParams& params, int threads) {
  if (n_perms < 1) throw ValidationError("permutation_test: n_perms must be >= 1");
  const auto n_subjects = map.values.rows();
  if (n_subjects < 2) throw ValidationError("permutation_test: needs at least 2 subjects");

  ClusterResult result;
  result.params = params;
  result.n_perms = n_perms;
  result.seed = seed;
  result.clusters = form_clusters(one_sample_t(map), graph, map.n_conditions, params);

  // Sums of squares are sign-flip invariant, so each permutation only needs
  // the flipped column sums.
  const auto n_cells = map.values.cols();
  const Eigen::VectorXd sum_sq = map.values.array().square().colwise().sum();
  const double dn = static_cast<double>(n_subjects);

  result.null_max.assign(static_cast<std::size_t>(n_perms), 0.0);
  parallel_for(static_cast<std::size_t>(n_perms), threads, [&](std::size_t p) {
    std::mt19937_64 engine(permutation_seed(seed, p));
    Eigen::VectorXd signs(n_subjects);
    for (Eigen::Index s = 0; s < n_subjects; ++s) {
      signs[s] = (engine() & 1ull) ? 1.0 : -1.0;
    }
    const Eigen::RowVectorXd flipped_sum = signs.transpose() * map.values;
    Eigen::VectorXd t(n_cells);
    for (Eigen::Index c = 0; c < n_cells; ++c) {
      const double mean = flipped_sum[c] / dn;
      const double var = (sum_sq[c] - dn * mean * mean) / (dn - 1.0);
      t[c] = var > 0.0 ? mean / std::sqrt(var / dn) : std::numeric_limits<double>::quiet_NaN();
    }
    const auto clusters = form_clusters(t, graph, map.n_conditions, params);
    double mx = 0.0;
    for (const auto& cl : clusters) mx = std::max(mx, extremity(cl.mass, params.tail));
    result.null_max[p] = mx;
  });

  for (auto& cl : result.clusters) {
    const double obs = extremity(cl.mass, params.tail);
    long count = 0;
    for (double nm : result.null_max) {
      if (nm >= obs) ++count;
    }
    cl.p_value = static_cast<double>(1 + count) / static_cast<double>(1 + n_perms);
  }
  return result;
}

}  // namespace compscore
