#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nmf/rng.hpp"

namespace nmf {

using NodeId = int;

/// Directed edge (src, dst): src can infect dst.
struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeSet = std::vector<Edge>;

/// Diffusion network with transmission matrix A where A(dst, src) is the
/// rate of edge src -> dst. The edge set is exactly the support of A.
class DiffusionNetwork {
 public:
  DiffusionNetwork() = default;
  explicit DiffusionNetwork(int n);
  /// Validates: square, finite, nonnegative, zero diagonal.
  explicit DiffusionNetwork(Eigen::MatrixXd transmission);

  int size() const { return static_cast<int>(A_.rows()); }
  const Eigen::MatrixXd& transmission() const { return A_; }
  double rate(NodeId src, NodeId dst) const { return A_(dst, src); }

  /// Edges sorted by (src, dst).
  EdgeSet edges() const;
  std::size_t edge_count() const;

 private:
  Eigen::MatrixXd A_;
};

/// Uniform(lo, hi) law for per-edge transmission rates.
struct RateLaw {
  double lo = 0.1;
  double hi = 1.0;
};

struct KroneckerSpec {
  Eigen::Matrix2d seed;
  int iterations = 1;
  double target_edges = 0.0;
  RateLaw rates;
};

enum class KroneckerKind { Hierarchical, CorePeriphery, Random };

/// Seed matrices for the three synthetic families.
Eigen::Matrix2d kronecker_seed(KroneckerKind kind);
KroneckerKind parse_kronecker_kind(const std::string& name);

/// Off-diagonal edge probabilities of the stochastic Kronecker model scaled so
/// the expected number of edges equals spec.target_edges. Probabilities are
/// capped at 1; the scale is solved by bisection so the cap is accounted for.
Eigen::MatrixXd kronecker_edge_probabilities(const KroneckerSpec& spec);

DiffusionNetwork generate_kronecker(const KroneckerSpec& spec, Rng& rng);

/// Independent Uniform(lo, hi) rates on the given edges, stored at (dst, src).
Eigen::MatrixXd sample_rates(const EdgeSet& edges, int n, const RateLaw& law, Rng& rng);

/// { (i, j) : A(j, i) >= eps }, sorted.
EdgeSet threshold_edges(const Eigen::MatrixXd& A, double eps);

// Edge-list TSV: "src\tdst\talpha" per line, '#' comments, optional "# n=<int>".
void write_network(std::ostream& out, const DiffusionNetwork& net);
DiffusionNetwork read_network(std::istream& in);
void save_network(const DiffusionNetwork& net, const std::string& path);
DiffusionNetwork load_network(const std::string& path);

}  // namespace nmf
