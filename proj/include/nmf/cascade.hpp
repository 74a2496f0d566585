#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "nmf/network.hpp"
#include "nmf/rng.hpp"

namespace nmf {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

// Delay laws. Exponential: alpha e^{-alpha t}. Rayleigh: alpha t e^{-alpha t^2 / 2}.
// Weibull: (k/lambda)(t/lambda)^{k-1} e^{-(t/lambda)^k}.
struct Exponential {
  double rate;
};
struct Rayleigh {
  double rate;
};
struct Weibull {
  double shape;
  double scale;
};
using DelayLaw = std::variant<Exponential, Rayleigh, Weibull>;

void validate(const DelayLaw& law);
double sample_delay(const DelayLaw& law, Rng& rng);

enum class DelayKind { Exponential, Rayleigh, Weibull };
DelayKind parse_delay_kind(const std::string& name);
std::string delay_kind_name(DelayKind kind);

/// Per-edge delay laws for a network. Exponential and Rayleigh take their rate
/// from the transmission matrix; Weibull carries its own (shape, scale) per
/// edge, indexed like A.
struct DelayModel {
  DelayKind kind = DelayKind::Exponential;
  Eigen::MatrixXd shape;
  Eigen::MatrixXd scale;

  static DelayModel exponential() { return {}; }
  static DelayModel rayleigh() { return {DelayKind::Rayleigh, {}, {}}; }
  /// Shape and scale drawn Uniform(lo, hi) on every edge of `net`.
  static DelayModel weibull(const DiffusionNetwork& net, Rng& rng, double lo = 1.0, double hi = 10.0);

  DelayLaw law(const DiffusionNetwork& net, NodeId src, NodeId dst) const;
};

/// One observed cascade: sources at time 0, others at their infection time in
/// (0, T] or kNever.
struct Cascade {
  std::vector<NodeId> source;
  std::vector<double> times;
  double horizon = 0.0;

  int size() const { return static_cast<int>(times.size()); }
  /// Throws DataError unless the cascade invariants hold.
  void validate() const;
};

struct CascadeSet {
  int n = 0;
  double horizon = 0.0;
  std::vector<Cascade> cascades;
};

/// Infection probabilities on an ascending time grid; values(l, i) = x_i(t_l).
struct ProbCurve {
  std::vector<double> grid;
  Eigen::MatrixXd values;

  int nodes() const { return static_cast<int>(values.cols()); }
};

/// Out-neighbour lists (dst, law) built once per (network, delay model).
class CascadeSimulator {
 public:
  CascadeSimulator(const DiffusionNetwork& net, const DelayModel& delays);

  int size() const { return static_cast<int>(out_.size()); }
  Cascade simulate(const std::vector<NodeId>& source, double horizon, Rng& rng) const;

 private:
  struct Arc {
    NodeId dst;
    DelayLaw law;
  };
  std::vector<std::vector<Arc>> out_;
};

/// Delay of edge (src, dst), used by the sampler overload of simulate_cascade.
using DelaySampler = std::function<double(NodeId src, NodeId dst)>;

/// Event-queue cascade: sources at 0, each newly infected node draws delays to
/// its healthy out-neighbours (ascending id), earliest tentative time wins,
/// ties go to the lower node id, times past the horizon become kNever.
Cascade simulate_cascade(const DiffusionNetwork& net, const std::vector<NodeId>& source, double horizon,
                         const DelayModel& delays, Rng& rng);
Cascade simulate_cascade(const DiffusionNetwork& net, const std::vector<NodeId>& source, double horizon,
                         const DelaySampler& sampler);

struct SourceSampler {
  int count = 0;
  int min_size = 1;
  int max_size = 10;
};

/// Source set of uniform size in [min_size, max_size], nodes uniform without replacement, sorted.
std::vector<NodeId> sample_source_set(int n, int min_size, int max_size, Rng& rng);

/// count source sets (stream "sources") x cascades_per_source cascades; cascade k
/// uses stream ("cascade", k), so output is independent of the thread count.
CascadeSet build_dataset(const DiffusionNetwork& net, const DelayModel& delays, const SourceSampler& sources,
                         int cascades_per_source, double horizon, std::uint64_t seed, unsigned threads = 1);

struct McEstimate {
  ProbCurve curve;
  Eigen::MatrixXd std_error;  // sqrt(x(1-x)/N), same shape as curve.values
};

/// Empirical infection probabilities over num_samples cascades.
McEstimate estimate_probs_mc(const DiffusionNetwork& net, const DelayModel& delays,
                             const std::vector<NodeId>& source, const std::vector<double>& grid, int num_samples,
                             std::uint64_t seed, unsigned threads = 1);

/// Exact probabilities from the 2^n-state master equation (exponential delays, n <= 14).
ProbCurve exact_probs_ctmc(const DiffusionNetwork& net, const std::vector<NodeId>& source,
                           const std::vector<double>& grid);
ProbCurve exact_probs_ctmc(const DiffusionNetwork& net, const DelayModel& delays, const std::vector<NodeId>& source,
                           const std::vector<double>& grid);

/// Like exact_probs_ctmc, also returning total probability mass per grid point.
struct CtmcResult {
  ProbCurve curve;
  std::vector<double> total_mass;
};
CtmcResult exact_probs_ctmc_detail(const DiffusionNetwork& net, const std::vector<NodeId>& source,
                                   const std::vector<double>& grid);

/// Closed (x, e) moment system over all 2^n - 1 node subsets (n <= 10).
struct ZOdeResult {
  ProbCurve curve;
  Eigen::VectorXd e0;  // correlation block at t = 0
  Eigen::MatrixXd e;   // correlation block per grid point (rows)
};
ZOdeResult full_z_ode_oracle(const DiffusionNetwork& net, const std::vector<NodeId>& source,
                             const std::vector<double>& grid);

// Cascade JSONL: {"source":[ids],"events":[[node,time],...],"horizon":T}
std::string cascade_to_json(const Cascade& c);
Cascade cascade_from_json(const std::string& line, int n_hint, std::size_t lineno = 0);
void write_cascades(std::ostream& out, const CascadeSet& set);
/// Node count is max(n_hint, 1 + largest id seen).
CascadeSet read_cascades(std::istream& in, int n_hint = 0);
void save_cascades(const CascadeSet& set, const std::string& path);
CascadeSet load_cascades(const std::string& path, int n_hint = 0);

// ProbCurve CSV: header t,x0,...,x{n-1}
void write_prob_curve(std::ostream& out, const ProbCurve& curve);
ProbCurve read_prob_curve(std::istream& in);

std::vector<double> uniform_grid(double horizon, int points);
Eigen::VectorXd indicator(int n, const std::vector<NodeId>& nodes);

}  // namespace nmf
