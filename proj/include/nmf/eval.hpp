#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "nmf/cascade.hpp"
#include "nmf/training.hpp"

namespace nmf {

/// Integrates g from [u; 0] with the given integrator and reports x clamped to
/// [0, 1] at the grid points. `u` may be a relaxed indicator.
ProbCurve estimate_probs(const ThetaD& theta, const IntegratorConfig& integrator, const Eigen::VectorXd& u,
                         const std::vector<double>& grid);
ProbCurve estimate_probs(const TrainedModel& model, const std::vector<NodeId>& source, const std::vector<double>& grid);

/// sigma(t; S) = 1^T x(t), from the clamped estimate.
double influence(const TrainedModel& model, const std::vector<NodeId>& source, double t);

struct MaeRow {
  double t = 0.0;
  double prob_mae = 0.0;        // ||x - x*||_1 / n
  double inf_mae = 0.0;         // |1^T (x - x*)|
  double scaled_inf_mae = 0.0;  // |1^T (x - x*)| / n
};

std::vector<MaeRow> mae_metrics(const ProbCurve& x, const ProbCurve& x_star);
/// Mean of prob_mae and scaled_inf_mae over the grid.
MaeRow mean_mae(const std::vector<MaeRow>& rows);
void write_mae_csv(std::ostream& out, const std::vector<MaeRow>& rows);

/// Edge-set and rate-matrix agreement. Prc and Rcl follow the published
/// definitions: Prc divides by |E*| (truth) and Rcl by |E| (learned), which is
/// the reverse of the usual naming. Undefined ratios are NaN with a warning.
struct InferenceMetrics {
  double prc = 0.0;
  double rcl = 0.0;
  double acc = 0.0;
  double cor = 0.0;
  std::vector<std::string> warnings;
};

InferenceMetrics network_metrics(const EdgeSet& E, const EdgeSet& E_star, const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& A_star);
std::string inference_metrics_json(const InferenceMetrics& m);

}  // namespace nmf
