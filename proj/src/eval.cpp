#include "nmf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "nmf/errors.hpp"

namespace nmf {

ProbCurve estimate_probs(const ThetaD& theta, const IntegratorConfig& integrator, const Eigen::VectorXd& u,
                         const std::vector<double>& grid) {
  const Eigen::Index n = theta.size();
  if (u.size() != n) throw InvalidArgument("initial indicator has the wrong size");
  for (double t : grid)
    if (!(t >= 0.0 && t <= integrator.horizon)) throw InvalidArgument("grid point outside [0, T]");
  auto field = [&](double, const Vec<double>& m) { return g_dynamics(m, theta); };
  const auto traj = integrate_forward<double>(field, initial_state<double>(u), integrator, std::span<const double>(grid));
  ProbCurve c;
  c.grid = grid;
  c.values.resize(grid.size(), n);
  for (std::size_t l = 0; l < grid.size(); ++l)
    c.values.row(l) = traj.at(grid[l]).head(n).cwiseMax(0.0).cwiseMin(1.0).transpose();
  return c;
}

ProbCurve estimate_probs(const TrainedModel& model, const std::vector<NodeId>& source, const std::vector<double>& grid) {
  return estimate_probs(model.theta, model.integrator, indicator(model.size(), source), grid);
}

double influence(const TrainedModel& model, const std::vector<NodeId>& source, double t) {
  return estimate_probs(model, source, {t}).values.sum();
}

std::vector<MaeRow> mae_metrics(const ProbCurve& x, const ProbCurve& x_star) {
  if (x.grid != x_star.grid || x.values.rows() != x_star.values.rows() || x.nodes() != x_star.nodes())
    throw InvalidArgument("probability curves have mismatched grids or node counts");
  const double n = x.nodes();
  std::vector<MaeRow> rows;
  for (std::size_t l = 0; l < x.grid.size(); ++l) {
    const Eigen::RowVectorXd d = x.values.row(l) - x_star.values.row(l);
    MaeRow r;
    r.t = x.grid[l];
    r.prob_mae = d.cwiseAbs().sum() / n;
    r.inf_mae = std::abs(d.sum());
    r.scaled_inf_mae = r.inf_mae / n;
    rows.push_back(r);
  }
  return rows;
}

MaeRow mean_mae(const std::vector<MaeRow>& rows) {
  MaeRow m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.prob_mae += r.prob_mae;
    m.inf_mae += r.inf_mae;
    m.scaled_inf_mae += r.scaled_inf_mae;
  }
  const double k = static_cast<double>(rows.size());
  m.t = std::numeric_limits<double>::quiet_NaN();
  m.prob_mae /= k;
  m.inf_mae /= k;
  m.scaled_inf_mae /= k;
  return m;
}

void write_mae_csv(std::ostream& out, const std::vector<MaeRow>& rows) {
  out << "t,prob_mae,scaled_inf_mae\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& r : rows) {
    line.str("");
    line << r.t << ',' << r.prob_mae << ',' << r.scaled_inf_mae;
    out << line.str() << '\n';
  }
}

InferenceMetrics network_metrics(const EdgeSet& E, const EdgeSet& E_star, const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& A_star) {
  if (A.rows() != A_star.rows() || A.cols() != A_star.cols()) throw InvalidArgument("rate matrices differ in shape");
  EdgeSet e = E, es = E_star;
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  std::sort(es.begin(), es.end());
  es.erase(std::unique(es.begin(), es.end()), es.end());
  EdgeSet common;
  std::set_intersection(e.begin(), e.end(), es.begin(), es.end(), std::back_inserter(common));
  const double inter = static_cast<double>(common.size());
  const double sym_diff = static_cast<double>(e.size() + es.size()) - 2.0 * inter;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  InferenceMetrics m;
  if (es.empty()) {
    m.prc = nan;
    m.warnings.push_back("Prc undefined: ground-truth edge set is empty");
  } else {
    m.prc = inter / static_cast<double>(es.size());
  }
  if (e.empty()) {
    m.rcl = nan;
    m.warnings.push_back("Rcl undefined: learned edge set is empty");
  } else {
    m.rcl = inter / static_cast<double>(e.size());
  }
  if (e.empty() && es.empty()) {
    m.acc = nan;
    m.warnings.push_back("Acc undefined: both edge sets are empty");
  } else {
    m.acc = 1.0 - sym_diff / static_cast<double>(e.size() + es.size());
  }
  const double norms = A.norm() * A_star.norm();
  if (norms == 0.0) {
    m.cor = nan;
    m.warnings.push_back("Cor undefined: a rate matrix is zero");
  } else {
    m.cor = std::abs((A.array() * A_star.array()).sum()) / norms;
  }
  return m;
}

std::string inference_metrics_json(const InferenceMetrics& m) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json j{{"prc", num(m.prc)}, {"rcl", num(m.rcl)}, {"acc", num(m.acc)}, {"cor", num(m.cor)}};
  if (!m.warnings.empty()) j["warnings"] = m.warnings;
  return j.dump();
}

}  // namespace nmf
