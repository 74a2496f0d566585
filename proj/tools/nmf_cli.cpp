// nmf: network generation, cascade simulation, training, estimation,
// network-inference evaluation, influence maximization and self-checks.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmf/cascade.hpp"
#include "nmf/errors.hpp"
#include "nmf/eval.hpp"
#include "nmf/infmax.hpp"
#include "nmf/io.hpp"
#include "nmf/network.hpp"
#include "nmf/parallel.hpp"
#include "nmf/training.hpp"
#include "nmf/verify.hpp"

namespace {

constexpr int kOk = 0, kVerifyFailed = 1, kUsage = 2, kDiverged = 3;

std::vector<nmf::NodeId> parse_node_list(const std::string& text, int n) {
  std::vector<nmf::NodeId> nodes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    long id = 0;
    try {
      id = std::stol(item, &used);
    } catch (const std::exception&) {
      throw nmf::InvalidArgument("bad node id '" + item + "'");
    }
    if (used != item.size() || id < 0 || id >= n)
      throw nmf::InvalidArgument("unknown node id '" + item + "' (n=" + std::to_string(n) + ")");
    nodes.push_back(static_cast<nmf::NodeId>(id));
  }
  if (nodes.empty()) throw nmf::InvalidArgument("empty source set");
  return nodes;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw nmf::InvalidArgument("cannot write '" + path + "'");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural mean-field dynamics for diffusion networks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  unsigned threads = nmf::default_threads();
  app.add_option("--seed", seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->capture_default_str();

  // net-gen
  auto* gen = app.add_subcommand("net-gen", "Generate a Kronecker network with random rates");
  std::string spec_path, net_out;
  gen->add_option("--spec", spec_path, "Kronecker spec JSON")->required();
  gen->add_option("--out", net_out, "Output edge list TSV")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate cascades on a network");
  std::string sim_net, sim_out, law_name = "exp";
  int sim_sources = 10, min_size = 1, max_size = 10, per_source = 10;
  double sim_T = 20.0;
  sim->add_option("--net", sim_net, "Network TSV")->required();
  sim->add_option("--sources", sim_sources, "Number of random source sets")->capture_default_str();
  sim->add_option("--min-size", min_size, "Smallest source set")->capture_default_str();
  sim->add_option("--max-size", max_size, "Largest source set")->capture_default_str();
  sim->add_option("--per-source", per_source, "Cascades per source set")->capture_default_str();
  sim->add_option("--T", sim_T, "Observation horizon")->capture_default_str();
  sim->add_option("--law", law_name, "Delay law: exp, ray or wbl")->capture_default_str();
  sim->add_option("--out", sim_out, "Output cascades JSONL")->required();

  // train
  auto* tr = app.add_subcommand("train", "Fit NMF parameters to cascades");
  std::string tr_cascades, tr_config, tr_out, tr_edges, tr_loss;
  int tr_n = 0;
  tr->add_option("--cascades", tr_cascades, "Cascades JSONL")->required();
  tr->add_option("--config", tr_config, "Training config JSON");
  tr->add_option("--out", tr_out, "Output model file")->required();
  tr->add_option("--edges-known", tr_edges, "Restrict A to the edges of this network TSV");
  tr->add_option("--loss-csv", tr_loss, "Per-epoch loss CSV (default: <out>.loss.csv)");
  tr->add_option("--n", tr_n, "Node count if larger than the ids in the data");

  // estimate
  auto* est = app.add_subcommand("estimate", "Infection probabilities from a trained model");
  std::string est_model, est_source, est_out, est_truth, est_mae;
  int est_grid = 20, mc_samples = 10000;
  est->add_option("--model", est_model, "Model file")->required();
  est->add_option("--source", est_source, "Comma separated source ids")->required();
  est->add_option("--grid", est_grid, "Grid points l*T/G, l = 1..G")->capture_default_str();
  est->add_option("--out", est_out, "Output curve CSV")->required();
  est->add_option("--truth", est_truth, "Ground-truth exponential network TSV for MAE");
  est->add_option("--mae-csv", est_mae, "MAE CSV output (needs --truth)");
  est->add_option("--mc-samples", mc_samples, "Monte-Carlo cascades when the network is too large for the exact oracle")
      ->capture_default_str();

  // eval-net
  auto* ev = app.add_subcommand("eval-net", "Compare the learned A with a true network");
  std::string ev_model, ev_truth;
  double ev_eps = 0.01;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--truth", ev_truth, "True network TSV")->required();
  ev->add_option("--eps", ev_eps, "Edge threshold")->capture_default_str();

  // infmax
  auto* im = app.add_subcommand("infmax", "Budgeted influence maximization");
  std::string im_model, im_config;
  int im_budget = 0;
  double im_T = 0.0;
  im->add_option("--model", im_model, "Model file")->required();
  im->add_option("--budget", im_budget, "Number of sources (overrides config)");
  im->add_option("--T", im_T, "Horizon (overrides config)");
  im->add_option("--config", im_config, "InfMax config JSON");

  // verify
  auto* ver = app.add_subcommand("verify", "Run derivative, oracle and projection self-checks");
  std::string suite = "all";
  int ver_n = 8;
  ver->add_option("--suite", suite, "gradients, oracles, projection or all")
      ->check(CLI::IsMember({"gradients", "oracles", "projection", "all"}))
      ->capture_default_str();
  ver->add_option("--n", ver_n, "Instance size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (threads == 0) threads = 1;

  try {
    if (*gen) {
      const nmf::KroneckerSpec spec = nmf::kronecker_spec_from_json(nmf::read_text_file(spec_path));
      nmf::Rng rng = nmf::substream(seed, "net-gen");
      const nmf::DiffusionNetwork net = nmf::generate_kronecker(spec, rng);
      nmf::save_network(net, net_out);
      std::cout << "n=" << net.size() << " edges=" << net.edge_count() << "\n";
    } else if (*sim) {
      const nmf::DiffusionNetwork net = nmf::load_network(sim_net);
      const nmf::DelayKind kind = nmf::parse_delay_kind(law_name);
      nmf::DelayModel delays;
      if (kind == nmf::DelayKind::Rayleigh) {
        delays = nmf::DelayModel::rayleigh();
      } else if (kind == nmf::DelayKind::Weibull) {
        nmf::Rng rng = nmf::substream(seed, "weibull-params");
        delays = nmf::DelayModel::weibull(net, rng);
      }
      const nmf::CascadeSet set =
          nmf::build_dataset(net, delays, {sim_sources, min_size, max_size}, per_source, sim_T, seed, threads);
      nmf::save_cascades(set, sim_out);
      std::cout << "cascades=" << set.cascades.size() << "\n";
    } else if (*tr) {
      nmf::TrainConfig cfg = tr_config.empty() ? nmf::TrainConfig{}
                                               : nmf::train_config_from_json(nmf::read_text_file(tr_config));
      cfg.threads = threads;
      nmf::CascadeSet data = nmf::load_cascades(tr_cascades, tr_n);
      nmf::TrainOptions opts;
      if (!tr_edges.empty()) {
        const nmf::DiffusionNetwork known = nmf::load_network(tr_edges);
        if (known.size() > data.n) data.n = known.size();
        if (known.size() != data.n) throw nmf::InvalidArgument("--edges-known network size does not match the data");
        Eigen::MatrixXd support = Eigen::MatrixXd::Zero(data.n, data.n);
        for (const auto& e : known.edges()) support(e.dst, e.src) = 1.0;
        opts.A_support = support;
      }
      if (data.horizon != cfg.integrator.horizon)
        std::cerr << "note: integrator horizon " << cfg.integrator.horizon << " differs from the cascade horizon "
                  << data.horizon << "\n";
      opts.on_epoch = [](int epoch, double loss, const nmf::ThetaD&) {
        std::cerr << "epoch " << epoch + 1 << " loss " << loss << "\n";
      };
      const nmf::TrainedModel model = nmf::train(data, cfg, seed, opts);
      nmf::save_model(model, tr_out);
      std::ofstream loss = open_out(tr_loss.empty() ? tr_out + ".loss.csv" : tr_loss);
      loss << "epoch,mean_loss\n";
      loss.precision(17);
      for (std::size_t e = 0; e < model.loss_history.size(); ++e) loss << e + 1 << "," << model.loss_history[e] << "\n";
    } else if (*est) {
      const nmf::TrainedModel model = nmf::load_model(est_model);
      const auto source = parse_node_list(est_source, model.size());
      if (est_grid < 1) throw nmf::InvalidArgument("--grid must be >= 1");
      const auto grid = nmf::uniform_grid(model.integrator.horizon, est_grid);
      const nmf::ProbCurve curve = nmf::estimate_probs(model, source, grid);
      std::ofstream out = open_out(est_out);
      nmf::write_prob_curve(out, curve);
      std::cout.precision(10);
      for (std::size_t l = 0; l < grid.size(); ++l)
        std::cout << "t=" << grid[l] << " sigma=" << curve.values.row(static_cast<Eigen::Index>(l)).sum() << "\n";
      if (!est_truth.empty()) {
        const nmf::DiffusionNetwork truth = nmf::load_network(est_truth);
        if (truth.size() != model.size()) throw nmf::InvalidArgument("truth network size does not match the model");
        const nmf::ProbCurve ref =
            truth.size() <= 14
                ? nmf::exact_probs_ctmc(truth, source, grid)
                : nmf::estimate_probs_mc(truth, nmf::DelayModel::exponential(), source, grid, mc_samples, seed).curve;
        const auto rows = nmf::mae_metrics(curve, ref);
        const auto mean = nmf::mean_mae(rows);
        std::cout << "mean_prob_mae=" << mean.prob_mae << " mean_scaled_inf_mae=" << mean.scaled_inf_mae << "\n";
        if (!est_mae.empty()) {
          std::ofstream mae = open_out(est_mae);
          nmf::write_mae_csv(mae, rows);
        }
      } else if (!est_mae.empty()) {
        throw nmf::InvalidArgument("--mae-csv needs --truth");
      }
    } else if (*ev) {
      const nmf::TrainedModel model = nmf::load_model(ev_model);
      const nmf::DiffusionNetwork truth = nmf::load_network(ev_truth);
      if (truth.size() != model.size())
        throw nmf::InvalidArgument("shape mismatch: model n=" + std::to_string(model.size()) +
                                   ", truth n=" + std::to_string(truth.size()));
      const auto m = nmf::network_metrics(nmf::threshold_edges(model.theta.A, ev_eps), truth.edges(),
                                          model.theta.A, truth.transmission());
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << nmf::inference_metrics_json(m) << "\n";
    } else if (*im) {
      const nmf::TrainedModel model = nmf::load_model(im_model);
      nmf::InfMaxConfig cfg =
          im_config.empty() ? nmf::InfMaxConfig{} : nmf::infmax_config_from_json(nmf::read_text_file(im_config));
      if (im->count("--budget")) cfg.budget = im_budget;
      if (im->count("--T")) cfg.T = im_T;
      cfg.validate(model.size());
      const nmf::InfMaxResult r = nmf::pgd_infmax(model.theta, cfg, seed);
      std::cout << nmf::infmax_result_json(r) << "\n";
    } else if (*ver) {
      const nmf::VerifyReport report = nmf::run_verification(suite, ver_n, seed);
      std::cout << report.to_json() << "\n";
      if (const auto* f = report.first_failure()) {
        std::cerr << "FAILED " << f->suite << "/" << f->name << ": " << f->value << " > " << f->threshold << "\n";
        return kVerifyFailed;
      }
    }
  } catch (const nmf::DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (t=" << e.time() << ")\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
