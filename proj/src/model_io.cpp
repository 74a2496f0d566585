#include "nmf/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nmf/errors.hpp"

namespace nmf {

using nlohmann::json;

namespace {

json integrator_json(const IntegratorConfig& c) {
  return {{"method", method_name(c.method)}, {"steps", c.steps}, {"horizon", c.horizon}};
}

void read_integrator(const json& j, IntegratorConfig& c) {
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  if (j.contains("steps")) c.steps = j.at("steps").get<int>();
  if (j.contains("horizon")) c.horizon = j.at("horizon").get<double>();
  c.validate();
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad JSON: ") + e.what());
  }
}

}  // namespace

void write_model(std::ostream& out, const TrainedModel& model) {
  const Eigen::VectorXd flat = model.theta.flatten();
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["n"] = model.size();
  j["architecture"] = kArchitecture;
  j["theta"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  j["integrator"] = integrator_json(model.integrator);
  j["metadata"] = {{"seed", model.seed}, {"loss_history", model.loss_history}};
  out << j.dump() << '\n';
}

TrainedModel read_model(std::istream& in) {
  return guarded([&] {
    const json j = json::parse(in);
    if (j.at("format").get<std::string>() != kModelFormat) throw InvalidArgument("not an nmf-model file");
    if (j.at("version").get<int>() != kModelVersion) throw InvalidArgument("unsupported model version");
    if (j.at("architecture").get<std::string>() != kArchitecture) throw InvalidArgument("unsupported architecture");
    const auto values = j.at("theta").get<std::vector<double>>();
    TrainedModel m;
    m.theta = ThetaD::unflatten(Eigen::Map<const Eigen::VectorXd>(values.data(), values.size()));
    if (m.theta.size() != j.at("n").get<int>()) throw InvalidArgument("model node count does not match parameters");
    m.theta.validate();
    read_integrator(j.at("integrator"), m.integrator);
    if (j.contains("metadata")) {
      const json& meta = j.at("metadata");
      if (meta.contains("seed")) m.seed = meta.at("seed").get<std::uint64_t>();
      if (meta.contains("loss_history")) m.loss_history = meta.at("loss_history").get<std::vector<double>>();
    }
    return m;
  });
}

void save_model(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  write_model(out, model);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path);
  return read_model(in);
}

TrainConfig train_config_from_json(const std::string& text) {
  return guarded([&] {
    const json j = json::parse(text);
    TrainConfig c;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("reg_coeff_A", c.reg_coeff_A);
    get("weight_decay", c.weight_decay);
    get("logsum_delta", c.logsum_delta);
    get("log_floor", c.log_floor);
    get("freeze_eta", c.freeze_eta);
    get("freeze_kernel", c.freeze_kernel);
    get("checkpointed", c.checkpointed);
    if (j.contains("adam")) {
      const json& a = j.at("adam");
      if (a.contains("lr")) c.adam.lr = a.at("lr").get<double>();
      if (a.contains("beta1")) c.adam.beta1 = a.at("beta1").get<double>();
      if (a.contains("beta2")) c.adam.beta2 = a.at("beta2").get<double>();
      if (a.contains("eps")) c.adam.eps = a.at("eps").get<double>();
    }
    if (j.contains("integrator")) read_integrator(j.at("integrator"), c.integrator);
    c.validate();
    return c;
  });
}

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
         {"reg_coeff_A", c.reg_coeff_A},
         {"weight_decay", c.weight_decay},
         {"integrator", integrator_json(c.integrator)},
         {"logsum_delta", c.logsum_delta},
         {"log_floor", c.log_floor},
         {"freeze_eta", c.freeze_eta},
         {"freeze_kernel", c.freeze_kernel},
         {"checkpointed", c.checkpointed}};
  return j.dump(2);
}

InfMaxConfig infmax_config_from_json(const std::string& text, InfMaxConfig c) {
  return guarded([&] {
    const json j = json::parse(text);
    if (j.contains("budget")) c.budget = j.at("budget").get<int>();
    if (j.contains("n0")) c.budget = j.at("n0").get<int>();
    if (j.contains("T")) c.T = j.at("T").get<double>();
    if (j.contains("step_size")) c.step_size = j.at("step_size").get<double>();
    if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
    if (j.contains("stagnation_window")) c.stagnation_window = j.at("stagnation_window").get<int>();
    if (j.contains("stagnation_tol")) c.stagnation_tol = j.at("stagnation_tol").get<double>();
    if (j.contains("grad_mode")) c.grad_mode = parse_grad_mode(j.at("grad_mode").get<std::string>());
    if (j.contains("integrator")) {
      const json& ij = j.at("integrator");
      if (ij.contains("method")) c.method = parse_method(ij.at("method").get<std::string>());
      if (ij.contains("steps")) c.steps = ij.at("steps").get<int>();
    }
    return c;
  });
}

KroneckerSpec kronecker_spec_from_json(const std::string& text) {
  return guarded([&] {
    const json j = json::parse(text);
    KroneckerSpec s;
    if (j.contains("seed")) {
      const auto rows = j.at("seed").get<std::vector<std::vector<double>>>();
      if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2)
        throw InvalidArgument("seed must be a 2x2 matrix");
      s.seed << rows[0][0], rows[0][1], rows[1][0], rows[1][1];
    } else if (j.contains("kind")) {
      s.seed = kronecker_seed(parse_kronecker_kind(j.at("kind").get<std::string>()));
    } else {
      throw InvalidArgument("network spec needs \"seed\" or \"kind\"");
    }
    s.iterations = j.at("iterations").get<int>();
    if (j.contains("target_edges"))
      s.target_edges = j.at("target_edges").get<double>();
    else if (j.contains("avg_degree"))
      s.target_edges = j.at("avg_degree").get<double>() * static_cast<double>(1L << s.iterations);
    else
      throw InvalidArgument("network spec needs \"target_edges\" or \"avg_degree\"");
    if (j.contains("rates")) {
      s.rates.lo = j.at("rates").at("lo").get<double>();
      s.rates.hi = j.at("rates").at("hi").get<double>();
    }
    return s;
  });
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nmf
