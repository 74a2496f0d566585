#pragma once

#include <iosfwd>
#include <string>

#include "nmf/infmax.hpp"
#include "nmf/network.hpp"
#include "nmf/training.hpp"

namespace nmf {

// Model container (JSON):
// {
//   "format": "nmf-model", "version": 1, "n": <int>,
//   "architecture": "mlp2-elu-clamp01+diag-exp-kernel",
//   "theta": [<4n^2 + 4n doubles, layout A, W1, b1, W2, b2, B, C; column-major>],
//   "integrator": {"method": "rk4"|"euler", "steps": <int>, "horizon": <double>},
//   "metadata": {"seed": <uint64>, "loss_history": [<double>...]}
// }
inline constexpr const char* kModelFormat = "nmf-model";
inline constexpr int kModelVersion = 1;
inline constexpr const char* kArchitecture = "mlp2-elu-clamp01+diag-exp-kernel";

void write_model(std::ostream& out, const TrainedModel& model);
TrainedModel read_model(std::istream& in);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// JSON configs use the struct field names; absent fields keep their defaults.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);
InfMaxConfig infmax_config_from_json(const std::string& text, InfMaxConfig base = {});

/// {"seed": [[a,b],[c,d]] | "kind": "hier"|"core"|"rand", "iterations": k,
///  "target_edges": m | "avg_degree": d, "rates": {"lo": .., "hi": ..}}
KroneckerSpec kronecker_spec_from_json(const std::string& text);

std::string read_text_file(const std::string& path);

}  // namespace nmf
