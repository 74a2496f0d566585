#include "nmf/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "nmf/errors.hpp"
#include "nmf/parallel.hpp"

namespace nmf {

void validate(const DelayLaw& law) {
  std::visit(
      [](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        bool ok;
        if constexpr (std::is_same_v<L, Weibull>)
          ok = l.shape > 0.0 && l.scale > 0.0;
        else
          ok = l.rate > 0.0;
        if (!ok) throw InvalidArgument("delay law parameters must be positive");
      },
      law);
}

double sample_delay(const DelayLaw& law, Rng& rng) {
  // Inverse-CDF draws from u in (0, 1]; u -> 1 gives t -> 0+.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = 1.0 - unit(rng);
  return std::visit(
      [u](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Exponential>)
          return -std::log(u) / l.rate;
        else if constexpr (std::is_same_v<L, Rayleigh>)
          return std::sqrt(-2.0 * std::log(u) / l.rate);
        else
          return l.scale * std::pow(-std::log(u), 1.0 / l.shape);
      },
      law);
}

DelayKind parse_delay_kind(const std::string& name) {
  if (name == "exp" || name == "exponential") return DelayKind::Exponential;
  if (name == "ray" || name == "rayleigh") return DelayKind::Rayleigh;
  if (name == "wbl" || name == "weibull") return DelayKind::Weibull;
  throw InvalidArgument("unknown delay law '" + name + "'");
}

std::string delay_kind_name(DelayKind kind) {
  switch (kind) {
    case DelayKind::Exponential:
      return "exp";
    case DelayKind::Rayleigh:
      return "ray";
    case DelayKind::Weibull:
      return "wbl";
  }
  return "exp";
}

DelayModel DelayModel::weibull(const DiffusionNetwork& net, Rng& rng, double lo, double hi) {
  const int n = net.size();
  DelayModel m{DelayKind::Weibull, Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  std::uniform_real_distribution<double> param(lo, hi);
  for (const Edge& e : net.edges()) {
    m.shape(e.dst, e.src) = param(rng);
    m.scale(e.dst, e.src) = param(rng);
  }
  return m;
}

DelayLaw DelayModel::law(const DiffusionNetwork& net, NodeId src, NodeId dst) const {
  switch (kind) {
    case DelayKind::Exponential:
      return Exponential{net.rate(src, dst)};
    case DelayKind::Rayleigh:
      return Rayleigh{net.rate(src, dst)};
    case DelayKind::Weibull:
      if (shape.rows() != net.size()) throw InvalidArgument("weibull parameters do not match the network");
      return Weibull{shape(dst, src), scale(dst, src)};
  }
  throw InvalidArgument("bad delay kind");
}

void Cascade::validate() const {
  const int n = size();
  if (!(horizon > 0.0)) throw DataError("cascade horizon must be > 0");
  std::vector<char> is_source(n, 0);
  for (NodeId s : source) {
    if (s < 0 || s >= n) throw DataError("source id out of range");
    if (is_source[s]) throw DataError("duplicate source id");
    is_source[s] = 1;
  }
  std::vector<double> finite;
  for (int i = 0; i < n; ++i) {
    const double t = times[i];
    if (is_source[i]) {
      if (t != 0.0) throw DataError("source node must have time 0");
    } else if (t != kNever) {
      if (!(t > 0.0 && t <= horizon)) throw DataError("infection time outside (0, T]");
      finite.push_back(t);
    }
  }
  std::sort(finite.begin(), finite.end());
  if (std::adjacent_find(finite.begin(), finite.end()) != finite.end())
    throw DataError("duplicate infection times");
}

namespace {

template <class Draw>
Cascade run_event_queue(int n, const std::vector<NodeId>& source, double horizon, Draw&& relax_neighbours) {
  if (source.empty()) throw InvalidArgument("source set must be nonempty");
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be > 0");
  Cascade c;
  c.source = source;
  std::sort(c.source.begin(), c.source.end());
  c.source.erase(std::unique(c.source.begin(), c.source.end()), c.source.end());
  c.horizon = horizon;
  c.times.assign(n, kNever);

  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::vector<double> tentative(n, kNever);
  std::vector<char> done(n, 0);
  for (NodeId s : c.source) {
    if (s < 0 || s >= n) throw InvalidArgument("source id out of range");
    tentative[s] = 0.0;
    queue.emplace(0.0, s);
  }
  while (!queue.empty()) {
    auto [t, i] = queue.top();
    queue.pop();
    if (done[i] || t > tentative[i]) continue;
    if (t > horizon) break;
    done[i] = 1;
    c.times[i] = t;
    relax_neighbours(i, [&](NodeId j, double delay) {
      const double cand = t + delay;
      if (!done[j] && cand < tentative[j]) {
        tentative[j] = cand;
        queue.emplace(cand, j);
      }
    }, done);
  }
  return c;
}

}  // namespace

CascadeSimulator::CascadeSimulator(const DiffusionNetwork& net, const DelayModel& delays) : out_(net.size()) {
  for (const Edge& e : net.edges()) {
    DelayLaw law = delays.law(net, e.src, e.dst);
    validate(law);
    out_[e.src].push_back({e.dst, law});
  }
}

Cascade CascadeSimulator::simulate(const std::vector<NodeId>& source, double horizon, Rng& rng) const {
  return run_event_queue(size(), source, horizon, [&](NodeId i, auto&& relax, const std::vector<char>& done) {
    for (const Arc& a : out_[i])
      if (!done[a.dst]) relax(a.dst, sample_delay(a.law, rng));
  });
}

Cascade simulate_cascade(const DiffusionNetwork& net, const std::vector<NodeId>& source, double horizon,
                         const DelayModel& delays, Rng& rng) {
  return CascadeSimulator(net, delays).simulate(source, horizon, rng);
}

Cascade simulate_cascade(const DiffusionNetwork& net, const std::vector<NodeId>& source, double horizon,
                         const DelaySampler& sampler) {
  const int n = net.size();
  return run_event_queue(n, source, horizon, [&](NodeId i, auto&& relax, const std::vector<char>& done) {
    for (NodeId j = 0; j < n; ++j)
      if (net.rate(i, j) > 0.0 && !done[j]) relax(j, sampler(i, j));
  });
}

std::vector<NodeId> sample_source_set(int n, int min_size, int max_size, Rng& rng) {
  if (min_size < 1 || max_size < min_size || max_size > n) throw InvalidArgument("source size range must lie in [1, n]");
  std::uniform_int_distribution<int> size_dist(min_size, max_size);
  const int k = size_dist(rng);
  std::vector<NodeId> nodes(n);
  std::iota(nodes.begin(), nodes.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(nodes[i], nodes[pick(rng)]);
  }
  nodes.resize(k);
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

CascadeSet build_dataset(const DiffusionNetwork& net, const DelayModel& delays, const SourceSampler& sources,
                         int cascades_per_source, double horizon, std::uint64_t seed, unsigned threads) {
  if (sources.count < 0 || cascades_per_source < 0) throw InvalidArgument("counts must be nonnegative");
  CascadeSet set{net.size(), horizon, {}};
  Rng source_rng = substream(seed, "sources");
  std::vector<std::vector<NodeId>> source_sets;
  for (int s = 0; s < sources.count; ++s)
    source_sets.push_back(sample_source_set(net.size(), sources.min_size, sources.max_size, source_rng));

  const CascadeSimulator sim(net, delays);
  const std::size_t total = static_cast<std::size_t>(sources.count) * cascades_per_source;
  set.cascades.resize(total);
  parallel_for(total, threads, [&](std::size_t k) {
    Rng rng = substream(seed, "cascade", k);
    set.cascades[k] = sim.simulate(source_sets[k / cascades_per_source], horizon, rng);
  });
  return set;
}

McEstimate estimate_probs_mc(const DiffusionNetwork& net, const DelayModel& delays,
                             const std::vector<NodeId>& source, const std::vector<double>& grid, int num_samples,
                             std::uint64_t seed, unsigned threads) {
  if (num_samples < 1) throw InvalidArgument("num_samples must be >= 1");
  if (!std::is_sorted(grid.begin(), grid.end())) throw InvalidArgument("grid must be ascending");
  const int n = net.size();
  const double horizon = grid.empty() ? 1.0 : std::max(grid.back(), 1e-300);
  const CascadeSimulator sim(net, delays);

  // Per-sample infection times, reduced in sample order.
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(threads, num_samples));
  std::vector<Eigen::MatrixXd> counts(chunks, Eigen::MatrixXd::Zero(grid.size(), n));
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = num_samples * c / chunks, end = num_samples * (c + 1) / chunks;
    for (std::size_t k = begin; k < end; ++k) {
      Rng rng = substream(seed, "mc", k);
      const Cascade cas = sim.simulate(source, horizon, rng);
      for (std::size_t l = 0; l < grid.size(); ++l)
        for (int i = 0; i < n; ++i)
          if (cas.times[i] <= grid[l]) counts[c](l, i) += 1.0;
    }
  });
  McEstimate out;
  out.curve.grid = grid;
  out.curve.values = Eigen::MatrixXd::Zero(grid.size(), n);
  for (const auto& c : counts) out.curve.values += c;
  out.curve.values /= num_samples;
  out.std_error = (out.curve.values.array() * (1.0 - out.curve.values.array()) / num_samples).sqrt().matrix();
  return out;
}

std::vector<double> uniform_grid(double horizon, int points) {
  if (points < 1) throw InvalidArgument("grid needs at least one point");
  std::vector<double> g(points);
  for (int l = 1; l <= points; ++l) g[l - 1] = horizon * l / points;
  g.back() = horizon;
  return g;
}

Eigen::VectorXd indicator(int n, const std::vector<NodeId>& nodes) {
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(n);
  for (NodeId i : nodes) {
    if (i < 0 || i >= n) throw InvalidArgument("node id " + std::to_string(i) + " out of range");
    chi(i) = 1.0;
  }
  return chi;
}

// ---- JSONL ----------------------------------------------------------------

using nlohmann::json;

std::string cascade_to_json(const Cascade& c) {
  std::vector<std::pair<double, NodeId>> events;
  std::vector<char> is_source(c.size(), 0);
  for (NodeId s : c.source) is_source[s] = 1;
  for (int i = 0; i < c.size(); ++i)
    if (!is_source[i] && c.times[i] != kNever) events.emplace_back(c.times[i], i);
  std::sort(events.begin(), events.end());
  json j;
  j["source"] = c.source;
  j["events"] = json::array();
  for (auto [t, i] : events) j["events"].push_back(json::array({i, t}));
  j["horizon"] = c.horizon;
  return j.dump();
}

namespace {

struct RawCascade {
  std::vector<NodeId> source;
  std::vector<std::pair<NodeId, double>> events;
  double horizon;
  int max_id;
};

RawCascade parse_raw(const std::string& line, std::size_t lineno) {
  try {
    const json j = json::parse(line);
    RawCascade r{j.at("source").get<std::vector<NodeId>>(), {}, j.at("horizon").get<double>(), -1};
    for (const auto& ev : j.at("events")) {
      if (!ev.is_array() || ev.size() != 2) throw ParseError(lineno, "event must be [node, time]");
      r.events.emplace_back(ev[0].get<NodeId>(), ev[1].get<double>());
    }
    for (NodeId s : r.source) r.max_id = std::max(r.max_id, s);
    for (auto& [i, t] : r.events) r.max_id = std::max(r.max_id, i);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(lineno, e.what());
  }
}

Cascade assemble(const RawCascade& r, int n, std::size_t lineno) {
  Cascade c;
  c.source = r.source;
  std::sort(c.source.begin(), c.source.end());
  c.horizon = r.horizon;
  c.times.assign(n, kNever);
  for (NodeId s : r.source) {
    if (s < 0 || s >= n) throw ParseError(lineno, "source id out of range");
    c.times[s] = 0.0;
  }
  for (auto [i, t] : r.events) {
    if (i < 0 || i >= n) throw ParseError(lineno, "event node out of range");
    if (c.times[i] != kNever) throw ParseError(lineno, "node " + std::to_string(i) + " listed twice");
    c.times[i] = t;
  }
  try {
    c.validate();
  } catch (const DataError& e) {
    throw ParseError(lineno, e.what());
  }
  return c;
}

}  // namespace

Cascade cascade_from_json(const std::string& line, int n_hint, std::size_t lineno) {
  RawCascade r = parse_raw(line, lineno);
  return assemble(r, std::max(n_hint, r.max_id + 1), lineno);
}

void write_cascades(std::ostream& out, const CascadeSet& set) {
  for (const Cascade& c : set.cascades) out << cascade_to_json(c) << '\n';
}

CascadeSet read_cascades(std::istream& in, int n_hint) {
  std::vector<std::pair<RawCascade, std::size_t>> raws;
  std::string line;
  std::size_t lineno = 0;
  int n = n_hint;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    raws.emplace_back(parse_raw(line, lineno), lineno);
    n = std::max(n, raws.back().first.max_id + 1);
  }
  CascadeSet set{n, 0.0, {}};
  for (auto& [r, ln] : raws) {
    if (set.cascades.empty())
      set.horizon = r.horizon;
    else if (r.horizon != set.horizon)
      throw ParseError(ln, "cascades must share one horizon");
    set.cascades.push_back(assemble(r, n, ln));
  }
  return set;
}

void save_cascades(const CascadeSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  write_cascades(out, set);
}

CascadeSet load_cascades(const std::string& path, int n_hint) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path);
  return read_cascades(in, n_hint);
}

// ---- CSV ------------------------------------------------------------------

void write_prob_curve(std::ostream& out, const ProbCurve& curve) {
  out << 't';
  for (int i = 0; i < curve.nodes(); ++i) out << ",x" << i;
  out << '\n';
  std::ostringstream row;
  row.precision(17);
  for (std::size_t l = 0; l < curve.grid.size(); ++l) {
    row.str("");
    row << curve.grid[l];
    for (int i = 0; i < curve.nodes(); ++i) row << ',' << curve.values(l, i);
    out << row.str() << '\n';
  }
}

ProbCurve read_prob_curve(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  const int n = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(lineno, "bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(row.size()) != n + 1) throw ParseError(lineno, "wrong column count");
    rows.push_back(std::move(row));
  }
  ProbCurve c;
  c.values.resize(rows.size(), n);
  for (std::size_t l = 0; l < rows.size(); ++l) {
    c.grid.push_back(rows[l][0]);
    for (int i = 0; i < n; ++i) c.values(l, i) = rows[l][i + 1];
  }
  return c;
}

}  // namespace nmf
