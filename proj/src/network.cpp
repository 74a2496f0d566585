#include "nmf/network.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nmf/errors.hpp"

namespace nmf {

DiffusionNetwork::DiffusionNetwork(int n) : A_(Eigen::MatrixXd::Zero(n, n)) {
  if (n < 0) throw InvalidArgument("negative node count");
}

DiffusionNetwork::DiffusionNetwork(Eigen::MatrixXd transmission) : A_(std::move(transmission)) {
  if (A_.rows() != A_.cols()) throw InvalidArgument("transmission matrix must be square");
  for (Eigen::Index j = 0; j < A_.cols(); ++j) {
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      double a = A_(i, j);
      if (!std::isfinite(a) || a < 0.0) throw InvalidArgument("transmission rates must be finite and >= 0");
      if (i == j && a != 0.0) throw InvalidArgument("self-loop at node " + std::to_string(i));
    }
  }
}

EdgeSet DiffusionNetwork::edges() const {
  EdgeSet out;
  for (int src = 0; src < size(); ++src)
    for (int dst = 0; dst < size(); ++dst)
      if (A_(dst, src) > 0.0) out.push_back({src, dst});
  return out;
}

std::size_t DiffusionNetwork::edge_count() const {
  return static_cast<std::size_t>((A_.array() > 0.0).count());
}

Eigen::Matrix2d kronecker_seed(KroneckerKind kind) {
  Eigen::Matrix2d s;
  switch (kind) {
    case KroneckerKind::Hierarchical:
      s << 0.9, 0.1, 0.1, 0.9;
      break;
    case KroneckerKind::CorePeriphery:
      s << 0.9, 0.5, 0.5, 0.3;
      break;
    case KroneckerKind::Random:
      s << 0.5, 0.5, 0.5, 0.5;
      break;
  }
  return s;
}

KroneckerKind parse_kronecker_kind(const std::string& name) {
  if (name == "hier" || name == "hierarchical") return KroneckerKind::Hierarchical;
  if (name == "core" || name == "core-periphery") return KroneckerKind::CorePeriphery;
  if (name == "rand" || name == "random") return KroneckerKind::Random;
  throw InvalidArgument("unknown network kind '" + name + "'");
}

namespace {

void validate(const KroneckerSpec& spec) {
  if (spec.iterations < 1 || spec.iterations > 20) throw InvalidArgument("kronecker iterations must be in [1, 20]");
  if (!((spec.seed.array() >= 0.0).all() && (spec.seed.array() <= 1.0).all()))
    throw InvalidArgument("kronecker seed entries must lie in [0, 1]");
  const double n = std::ldexp(1.0, spec.iterations);
  if (!(spec.target_edges >= 0.0) || spec.target_edges > n * (n - 1.0))
    throw InvalidArgument("target_edges must be in [0, n(n-1)]");
  if (!(spec.rates.lo > 0.0 && spec.rates.lo < spec.rates.hi)) throw InvalidArgument("rate law needs 0 < lo < hi");
}

double expected_edges(const Eigen::MatrixXd& raw, double scale) {
  return (raw.array() * scale).min(1.0).sum();
}

}  // namespace

Eigen::MatrixXd kronecker_edge_probabilities(const KroneckerSpec& spec) {
  validate(spec);
  const int n = 1 << spec.iterations;
  Eigen::MatrixXd raw(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double p = 1.0;
      for (int bit = spec.iterations - 1; bit >= 0; --bit) p *= spec.seed((i >> bit) & 1, (j >> bit) & 1);
      raw(i, j) = i == j ? 0.0 : p;
    }
  }
  if (spec.target_edges == 0.0) return Eigen::MatrixXd::Zero(n, n);
  const auto support = (raw.array() > 0.0).count();
  if (static_cast<double>(support) < spec.target_edges)
    throw InvalidArgument("kronecker seed supports only " + std::to_string(support) + " edges");
  if (static_cast<double>(support) == spec.target_edges) return (raw.array() > 0.0).cast<double>().matrix();

  double lo = 0.0, hi = spec.target_edges / raw.sum();
  while (expected_edges(raw, hi) < spec.target_edges) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (expected_edges(raw, mid) < spec.target_edges ? lo : hi) = mid;
  }
  return (raw.array() * hi).min(1.0).matrix();
}

DiffusionNetwork generate_kronecker(const KroneckerSpec& spec, Rng& rng) {
  const Eigen::MatrixXd prob = kronecker_edge_probabilities(spec);
  const int n = static_cast<int>(prob.rows());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EdgeSet edges;
  for (int src = 0; src < n; ++src)
    for (int dst = 0; dst < n; ++dst)
      if (src != dst && unit(rng) < prob(src, dst)) edges.push_back({src, dst});
  return DiffusionNetwork(sample_rates(edges, n, spec.rates, rng));
}

Eigen::MatrixXd sample_rates(const EdgeSet& edges, int n, const RateLaw& law, Rng& rng) {
  if (!(law.lo > 0.0 && law.lo < law.hi)) throw InvalidArgument("rate law needs 0 < lo < hi");
  std::uniform_real_distribution<double> rate(law.lo, law.hi);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : edges) {
    if (e.src == e.dst) continue;
    A(e.dst, e.src) = rate(rng);
  }
  return A;
}

EdgeSet threshold_edges(const Eigen::MatrixXd& A, double eps) {
  EdgeSet out;
  for (Eigen::Index src = 0; src < A.cols(); ++src)
    for (Eigen::Index dst = 0; dst < A.rows(); ++dst)
      if (src != dst && A(dst, src) >= eps) out.push_back({static_cast<NodeId>(src), static_cast<NodeId>(dst)});
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void write_network(std::ostream& out, const DiffusionNetwork& net) {
  out << "# n=" << net.size() << '\n';
  for (const Edge& e : net.edges())
    out << e.src << '\t' << e.dst << '\t' << format_double(net.rate(e.src, e.dst)) << '\n';
}

DiffusionNetwork read_network(std::istream& in) {
  struct Row {
    NodeId src, dst;
    double alpha;
    std::size_t line;
  };
  std::vector<Row> rows;
  long declared_n = -1;
  int max_id = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      std::string_view body = trim(view.substr(1));
      if (body.substr(0, 2) == "n=") {
        long n = 0;
        if (!parse_number(trim(body.substr(2)), n) || n < 0) throw ParseError(lineno, "bad node-count header");
        declared_n = n;
      }
      continue;
    }
    std::string_view fields[3];
    int count = 0;
    std::size_t pos = 0;
    while (pos <= view.size()) {
      std::size_t tab = view.find('\t', pos);
      if (tab == std::string_view::npos) tab = view.size();
      if (count == 3) throw ParseError(lineno, "expected 3 tab-separated fields");
      fields[count++] = trim(view.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (count != 3) throw ParseError(lineno, "expected 3 tab-separated fields");
    Row r{0, 0, 0.0, lineno};
    if (!parse_number(fields[0], r.src) || !parse_number(fields[1], r.dst) || r.src < 0 || r.dst < 0)
      throw ParseError(lineno, "bad node id");
    if (!parse_number(fields[2], r.alpha) || !std::isfinite(r.alpha)) throw ParseError(lineno, "bad rate");
    if (r.alpha < 0.0) throw ParseError(lineno, "negative rate");
    if (r.alpha == 0.0) throw ParseError(lineno, "zero rate (edges need a positive rate)");
    if (r.src == r.dst) throw ParseError(lineno, "self-loop");
    max_id = std::max({max_id, r.src, r.dst});
    rows.push_back(r);
  }
  const long n = declared_n >= 0 ? declared_n : max_id + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (const Row& r : rows) {
    if (r.src >= n || r.dst >= n) throw ParseError(r.line, "node id out of range for n=" + std::to_string(n));
    if (A(r.dst, r.src) != 0.0) throw ParseError(r.line, "duplicate edge");
    A(r.dst, r.src) = r.alpha;
  }
  return DiffusionNetwork(std::move(A));
}

void save_network(const DiffusionNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  write_network(out, net);
}

DiffusionNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path);
  return read_network(in);
}

}  // namespace nmf
