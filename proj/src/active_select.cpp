#include "kpp/active_select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "kpp/errors.hpp"
#include "kpp/problem_io.hpp"
#include "kpp/random.hpp"

namespace kpp::select {

using Eigen::Index;

EmbeddingStore::EmbeddingStore(std::vector<std::string> ids, Eigen::MatrixXd vectors, Eigen::VectorXd uncertainty)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), uncertainty_(std::move(uncertainty)) {
  if (static_cast<Index>(ids_.size()) != vectors_.rows() || vectors_.rows() != uncertainty_.size()) {
    throw DimensionError("store ids, vectors and uncertainty differ in length");
  }
  if (std::set<std::string>(ids_.begin(), ids_.end()).size() != ids_.size()) throw DomainError("duplicate sample id");
  if (!vectors_.allFinite()) throw DomainError("embedding contains non-finite values");
  if (!uncertainty_.allFinite() || (uncertainty_.array() < 0.0).any()) {
    throw DomainError("uncertainty scores must be finite and nonnegative");
  }
  for (Index r = 0; r < vectors_.rows(); ++r) {
    const double norm = vectors_.row(r).norm();
    if (norm == 0.0) throw DomainError("zero embedding for id '" + ids_[static_cast<std::size_t>(r)] + "'");
    vectors_.row(r) /= norm;
  }
}

EmbeddingStore EmbeddingStore::parse(const std::string& text) {
  std::istringstream in(text);
  std::size_t d = 0, m = 0;
  if (!(in >> d >> m)) throw ParseError(1, "expected header 'd m'");
  std::vector<std::string> ids(m);
  Eigen::MatrixXd vectors(static_cast<Index>(m), static_cast<Index>(d));
  Eigen::VectorXd u(static_cast<Index>(m));
  for (std::size_t r = 0; r < m; ++r) {
    if (!(in >> ids[r] >> u(static_cast<Index>(r)))) throw ParseError(r + 2, "expected 'id u v_1 ... v_d'");
    for (std::size_t c = 0; c < d; ++c) {
      if (!(in >> vectors(static_cast<Index>(r), static_cast<Index>(c)))) throw ParseError(r + 2, "too few vector components");
    }
  }
  return EmbeddingStore(std::move(ids), std::move(vectors), std::move(u));
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string EmbeddingStore::serialize() const {
  std::ostringstream os;
  os << dim() << ' ' << size() << '\n';
  for (std::size_t r = 0; r < size(); ++r) {
    os << ids_[r] << ' ' << format_double(uncertainty_(static_cast<Index>(r)));
    for (Index c = 0; c < vectors_.cols(); ++c) os << ' ' << format_double(vectors_(static_cast<Index>(r), c));
    os << '\n';
  }
  return os.str();
}

const std::string& EmbeddingStore::id(std::size_t index) const {
  if (index >= size()) throw IndexError("store index " + std::to_string(index) + " out of range");
  return ids_[index];
}

double EmbeddingStore::uncertainty(std::size_t index) const {
  if (index >= size()) throw IndexError("store index " + std::to_string(index) + " out of range");
  return uncertainty_(static_cast<Index>(index));
}

Eigen::VectorXd EmbeddingStore::get_embedding(std::size_t index) const {
  if (index >= size()) throw IndexError("store index " + std::to_string(index) + " out of range");
  return vectors_.row(static_cast<Index>(index)).transpose();
}

double EmbeddingStore::cosine(std::size_t a, std::size_t b) const {
  if (a >= size() || b >= size()) throw IndexError("store index out of range");
  return vectors_.row(static_cast<Index>(a)).dot(vectors_.row(static_cast<Index>(b)));
}

Solver parse_solver(const std::string& name) {
  if (name == "auto") return Solver::automatic;
  if (name == "exact") return Solver::exact;
  if (name == "sa" || name == "anneal") return Solver::anneal;
  throw ConfigError("unknown solver '" + name + "'");
}

namespace {

void check_candidates(const EmbeddingStore& store, const std::vector<std::size_t>& candidates) {
  std::set<std::size_t> seen;
  for (std::size_t c : candidates) {
    if (c >= store.size()) throw IndexError("candidate index " + std::to_string(c) + " out of range");
    if (!seen.insert(c).second) throw ConfigError("duplicate candidate index " + std::to_string(c));
  }
}

BinaryConfig exhaustive_minimum(const QuboProblem& q) {
  const ExactDistribution d = exact_enumerate(qubo_to_ising(q), 1.0);
  return to_bits(d.config(d.argmin));
}

}  // namespace

double cardinality_lambda_bound(const EmbeddingStore& store, const std::vector<std::size_t>& candidates, double gamma) {
  check_candidates(store, candidates);
  double max_h = 0.0, max_j = 0.0;
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    max_h = std::max(max_h, store.uncertainty(candidates[a]));
    for (std::size_t b = a + 1; b < candidates.size(); ++b) {
      max_j = std::max(max_j, gamma * std::max(0.0, store.cosine(candidates[a], candidates[b])));
    }
  }
  return 10.0 * max_h + 10.0 * static_cast<double>(candidates.size()) * max_j;
}

double exchange_lambda_threshold(const EmbeddingStore& store, const std::vector<std::size_t>& candidates,
                                 double gamma, std::size_t k) {
  check_candidates(store, candidates);
  double max_u = 0.0, max_cos = 0.0;
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    max_u = std::max(max_u, store.uncertainty(candidates[a]));
    for (std::size_t b = a + 1; b < candidates.size(); ++b) {
      max_cos = std::max(max_cos, store.cosine(candidates[a], candidates[b]));
    }
  }
  const double growth = k > 0 ? gamma * static_cast<double>(k - 1) * max_cos : 0.0;
  return std::max(max_u, growth);
}

QuboProblem build_selection_qubo(const EmbeddingStore& store, const std::vector<std::size_t>& candidates,
                                 const SelectionConfig& cfg) {
  check_candidates(store, candidates);
  const std::size_t n = candidates.size();
  if (cfg.k < 1 || cfg.k > n) {
    throw ConfigError("batch size k=" + std::to_string(cfg.k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (!(cfg.gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
  const double lambda = cfg.lambda ? *cfg.lambda : cardinality_lambda_bound(store, candidates, cfg.gamma);
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");

  const double k = static_cast<double>(cfg.k);
  QuboProblem q(n);
  q.offset = lambda * k * k;
  for (std::size_t a = 0; a < n; ++a) {
    q.linear[a] = -store.uncertainty(candidates[a]) + lambda * (1.0 - 2.0 * k);
    for (std::size_t b = a + 1; b < n; ++b) {
      const double c = cfg.gamma * std::max(0.0, store.cosine(candidates[a], candidates[b])) + 2.0 * lambda;
      if (c != 0.0) q.quadratic[{a, b}] = c;
    }
  }
  return q;
}

SelectionResult select_batch(const EmbeddingStore& store, const std::vector<std::size_t>& candidates,
                             const SelectionConfig& cfg) {
  const QuboProblem q = build_selection_qubo(store, candidates, cfg);
  Solver solver = cfg.solver;
  if (solver == Solver::automatic) solver = q.n <= kMaxExhaustiveCandidates ? Solver::exact : Solver::anneal;

  BinaryConfig x;
  if (solver == Solver::exact) {
    if (q.n > kMaxExhaustiveCandidates) {
      throw SizeLimitError("exhaustive selection supports at most " + std::to_string(kMaxExhaustiveCandidates) + " candidates");
    }
    x = exhaustive_minimum(q);
  } else {
    SamplerConfig sc = cfg.sampler;
    sc.top_k = 1;  // only the best read is used
    x = to_bits(simulated_anneal(qubo_to_ising(q), sc).lowest().spins);
  }

  SelectionResult r;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (x[a]) r.chosen.push_back(candidates[a]);
  }
  std::sort(r.chosen.begin(), r.chosen.end());
  for (std::size_t c : r.chosen) r.ids.push_back(store.id(c));
  r.objective = qubo_energy(q, x);
  if (r.chosen.size() >= 2) r.diversity = diversity_score(store, r.chosen);
  return r;
}

double diversity_score(const EmbeddingStore& store, const std::vector<std::size_t>& chosen) {
  if (chosen.size() < 2) throw DomainError("diversity needs at least two samples");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < chosen.size(); ++a) {
    for (std::size_t b = a + 1; b < chosen.size(); ++b, ++pairs) sum += store.cosine(chosen[a], chosen[b]);
  }
  return sum / static_cast<double>(pairs);
}

ClusteredStore clustered_store(std::size_t points, std::size_t clusters, std::size_t dim, double spread,
                               std::uint64_t seed) {
  if (clusters == 0 || points < clusters || dim == 0) throw ConfigError("invalid clustered store shape");
  Rng rng(seed);
  Eigen::MatrixXd centers(static_cast<Index>(clusters), static_cast<Index>(dim));
  for (Index c = 0; c < centers.rows(); ++c) {
    for (Index j = 0; j < centers.cols(); ++j) centers(c, j) = rng.uniform(-1.0, 1.0);
    centers.row(c).normalize();
  }
  std::vector<std::string> ids;
  std::vector<std::size_t> label;
  Eigen::MatrixXd vectors(static_cast<Index>(points), static_cast<Index>(dim));
  Eigen::VectorXd u(static_cast<Index>(points));
  for (std::size_t r = 0; r < points; ++r) {
    const std::size_t c = r % clusters;
    for (Index j = 0; j < vectors.cols(); ++j) {
      vectors(static_cast<Index>(r), j) = centers(static_cast<Index>(c), j) + rng.uniform(-spread, spread);
    }
    u(static_cast<Index>(r)) = rng.uniform();
    ids.push_back("s" + std::to_string(r));
    label.push_back(c);
  }
  return {EmbeddingStore(std::move(ids), std::move(vectors), std::move(u)), std::move(label)};
}

}  // namespace kpp::select
