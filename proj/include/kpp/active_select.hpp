#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kpp/ising.hpp"
#include "kpp/sampling.hpp"

namespace kpp::select {

/// In-memory vector store: one unit-normalized embedding and one
/// nonnegative uncertainty score per sample.
class EmbeddingStore {
 public:
  /// Rows are L2-normalized; zero rows, duplicate ids and negative or
  /// non-finite scores are rejected.
  EmbeddingStore(std::vector<std::string> ids, Eigen::MatrixXd vectors, Eigen::VectorXd uncertainty);

  /// File format: header "d m", then m lines "id u v_1 ... v_d".
  static EmbeddingStore load(const std::string& path);
  static EmbeddingStore parse(const std::string& text);
  std::string serialize() const;

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const std::string& id(std::size_t index) const;
  double uncertainty(std::size_t index) const;
  /// Throws IndexError when index >= size().
  Eigen::VectorXd get_embedding(std::size_t index) const;
  double cosine(std::size_t a, std::size_t b) const;

 private:
  std::vector<std::string> ids_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd uncertainty_;
};

enum class Solver { automatic, exact, anneal };

Solver parse_solver(const std::string& name);

inline constexpr std::size_t kMaxExhaustiveCandidates = 20;

struct SelectionConfig {
  std::size_t k = 1;
  double gamma = 1.0;
  /// Cardinality penalty weight. Empty selects cardinality_lambda_bound().
  std::optional<double> lambda;
  /// automatic: exhaustive up to kMaxExhaustiveCandidates, annealing above.
  Solver solver = Solver::automatic;
  SamplerConfig sampler;
};

struct SelectionResult {
  std::vector<std::size_t> chosen;  // store indices, ascending
  std::vector<std::string> ids;
  double objective = 0.0;
  std::optional<double> diversity;  // set when at least two are chosen
};

/// Selection objective over candidate subsets (x_i = 1 selects candidate i):
///   h_i  = -u_i + lambda (1 - 2k)
///   J_ij = gamma max(0, cos(v_i, v_j)) + 2 lambda
///   offset = lambda k^2
/// i.e. -sum u_i x_i + gamma sum max(0, cos) x_i x_j + lambda (sum x_i - k)^2.
QuboProblem build_selection_qubo(const EmbeddingStore& store, const std::vector<std::size_t>& candidates,
                                 const SelectionConfig& cfg);

/// 10 max|h| + 10 n max|J| of the penalty-free objective; any lambda at or
/// above it makes every minimizer select exactly k candidates.
double cardinality_lambda_bound(const EmbeddingStore& store, const std::vector<std::size_t>& candidates, double gamma);

/// Exchange-argument threshold max(max u, gamma (k-1) max cos+). Any lambda
/// strictly above it also forces cardinality k: dropping an item from an
/// oversized set or adding one to an undersized set then always lowers the
/// objective. Much smaller than cardinality_lambda_bound(), so annealing copes
/// far better with the resulting landscape.
double exchange_lambda_threshold(const EmbeddingStore& store, const std::vector<std::size_t>& candidates,
                                 double gamma, std::size_t k);

SelectionResult select_batch(const EmbeddingStore& store, const std::vector<std::size_t>& candidates,
                             const SelectionConfig& cfg);

/// Mean pairwise cosine similarity; needs at least two indices.
double diversity_score(const EmbeddingStore& store, const std::vector<std::size_t>& chosen);

struct ClusteredStore {
  EmbeddingStore store;
  std::vector<std::size_t> cluster;  // cluster label per row
};

/// Synthetic benchmark: `points` embeddings around `clusters` random unit
/// centers in `dim` dimensions with per-coordinate jitter `spread`;
/// uncertainty uniform in [0, 1).
ClusteredStore clustered_store(std::size_t points, std::size_t clusters, std::size_t dim, double spread,
                               std::uint64_t seed);

}  // namespace kpp::select
