#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace kpp {

/// Assignment of {0,1} decision variables.
using BinaryConfig = std::vector<std::uint8_t>;
/// Assignment of {-1,+1} spins.
using SpinConfig = std::vector<std::int8_t>;

/// Index pair (i, j) with i < j.
using Edge = std::pair<std::size_t, std::size_t>;
using CouplingMap = std::map<Edge, double>;

/// Linear terms, strictly upper-triangular quadratic terms and a constant.
///
/// Both problem forms use the same sign convention, with no leading minus:
///
///   E = sum_i linear[i] * v_i + sum_{i<j} quadratic[(i,j)] * v_i * v_j + offset
///
/// where v is a BinaryConfig for QuboProblem and a SpinConfig for
/// IsingProblem. Physics texts often write -sum J s s; this library never does.
struct QuadraticForm {
  std::size_t n = 0;
  std::vector<double> linear;
  CouplingMap quadratic;
  double offset = 0.0;

  QuadraticForm() = default;
  explicit QuadraticForm(std::size_t num_variables)
      : n(num_variables), linear(num_variables, 0.0) {}

  void add_linear(std::size_t i, double c);
  /// Accumulates c onto (min(i,j), max(i,j)). Diagonal pairs are rejected.
  void add_quadratic(std::size_t i, std::size_t j, double c);
  double quadratic_at(std::size_t i, std::size_t j) const;

  /// Throws DomainError on out-of-range keys, diagonal keys, a linear vector
  /// of the wrong length, or any non-finite coefficient.
  void validate() const;

  /// Removes explicitly stored zero couplings.
  void prune_zeros();
};

struct QuboProblem : QuadraticForm {
  using QuadraticForm::QuadraticForm;
};

/// `linear` holds the external field h, `quadratic` the coupling J.
struct IsingProblem : QuadraticForm {
  using QuadraticForm::QuadraticForm;
};

double qubo_energy(const QuboProblem& p, std::span<const std::uint8_t> x);
double ising_energy(const IsingProblem& p, std::span<const std::int8_t> s);

/// Substitutes x = (1 + s) / 2. Energies agree exactly for every config.
IsingProblem qubo_to_ising(const QuboProblem& p);
/// Substitutes s = 2x - 1; inverse of qubo_to_ising.
QuboProblem ising_to_qubo(const IsingProblem& p);

SpinConfig to_spins(std::span<const std::uint8_t> x);
BinaryConfig to_bits(std::span<const std::int8_t> s);

/// Dense random instance with fields and couplings uniform in [-scale, scale].
IsingProblem random_ising(std::size_t n, std::uint64_t seed, double scale = 1.0);
QuboProblem random_qubo(std::size_t n, std::uint64_t seed, double scale = 1.0);

/// Largest absolute coefficient difference, counting a missing coupling as 0.
double max_coefficient_difference(const QuadraticForm& a, const QuadraticForm& b);

}  // namespace kpp
