#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kpp/ising.hpp"

namespace kpp {

/// Geometric cooling: T <- T * decay after every `sweeps_per_stage` sweeps,
/// clamped so the last stage runs exactly at t_final.
struct AnnealSchedule {
  /// Empty means auto-scale per read: max(1, largest |dE| of a single flip
  /// from that read's random starting state).
  std::optional<double> t_initial;
  double t_final = 0.05;
  double decay = 0.98;
  std::size_t sweeps_per_stage = 4;

  void validate() const;
};

struct SamplerConfig {
  std::size_t reads = 2000;
  AnnealSchedule schedule;
  std::uint64_t seed = 0;
  std::optional<std::size_t> top_k = 100;
  /// Sampling mode. When set, the anneal ends at temperature 1/beta and every
  /// read reports its final state, so reads approximate Boltzmann(beta). When
  /// empty, each read reports the best configuration it visited.
  std::optional<double> beta;

  void validate() const;
};

struct SampleEntry {
  SpinConfig spins;
  double energy = 0.0;
  std::uint64_t multiplicity = 0;

  friend bool operator==(const SampleEntry&, const SampleEntry&) = default;
};

/// Distinct configurations sorted by (energy, spins) ascending.
struct SampleSet {
  std::size_t n = 0;
  std::vector<SampleEntry> entries;

  std::uint64_t total_multiplicity() const;
  bool empty() const { return entries.empty(); }
  const SampleEntry& lowest() const;

  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

/// De-duplicates raw reads, evaluates exact energies and sorts.
SampleSet aggregate_reads(const IsingProblem& p, const std::vector<SpinConfig>& reads);

/// Throws DomainError if `s` violates ordering, distinctness, positive
/// multiplicity or energy consistency (1e-9) against `p`.
void check_sample_set(const SampleSet& s, const IsingProblem& p);

SampleSet simulated_anneal(const IsingProblem& p, const SamplerConfig& cfg);

struct MetropolisConfig {
  double beta = 1.0;
  std::size_t sweeps = 100000;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Single-site Metropolis at fixed beta with uniformly chosen sites; one sweep
/// is n proposals. Keeps the state after every `thin`-th post-burn-in sweep.
SampleSet metropolis_fixed_temperature(const IsingProblem& p, const MetropolisConfig& cfg);

inline constexpr std::size_t kMaxExactVariables = 24;

/// Boltzmann distribution over all 2^n spin configurations. Configuration
/// index k has s_i = +1 iff bit i of k is set.
struct ExactDistribution {
  std::size_t n = 0;
  double beta = 1.0;
  std::vector<double> probabilities;
  double log_partition = 0.0;
  double min_energy = 0.0;
  std::uint64_t argmin = 0;

  SpinConfig config(std::uint64_t index) const;
};

ExactDistribution exact_enumerate(const IsingProblem& p, double beta);

/// Exact distribution quantized to `reads` by largest-remainder rounding;
/// configurations whose share rounds to zero are dropped.
SampleSet exact_sample_set(const IsingProblem& p, const ExactDistribution& d, std::size_t reads);

/// Keeps the k lowest (energy, spins) entries with their multiplicities.
SampleSet postprocess_topk(SampleSet raw, std::size_t k);

enum class MomentWeighting { multiplicity, uniform };

/// first(i) = <s_i>, second(i, j) = <s_i s_j> with unit diagonal.
struct MomentEstimates {
  Eigen::VectorXd first;
  Eigen::MatrixXd second;
};

MomentEstimates estimate_moments(const SampleSet& s, MomentWeighting weighting = MomentWeighting::multiplicity);
MomentEstimates exact_moments(const ExactDistribution& d);

std::string spins_to_string(const SpinConfig& s);
SpinConfig spins_from_string(std::string_view text);

/// Text form: "# n=<n> reads=<reads> seed=<seed>" followed by one
/// "energy multiplicity spins" line per entry.
std::string format_sample_set(const SampleSet& s, std::uint64_t reads, std::uint64_t seed);
SampleSet parse_sample_set(std::string_view text);

}  // namespace kpp
