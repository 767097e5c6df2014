#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "kpp/backend.hpp"
#include "kpp/ising.hpp"

namespace kpp::ebm {

/// Restricted Boltzmann machine over v in {0,1}^n_visible, h in {0,1}^n_hidden:
///
///   E(v, h) = -b.v - c.h - v^T W h
///
/// Note the leading minus signs, unlike the Ising/QUBO forms in ising.hpp.
struct RbmParams {
  Eigen::MatrixXd weights;        // n_visible x n_hidden
  Eigen::VectorXd visible_bias;   // b
  Eigen::VectorXd hidden_bias;    // c

  RbmParams() = default;
  RbmParams(std::size_t n_visible, std::size_t n_hidden);

  std::size_t n_visible() const { return static_cast<std::size_t>(visible_bias.size()); }
  std::size_t n_hidden() const { return static_cast<std::size_t>(hidden_bias.size()); }
  void validate() const;
};

/// Fully visible Boltzmann machine over z in {0,1}^n:
///
///   E(z) = -bias.z - sum_{i<j} coupling(i, j) z_i z_j
///
/// Only the strict upper triangle of `coupling` is meaningful; validate()
/// rejects anything stored on or below the diagonal.
struct BmParams {
  Eigen::MatrixXd coupling;
  Eigen::VectorXd bias;

  BmParams() = default;
  explicit BmParams(std::size_t n);

  std::size_t n() const { return static_cast<std::size_t>(bias.size()); }
  void validate() const;
};

/// The same machine with visible units first, then hidden units.
BmParams as_boltzmann(const RbmParams& p);

double rbm_energy(const RbmParams& p, std::span<const std::uint8_t> v, std::span<const std::uint8_t> h);
double bm_energy(const BmParams& p, std::span<const std::uint8_t> z);

enum class Layer { visible, hidden };

struct UnitRef {
  Layer layer;
  std::size_t unit;
  friend bool operator==(const UnitRef&, const UnitRef&) = default;
};

struct IsingImage {
  IsingProblem problem;
  std::vector<UnitRef> units;  // spin index -> unit
};

/// Substitutes z = (1 + s) / 2. The resulting Ising energy, offset included,
/// equals the machine's energy for every configuration.
IsingImage to_ising(const BmParams& p);
IsingImage to_ising(const RbmParams& p);

/// Unit means <z_i> and pairwise moments <z_i z_j> (diagonal = means), over
/// all units in as_boltzmann order.
struct PhaseStatistics {
  Eigen::VectorXd means;
  Eigen::MatrixXd correlations;

  void validate() const;
};

PhaseStatistics from_spin_moments(const MomentEstimates& m);

/// Data-side statistics. For an RBM the hidden units use the exact
/// conditionals p(h_j = 1 | v) = logistic(c_j + sum_i v_i W_ij).
PhaseStatistics positive_phase(const RbmParams& p, const std::vector<BinaryConfig>& batch);
PhaseStatistics positive_phase(const BmParams& p, const std::vector<BinaryConfig>& batch);

/// Model-side statistics from sampling the joint Ising image. The exact
/// backend uses the enumerated distribution directly (no read quantization);
/// other backends estimate moments from their SampleSet. An unset
/// sampler.beta is taken as 1 so annealing backends run in sampling mode.
PhaseStatistics negative_phase(const BmParams& p, Backend backend, const BackendConfig& cfg,
                               MomentWeighting weighting = MomentWeighting::multiplicity);
PhaseStatistics negative_phase(const RbmParams& p, Backend backend, const BackendConfig& cfg,
                               MomentWeighting weighting = MomentWeighting::multiplicity);

/// Energy expectation implied by phase statistics (energy is linear in them).
double expected_energy(const BmParams& p, const PhaseStatistics& s);

/// mean_data[E] - E_model[E].
double energy_difference_loss(const RbmParams& p, const std::vector<BinaryConfig>& batch, const PhaseStatistics& neg);
double energy_difference_loss(const BmParams& p, const std::vector<BinaryConfig>& batch, const PhaseStatistics& neg);

struct RbmGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd visible_bias;
  Eigen::VectorXd hidden_bias;

  double max_abs() const;
};

struct BmGradient {
  Eigen::MatrixXd coupling;  // strict upper triangle
  Eigen::VectorXd bias;

  double max_abs() const;
};

/// d NLL / d theta = <dE/dtheta>_data - <dE/dtheta>_model, i.e. for weights
/// <v_i h_j>_model - <v_i h_j>_data. Descent subtracts lr times this.
RbmGradient gradient_from_phases(const RbmParams& p, const PhaseStatistics& pos, const PhaseStatistics& neg);
BmGradient gradient_from_phases(const BmParams& p, const PhaseStatistics& pos, const PhaseStatistics& neg);

RbmGradient parameter_gradients(const RbmParams& p, const std::vector<BinaryConfig>& batch, Backend backend,
                                const BackendConfig& cfg);
BmGradient parameter_gradients(const BmParams& p, const std::vector<BinaryConfig>& batch, Backend backend,
                               const BackendConfig& cfg);

inline constexpr std::size_t kMaxExactUnits = 20;

/// Average -log p(v) by enumeration (hidden units summed analytically).
double exact_nll(const RbmParams& p, const std::vector<BinaryConfig>& data);
double exact_nll(const BmParams& p, const std::vector<BinaryConfig>& data);

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 100;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  Backend backend = Backend::exact;
  BackendConfig sampling = default_sampling();
  double weight_init_scale = 0.01;
  std::uint64_t seed = 0;
  /// Record exact NLL each epoch when the model is small enough.
  bool track_nll = true;

  static BackendConfig default_sampling();
  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> nll;
};

struct TrainResult {
  RbmParams params;
  std::vector<EpochMetrics> metrics;
};

/// Weights uniform in (-scale, scale), biases zero.
RbmParams init_rbm(std::size_t n_visible, std::size_t n_hidden, double scale, std::uint64_t seed);

/// Minibatch gradient descent. Throws DivergenceError if any parameter
/// becomes non-finite.
TrainResult train(const RbmParams& p0, const std::vector<BinaryConfig>& data, const TrainConfig& tc);

/// All 2^(side+1) - 2 distinct bar and stripe images (row-major), shuffled.
std::vector<BinaryConfig> bars_and_stripes(std::size_t side, std::uint64_t seed);

std::vector<BinaryConfig> read_dataset(const std::string& path);
std::string format_dataset(const std::vector<BinaryConfig>& data);
std::string metrics_line(const EpochMetrics& m);

nlohmann::json to_json(const RbmParams& p);
RbmParams rbm_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BmParams& p);
BmParams bm_from_json(const nlohmann::json& j);

}  // namespace kpp::ebm
