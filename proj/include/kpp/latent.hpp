#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kpp/backend.hpp"
#include "kpp/ebm.hpp"

// Discrete latent layer with a Boltzmann prior: the continuous relaxation of
// Bernoulli latents and the KL term against p(z) = exp(-E(z)) / Z.
namespace kpp::latent {

struct RelaxationParams {
  double beta = 0.5;
  /// q is clamped to [epsilon, 1 - epsilon] before use.
  double epsilon = 1e-6;

  void validate() const;
};

/// Bernoulli probabilities q_l = P(z_l = 1), clamped on construction.
class BernoulliProbs {
 public:
  explicit BernoulliProbs(std::vector<double> q, double epsilon = 1e-6);

  std::size_t size() const { return q_.size(); }
  double operator[](std::size_t i) const { return q_[i]; }
  std::span<const double> values() const { return q_; }

 private:
  std::vector<double> q_;
};

/// zeta = (1/beta) log[ max(rho + q - 1, 0) / q * (e^beta - 1) + 1 ], in [0, 1].
/// zeta is 0 exactly when rho <= 1 - q and 1 when rho = 1.
double relax_zeta(double rho, double q, const RelaxationParams& rp = {});

/// d zeta / d q. Zero on the flat region rho < 1 - q; throws KinkError at
/// rho == 1 - q where the derivative does not exist.
double zeta_partial_q(double rho, double q, const RelaxationParams& rp = {});

/// Draws rho_l ~ U(0, 1) and applies relax_zeta elementwise.
std::vector<double> sample_relaxed(const BernoulliProbs& q, const RelaxationParams& rp, std::uint64_t seed);

/// Prior energy evaluated on relaxed latents, -b.zeta - sum_{i<j} C_ij zeta_i zeta_j.
/// Agrees with ebm::bm_energy at binary points and is smooth in between.
double relaxed_energy(const ebm::BmParams& prior, std::span<const double> zeta);

struct KlBreakdown {
  double neg_entropy = 0.0;      // E_q[log q(z)]
  double expected_energy = 0.0;  // E_q[E(z)]
  double log_partition = 0.0;    // log Z
  double total = 0.0;
};

inline constexpr std::size_t kMaxExactLatents = 20;

/// KL(q || p) for the factorized posterior q against the Boltzmann prior,
/// with log Z by enumeration.
KlBreakdown kl_boltzmann_exact(const BernoulliProbs& q, const ebm::BmParams& prior);

/// Gradient of the KL with respect to the prior parameters:
///   d/dbias_i  = <z_i>_model - q_i
///   d/dC_ij    = <z_i z_j>_model - q_i q_j
/// The model moments (the log Z gradient) come from the configured sampler.
ebm::BmGradient kl_grad_theta(const BernoulliProbs& q, const ebm::BmParams& prior, Backend backend,
                              const BackendConfig& cfg);

}  // namespace kpp::latent
