#include "kpp/latent.hpp"

#include <algorithm>
#include <cmath>

#include "kpp/errors.hpp"
#include "kpp/random.hpp"

namespace kpp::latent {

void RelaxationParams::validate() const {
  if (!(beta > 0.0 && std::isfinite(beta))) throw DomainError("relaxation beta must be finite and positive");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("epsilon must lie in (0, 0.5)");
}

BernoulliProbs::BernoulliProbs(std::vector<double> q, double epsilon) : q_(std::move(q)) {
  for (double& v : q_) {
    if (std::isnan(v)) throw DomainError("Bernoulli probability is NaN");
    v = std::clamp(v, epsilon, 1.0 - epsilon);
  }
}

namespace {

double clamp_q(double q, const RelaxationParams& rp) {
  if (std::isnan(q)) throw DomainError("q is NaN");
  return std::clamp(q, rp.epsilon, 1.0 - rp.epsilon);
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("rho must lie in [0, 1]");
}

}  // namespace

double relax_zeta(double rho, double q, const RelaxationParams& rp) {
  rp.validate();
  check_rho(rho);
  q = clamp_q(q, rp);
  if (rho == 1.0) return 1.0;
  const double active = std::max(rho - (1.0 - q), 0.0);
  if (active == 0.0) return 0.0;
  const double zeta = std::log1p(active / q * std::expm1(rp.beta)) / rp.beta;
  return std::min(zeta, 1.0);
}

// With a = (rho + q - 1) / q = 1 - (1 - rho) / q:
//   da/dq     = (1 - rho) / q^2
//   dzeta/dq  = (e^beta - 1) da/dq / (beta (a (e^beta - 1) + 1))
double zeta_partial_q(double rho, double q, const RelaxationParams& rp) {
  rp.validate();
  check_rho(rho);
  q = clamp_q(q, rp);
  const double margin = rho - (1.0 - q);
  if (margin == 0.0) throw KinkError("zeta is not differentiable at rho = 1 - q");
  if (margin < 0.0) return 0.0;
  const double k = std::expm1(rp.beta);
  const double a = margin / q;
  return k * (1.0 - rho) / (q * q) / (rp.beta * (a * k + 1.0));
}

std::vector<double> sample_relaxed(const BernoulliProbs& q, const RelaxationParams& rp, std::uint64_t seed) {
  rp.validate();
  Rng rng(seed);
  std::vector<double> out(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) out[l] = relax_zeta(rng.uniform(), q[l], rp);
  return out;
}

// For the factorized q and E(z) = -b.z - sum_{i<j} C_ij z_i z_j:
//   E_q[log q]  = sum_l q_l log q_l + (1 - q_l) log(1 - q_l)
//   E_q[E]      = -b.q - sum_{i<j} C_ij q_i q_j      (independent units)
double relaxed_energy(const ebm::BmParams& prior, std::span<const double> zeta) {
  if (zeta.size() != prior.n()) throw DimensionError("relaxed latent width does not match the prior");
  double e = 0.0;
  for (std::size_t i = 0; i < zeta.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    e -= prior.bias(ii) * zeta[i];
    for (std::size_t j = i + 1; j < zeta.size(); ++j) e -= prior.coupling(ii, static_cast<Eigen::Index>(j)) * zeta[i] * zeta[j];
  }
  return e;
}

KlBreakdown kl_boltzmann_exact(const BernoulliProbs& q, const ebm::BmParams& prior) {
  prior.validate();
  if (q.size() != prior.n()) throw DimensionError("q length does not match prior size");
  if (q.size() > kMaxExactLatents) throw SizeLimitError("exact KL supports at most " + std::to_string(kMaxExactLatents) + " latents");
  KlBreakdown kl;
  for (std::size_t l = 0; l < q.size(); ++l) kl.neg_entropy += q[l] * std::log(q[l]) + (1.0 - q[l]) * std::log1p(-q[l]);
  const auto n = static_cast<Eigen::Index>(q.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double qi = q[static_cast<std::size_t>(i)];
    kl.expected_energy -= prior.bias(i) * qi;
    for (Eigen::Index j = i + 1; j < n; ++j) kl.expected_energy -= prior.coupling(i, j) * qi * q[static_cast<std::size_t>(j)];
  }
  kl.log_partition = exact_enumerate(ebm::to_ising(prior).problem, 1.0).log_partition;
  kl.total = kl.neg_entropy + kl.expected_energy + kl.log_partition;
  return kl;
}

ebm::BmGradient kl_grad_theta(const BernoulliProbs& q, const ebm::BmParams& prior, Backend backend,
                              const BackendConfig& cfg) {
  prior.validate();
  if (q.size() != prior.n()) throw DimensionError("q length does not match prior size");
  const auto n = static_cast<Eigen::Index>(q.size());
  Eigen::VectorXd qv(n);
  for (Eigen::Index i = 0; i < n; ++i) qv(i) = q[static_cast<std::size_t>(i)];

  // Posterior-side statistics of a factorized q: <z_i z_j> = q_i q_j.
  ebm::PhaseStatistics posterior{qv, qv * qv.transpose()};
  posterior.correlations.diagonal() = qv;
  const ebm::PhaseStatistics model = ebm::negative_phase(prior, backend, cfg);
  return ebm::gradient_from_phases(prior, posterior, model);
}

}  // namespace kpp::latent
