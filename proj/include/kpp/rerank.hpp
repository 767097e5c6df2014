#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kpp/ebm.hpp"
#include "kpp/random.hpp"

// Residual-energy reranking: proposal candidates are reweighted by
// exp(-E(x)) normalized over the k candidates at hand, and E is trained by
// noise-contrastive classification of data against proposal samples.
namespace kpp::rerank {

using TokenSequence = std::vector<std::uint32_t>;

enum class EncodingMode { token_bits, random_projection };

struct SpinEncoderConfig {
  EncodingMode mode = EncodingMode::token_bits;
  /// token_bits: each id is written MSB-first in this many bits.
  std::size_t bits_per_token = 8;
  /// random_projection: output width, vocabulary bound and matrix seed.
  std::size_t n_spins = 16;
  std::size_t vocab_size = 256;
  std::uint64_t projection_seed = 0;
};

/// token_bits concatenates fixed-width binary expansions (injective for a
/// fixed sequence length). random_projection thresholds a seeded random
/// linear map of the token-count vector at zero.
/// Throws EncodingError for ids that do not fit.
BinaryConfig encode_binary(std::span<const std::uint32_t> sequence, const SpinEncoderConfig& cfg);

struct Candidate {
  TokenSequence tokens;
  BinaryConfig encoding;
  double energy = 0.0;
};

struct CandidateSet {
  std::vector<Candidate> items;

  std::size_t size() const { return items.size(); }
};

CandidateSet make_candidates(const std::vector<TokenSequence>& sequences, const SpinEncoderConfig& cfg);

/// Fills every candidate's energy under the QBM.
void evaluate_energies(CandidateSet& c, const ebm::BmParams& qbm);

/// w_i = exp(-E_i) / sum_j exp(-E_j), shifted by min E before exponentiation.
std::vector<double> residual_weights(const CandidateSet& c, const ebm::BmParams& qbm);
std::vector<double> softmax_neg(std::span<const double> energies);

/// Categorical draw from `weights`.
std::size_t resample_candidate(std::span<const double> weights, std::uint64_t seed);

struct NceBatch {
  std::vector<BinaryConfig> positives;
  std::vector<BinaryConfig> negatives;
};

/// L = mean_+ log sigma(-E(x+)) + mean_- log sigma(E(x-)); L <= 0 and
/// training maximizes it.
double nce_objective(const ebm::BmParams& qbm, const NceBatch& b);

/// Gradient of -L with respect to the QBM parameters.
ebm::BmGradient nce_gradients(const ebm::BmParams& qbm, const NceBatch& b);

/// Stub for the generative proposal: returns one candidate sequence per call.
using Proposal = std::function<TokenSequence(Rng&)>;

/// Uniform over a fixed candidate pool.
Proposal uniform_pool_proposal(std::vector<TokenSequence> pool);
/// Independent tokens drawn from unigram frequencies.
Proposal unigram_proposal(std::vector<double> frequencies, std::size_t length);

struct NceConfig {
  std::size_t steps = 500;
  double learning_rate = 0.05;
  std::size_t positives_per_step = 32;
  std::size_t negatives_per_step = 32;
  std::uint64_t seed = 0;
  SpinEncoderConfig encoder;

  void validate() const;
};

struct NceResult {
  ebm::BmParams params;
  std::vector<double> objective;  // L before each step
};

/// Gradient descent on -L. Positives are drawn uniformly with replacement
/// from `data`; negatives come from `proposal`.
NceResult train_nce(const ebm::BmParams& qbm0, const std::vector<TokenSequence>& data, const Proposal& proposal,
                    const NceConfig& cfg);

std::vector<TokenSequence> read_sequences(const std::string& path);
std::vector<TokenSequence> parse_sequences(const std::string& text);
std::string format_sequences(const std::vector<TokenSequence>& seqs);

}  // namespace kpp::rerank
