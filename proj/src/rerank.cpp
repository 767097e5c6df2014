#include "kpp/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kpp/errors.hpp"

namespace kpp::rerank {
namespace {

using Eigen::Index;

// log sigma(x) = -softplus(-x), stable for large |x|.
double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void add_sufficient_statistics(ebm::BmGradient& g, const BinaryConfig& z, double scale) {
  // dE/dbias_i = -z_i, dE/dC_ij = -z_i z_j.
  const auto n = static_cast<Index>(z.size());
  for (Index i = 0; i < n; ++i) {
    if (!z[static_cast<std::size_t>(i)]) continue;
    g.bias(i) -= scale;
    for (Index j = i + 1; j < n; ++j) {
      if (z[static_cast<std::size_t>(j)]) g.coupling(i, j) -= scale;
    }
  }
}

void check_nce_batch(const ebm::BmParams& qbm, const NceBatch& b) {
  if (b.positives.empty() || b.negatives.empty()) throw EmptyBatchError("NCE batch needs positives and negatives");
  for (const auto* side : {&b.positives, &b.negatives}) {
    for (const auto& z : *side) {
      if (z.size() != qbm.n()) throw DimensionError("encoding length does not match QBM size");
    }
  }
}

}  // namespace

BinaryConfig encode_binary(std::span<const std::uint32_t> sequence, const SpinEncoderConfig& cfg) {
  BinaryConfig out;
  if (cfg.mode == EncodingMode::token_bits) {
    if (cfg.bits_per_token == 0 || cfg.bits_per_token > 32) throw EncodingError("bits_per_token must lie in [1, 32]");
    out.reserve(sequence.size() * cfg.bits_per_token);
    for (std::uint32_t id : sequence) {
      if (cfg.bits_per_token < 32 && (id >> cfg.bits_per_token) != 0) {
        throw EncodingError("token id " + std::to_string(id) + " does not fit in " + std::to_string(cfg.bits_per_token) + " bits");
      }
      for (std::size_t b = cfg.bits_per_token; b-- > 0;) out.push_back(static_cast<std::uint8_t>((id >> b) & 1u));
    }
    return out;
  }

  if (cfg.n_spins == 0 || cfg.vocab_size == 0) throw EncodingError("projection needs positive n_spins and vocab_size");
  std::vector<double> counts(cfg.vocab_size, 0.0);
  for (std::uint32_t id : sequence) {
    if (id >= cfg.vocab_size) throw EncodingError("token id " + std::to_string(id) + " exceeds vocabulary");
    counts[id] += 1.0;
  }
  Rng rng(cfg.projection_seed);
  out.resize(cfg.n_spins);
  for (std::size_t r = 0; r < cfg.n_spins; ++r) {
    double dot = 0.0;
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) dot += rng.uniform(-1.0, 1.0) * counts[v];
    out[r] = dot > 0.0 ? 1 : 0;
  }
  return out;
}

CandidateSet make_candidates(const std::vector<TokenSequence>& sequences, const SpinEncoderConfig& cfg) {
  CandidateSet c;
  for (const auto& s : sequences) c.items.push_back({s, encode_binary(s, cfg), 0.0});
  if (!c.items.empty()) {
    const std::size_t width = c.items.front().encoding.size();
    for (const auto& item : c.items) {
      if (item.encoding.size() != width) throw DimensionError("candidate encodings differ in length");
    }
  }
  return c;
}

void evaluate_energies(CandidateSet& c, const ebm::BmParams& qbm) {
  for (auto& item : c.items) item.energy = ebm::bm_energy(qbm, item.encoding);
}

std::vector<double> softmax_neg(std::span<const double> energies) {
  if (energies.empty()) throw EmptyBatchError("no candidates to weight");
  const double lowest = *std::min_element(energies.begin(), energies.end());
  if (!std::isfinite(lowest)) throw DomainError("candidate energies must be finite");
  std::vector<double> w(energies.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(energies[i])) throw DomainError("candidate energies must be finite");
    w[i] = std::exp(-(energies[i] - lowest));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> residual_weights(const CandidateSet& c, const ebm::BmParams& qbm) {
  std::vector<double> e;
  e.reserve(c.size());
  for (const auto& item : c.items) e.push_back(ebm::bm_energy(qbm, item.encoding));
  return softmax_neg(e);
}

std::size_t resample_candidate(std::span<const double> weights, std::uint64_t seed) {
  if (weights.empty()) throw DomainError("no weights to sample from");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw DomainError("weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("weights sum to zero");
  Rng rng(seed);
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  // Rounding left target at the very end; take the last nonzero weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

double nce_objective(const ebm::BmParams& qbm, const NceBatch& b) {
  check_nce_batch(qbm, b);
  double pos = 0.0, neg = 0.0;
  for (const auto& z : b.positives) pos += log_sigmoid(-ebm::bm_energy(qbm, z));
  for (const auto& z : b.negatives) neg += log_sigmoid(ebm::bm_energy(qbm, z));
  return pos / static_cast<double>(b.positives.size()) + neg / static_cast<double>(b.negatives.size());
}

// d(-L)/dtheta = mean_+ sigma(E+) dE+/dtheta - mean_- sigma(-E-) dE-/dtheta
ebm::BmGradient nce_gradients(const ebm::BmParams& qbm, const NceBatch& b) {
  check_nce_batch(qbm, b);
  const auto n = static_cast<Index>(qbm.n());
  ebm::BmGradient g{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  const double np = static_cast<double>(b.positives.size());
  const double nn = static_cast<double>(b.negatives.size());
  for (const auto& z : b.positives) add_sufficient_statistics(g, z, sigmoid(ebm::bm_energy(qbm, z)) / np);
  for (const auto& z : b.negatives) add_sufficient_statistics(g, z, -sigmoid(-ebm::bm_energy(qbm, z)) / nn);
  return g;
}

Proposal uniform_pool_proposal(std::vector<TokenSequence> pool) {
  if (pool.empty()) throw ConfigError("proposal pool is empty");
  return [pool = std::move(pool)](Rng& rng) { return pool[rng.below(pool.size())]; };
}

Proposal unigram_proposal(std::vector<double> frequencies, std::size_t length) {
  if (frequencies.empty() || length == 0) throw ConfigError("unigram proposal needs frequencies and a length");
  std::vector<double> cdf(frequencies.size());
  std::partial_sum(frequencies.begin(), frequencies.end(), cdf.begin());
  if (!(cdf.back() > 0.0)) throw ConfigError("unigram frequencies sum to zero");
  return [cdf = std::move(cdf), length](Rng& rng) {
    TokenSequence s(length);
    for (auto& t : s) {
      const double u = rng.uniform() * cdf.back();
      t = static_cast<std::uint32_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      t = std::min<std::uint32_t>(t, static_cast<std::uint32_t>(cdf.size() - 1));
    }
    return s;
  };
}

void NceConfig::validate() const {
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) throw ConfigError("learning_rate must be nonnegative");
  if (positives_per_step == 0 || negatives_per_step == 0) throw ConfigError("NCE steps need positives and negatives");
}

NceResult train_nce(const ebm::BmParams& qbm0, const std::vector<TokenSequence>& data, const Proposal& proposal,
                    const NceConfig& cfg) {
  cfg.validate();
  qbm0.validate();
  if (data.empty()) throw EmptyBatchError("no training sequences");
  std::vector<BinaryConfig> encoded;
  encoded.reserve(data.size());
  for (const auto& s : data) encoded.push_back(encode_binary(s, cfg.encoder));

  NceResult out{qbm0, {}};
  Rng rng(cfg.seed);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    NceBatch batch;
    for (std::size_t i = 0; i < cfg.positives_per_step; ++i) batch.positives.push_back(encoded[rng.below(encoded.size())]);
    for (std::size_t i = 0; i < cfg.negatives_per_step; ++i) batch.negatives.push_back(encode_binary(proposal(rng), cfg.encoder));
    out.objective.push_back(nce_objective(out.params, batch));
    const ebm::BmGradient g = nce_gradients(out.params, batch);
    out.params.bias -= cfg.learning_rate * g.bias;
    out.params.coupling -= cfg.learning_rate * g.coupling;
    if (!out.params.bias.allFinite() || !out.params.coupling.allFinite()) {
      throw DivergenceError("QBM parameters became non-finite at step " + std::to_string(step));
    }
  }
  return out;
}

std::vector<TokenSequence> parse_sequences(const std::string& text) {
  std::vector<TokenSequence> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    TokenSequence s;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(tok, &used);
      } catch (const std::exception&) {
        throw ParseError(line_no, "invalid token id '" + tok + "'");
      }
      if (used != tok.size() || v > UINT32_MAX) throw ParseError(line_no, "invalid token id '" + tok + "'");
      s.push_back(static_cast<std::uint32_t>(v));
    }
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

std::vector<TokenSequence> read_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sequence file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sequences(ss.str());
}

std::string format_sequences(const std::vector<TokenSequence>& seqs) {
  std::ostringstream os;
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s[i];
    os << '\n';
  }
  return os.str();
}

}  // namespace kpp::rerank
