#include "kpp/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "kpp/errors.hpp"
#include "kpp/problem_io.hpp"
#include "kpp/random.hpp"

namespace kpp {
namespace {

// Compressed adjacency of an Ising problem for the single-flip kernels.
struct Adjacency {
  std::size_t n = 0;
  std::vector<double> field;
  std::vector<std::size_t> start;
  std::vector<std::size_t> neighbor;
  std::vector<double> weight;

  explicit Adjacency(const IsingProblem& p) : n(p.n), field(p.linear), start(p.n + 1, 0) {
    for (const auto& [ij, c] : p.quadratic) {
      ++start[ij.first + 1];
      ++start[ij.second + 1];
    }
    std::partial_sum(start.begin(), start.end(), start.begin());
    neighbor.resize(start.back());
    weight.resize(start.back());
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (const auto& [ij, c] : p.quadratic) {
      neighbor[fill[ij.first]] = ij.second;
      weight[fill[ij.first]++] = c;
      neighbor[fill[ij.second]] = ij.first;
      weight[fill[ij.second]++] = c;
    }
  }
};

// Spin state with cached local fields f_i = h_i + sum_j J_ij s_j.
// Flipping s_i changes the energy by -2 s_i f_i.
class FlipState {
 public:
  FlipState(const Adjacency& adj, Rng& rng) : adj_(adj), spins_(adj.n), local_(adj.n) {
    for (auto& s : spins_) s = rng.coin() ? 1 : -1;
    for (std::size_t i = 0; i < adj.n; ++i) {
      double f = adj.field[i];
      for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k) f += adj.weight[k] * spins_[adj.neighbor[k]];
      local_[i] = f;
    }
  }

  double delta(std::size_t i) const { return -2.0 * spins_[i] * local_[i]; }

  void flip(std::size_t i) {
    spins_[i] = static_cast<std::int8_t>(-spins_[i]);
    const double s2 = 2.0 * spins_[i];
    for (std::size_t k = adj_.start[i]; k < adj_.start[i + 1]; ++k) local_[adj_.neighbor[k]] += s2 * adj_.weight[k];
  }

  // Metropolis step; returns the energy change actually applied.
  double try_flip(std::size_t i, double inv_t, Rng& rng) {
    const double d = delta(i);
    if (d <= 0.0 || rng.uniform() < std::exp(-d * inv_t)) {
      flip(i);
      return d;
    }
    return 0.0;
  }

  double max_abs_delta() const {
    double m = 0.0;
    for (std::size_t i = 0; i < spins_.size(); ++i) m = std::max(m, std::abs(delta(i)));
    return m;
  }

  const SpinConfig& spins() const { return spins_; }

 private:
  const Adjacency& adj_;
  SpinConfig spins_;
  std::vector<double> local_;
};

// Runs body(i) for i in [0, count) across hardware threads. Each index writes
// only its own slot, so results do not depend on the worker count.
template <class Body>
void parallel_for(std::size_t count, Body body) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

SpinConfig anneal_one(const Adjacency& adj, const SamplerConfig& cfg, std::uint64_t read) {
  Rng rng(cfg.seed, read);
  FlipState state(adj, rng);
  const AnnealSchedule& sch = cfg.schedule;
  const double t_final = cfg.beta ? 1.0 / *cfg.beta : sch.t_final;
  double t = sch.t_initial ? *sch.t_initial : std::max(1.0, state.max_abs_delta());
  t = std::max(t, t_final);

  double energy = 0.0;  // relative to the start; only compared, never reported
  double best = 0.0;
  SpinConfig best_spins = state.spins();
  for (;;) {
    const double inv_t = 1.0 / t;
    for (std::size_t sweep = 0; sweep < sch.sweeps_per_stage; ++sweep) {
      for (std::size_t i = 0; i < adj.n; ++i) {
        energy += state.try_flip(i, inv_t, rng);
        if (energy < best) {
          best = energy;
          best_spins = state.spins();
        }
      }
    }
    if (t <= t_final) break;
    t = std::max(t * sch.decay, t_final);
  }
  return cfg.beta ? state.spins() : best_spins;
}

bool entry_less(const SampleEntry& a, const SampleEntry& b) {
  if (a.energy != b.energy) return a.energy < b.energy;
  return a.spins < b.spins;
}

}  // namespace

void AnnealSchedule::validate() const {
  if (t_initial && !(*t_initial > 0.0 && std::isfinite(*t_initial))) throw ConfigError("t_initial must be positive");
  if (!(t_final > 0.0 && std::isfinite(t_final))) throw ConfigError("t_final must be positive");
  if (t_initial && t_final > *t_initial) throw ConfigError("t_final must not exceed t_initial");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must lie strictly inside (0, 1)");
  if (sweeps_per_stage == 0) throw ConfigError("sweeps_per_stage must be positive");
}

void SamplerConfig::validate() const {
  if (reads == 0) throw ConfigError("reads must be at least 1");
  if (top_k && (*top_k == 0 || *top_k > reads)) throw ConfigError("top_k must lie in [1, reads]");
  if (beta && !(*beta > 0.0 && std::isfinite(*beta))) throw ConfigError("beta must be positive");
  schedule.validate();
}

void MetropolisConfig::validate() const {
  if (!(beta > 0.0 && std::isfinite(beta))) throw ConfigError("beta must be positive");
  if (sweeps == 0) throw ConfigError("sweeps must be positive");
  if (thin == 0) throw ConfigError("thin must be positive");
}

std::uint64_t SampleSet::total_multiplicity() const {
  std::uint64_t t = 0;
  for (const auto& e : entries) t += e.multiplicity;
  return t;
}

const SampleEntry& SampleSet::lowest() const {
  if (entries.empty()) throw EmptySampleError("sample set is empty");
  return entries.front();
}

SampleSet aggregate_reads(const IsingProblem& p, const std::vector<SpinConfig>& reads) {
  std::map<SpinConfig, std::uint64_t> counts;
  for (const auto& r : reads) ++counts[r];
  SampleSet out;
  out.n = p.n;
  out.entries.reserve(counts.size());
  for (auto& [spins, m] : counts) out.entries.push_back({spins, ising_energy(p, spins), m});
  std::sort(out.entries.begin(), out.entries.end(), entry_less);
  return out;
}

void check_sample_set(const SampleSet& s, const IsingProblem& p) {
  if (s.n != p.n) throw DomainError("sample set size does not match problem");
  for (std::size_t k = 0; k < s.entries.size(); ++k) {
    const auto& e = s.entries[k];
    if (e.spins.size() != s.n) throw DomainError("entry has wrong length");
    if (e.multiplicity == 0) throw DomainError("entry has zero multiplicity");
    if (std::abs(e.energy - ising_energy(p, e.spins)) > 1e-9) throw DomainError("entry energy inconsistent with problem");
    if (k > 0 && !entry_less(s.entries[k - 1], e)) throw DomainError("entries not strictly sorted/distinct");
  }
}

SampleSet simulated_anneal(const IsingProblem& p, const SamplerConfig& cfg) {
  if (p.n == 0) throw EmptyProblemError("problem has no variables");
  p.validate();
  cfg.validate();
  const Adjacency adj(p);
  std::vector<SpinConfig> reads(cfg.reads);
  parallel_for(cfg.reads, [&](std::size_t r) { reads[r] = anneal_one(adj, cfg, r); });
  SampleSet out = aggregate_reads(p, reads);
  if (cfg.top_k) out = postprocess_topk(std::move(out), *cfg.top_k);
  return out;
}

SampleSet metropolis_fixed_temperature(const IsingProblem& p, const MetropolisConfig& cfg) {
  if (p.n == 0) throw EmptyProblemError("problem has no variables");
  p.validate();
  cfg.validate();
  const Adjacency adj(p);
  Rng rng(cfg.seed);
  FlipState state(adj, rng);
  // Lazy chain: each of 2n proposals holds with probability 1/2. Without the hold, an
  // all-accepting sweep (beta -> 0) preserves spin parity for even n and never mixes.
  auto sweep = [&] {
    for (std::size_t k = 0; k < 2 * p.n; ++k) {
      const std::size_t site = rng.below(2 * p.n);
      if (site < p.n) state.try_flip(site, cfg.beta, rng);
    }
  };
  for (std::size_t i = 0; i < cfg.burn_in; ++i) sweep();
  std::map<SpinConfig, std::uint64_t> counts;
  for (std::size_t i = 1; i <= cfg.sweeps; ++i) {
    sweep();
    if (i % cfg.thin == 0) ++counts[state.spins()];
  }
  SampleSet out;
  out.n = p.n;
  for (auto& [spins, m] : counts) out.entries.push_back({spins, ising_energy(p, spins), m});
  std::sort(out.entries.begin(), out.entries.end(), entry_less);
  return out;
}

SpinConfig ExactDistribution::config(std::uint64_t index) const {
  SpinConfig s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = ((index >> i) & 1u) ? 1 : -1;
  return s;
}

ExactDistribution exact_enumerate(const IsingProblem& p, double beta) {
  if (p.n > kMaxExactVariables) {
    throw SizeLimitError("exact enumeration supports n <= " + std::to_string(kMaxExactVariables));
  }
  if (!(beta > 0.0 && std::isfinite(beta))) throw DomainError("beta must be positive");
  p.validate();

  ExactDistribution d;
  d.n = p.n;
  d.beta = beta;
  const std::uint64_t count = std::uint64_t{1} << p.n;
  std::vector<double>& e = d.probabilities;  // holds energies until normalized
  e.resize(count);

  // Gray-code walk from the all-minus state; one flip per step.
  const Adjacency adj(p);
  SpinConfig s(p.n, -1);
  std::vector<double> local(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    double f = adj.field[i];
    for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k) f -= adj.weight[k];
    local[i] = f;
  }
  double energy = ising_energy(p, s);
  std::uint64_t gray = 0;
  e[0] = energy;
  for (std::uint64_t step = 1; step < count; ++step) {
    const auto i = static_cast<std::size_t>(std::countr_zero(step));
    energy += -2.0 * s[i] * local[i];
    s[i] = static_cast<std::int8_t>(-s[i]);
    for (std::size_t k = adj.start[i]; k < adj.start[i + 1]; ++k) local[adj.neighbor[k]] += 2.0 * s[i] * adj.weight[k];
    gray ^= std::uint64_t{1} << i;
    e[gray] = energy;
  }

  d.argmin = static_cast<std::uint64_t>(std::min_element(e.begin(), e.end()) - e.begin());
  d.min_energy = e[d.argmin];
  double sum = 0.0;
  for (auto& v : e) {
    v = std::exp(-beta * (v - d.min_energy));
    sum += v;
  }
  for (auto& v : e) v /= sum;
  d.log_partition = -beta * d.min_energy + std::log(sum);
  return d;
}

SampleSet exact_sample_set(const IsingProblem& p, const ExactDistribution& d, std::size_t reads) {
  if (reads == 0) throw ConfigError("reads must be at least 1");
  const std::size_t count = d.probabilities.size();
  std::vector<std::uint64_t> mult(count);
  std::vector<std::pair<double, std::uint64_t>> remainder(count);
  std::uint64_t assigned = 0;
  for (std::uint64_t k = 0; k < count; ++k) {
    const double share = d.probabilities[k] * static_cast<double>(reads);
    mult[k] = static_cast<std::uint64_t>(std::floor(share));
    assigned += mult[k];
    remainder[k] = {share - static_cast<double>(mult[k]), k};
  }
  std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t r = 0; assigned < reads && r < remainder.size(); ++r, ++assigned) ++mult[remainder[r].second];

  SampleSet out;
  out.n = d.n;
  for (std::uint64_t k = 0; k < count; ++k) {
    if (mult[k] == 0) continue;
    SpinConfig s = d.config(k);
    out.entries.push_back({s, ising_energy(p, s), mult[k]});
  }
  std::sort(out.entries.begin(), out.entries.end(), entry_less);
  return out;
}

SampleSet postprocess_topk(SampleSet raw, std::size_t k) {
  if (k == 0) throw DomainError("top_k must be positive");
  std::sort(raw.entries.begin(), raw.entries.end(), entry_less);
  if (raw.entries.size() > k) raw.entries.resize(k);
  return raw;
}

MomentEstimates estimate_moments(const SampleSet& s, MomentWeighting weighting) {
  if (s.entries.empty()) throw EmptySampleError("cannot estimate moments of an empty sample set");
  const auto n = static_cast<Eigen::Index>(s.n);
  MomentEstimates m{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  double total = 0.0;
  Eigen::VectorXd v(n);
  for (const auto& e : s.entries) {
    const double w = weighting == MomentWeighting::multiplicity ? static_cast<double>(e.multiplicity) : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) v(i) = e.spins[static_cast<std::size_t>(i)];
    m.first += w * v;
    m.second.noalias() += w * v * v.transpose();
    total += w;
  }
  m.first /= total;
  m.second /= total;
  m.second.diagonal().setOnes();
  return m;
}

MomentEstimates exact_moments(const ExactDistribution& d) {
  const auto n = static_cast<Eigen::Index>(d.n);
  MomentEstimates m{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  Eigen::VectorXd v(n);
  for (std::uint64_t k = 0; k < d.probabilities.size(); ++k) {
    const double w = d.probabilities[k];
    for (Eigen::Index i = 0; i < n; ++i) v(i) = ((k >> i) & 1u) ? 1.0 : -1.0;
    m.first += w * v;
    m.second.noalias() += w * v * v.transpose();
  }
  m.second.diagonal().setOnes();
  return m;
}

std::string spins_to_string(const SpinConfig& s) {
  std::string out(s.size(), '-');
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] > 0) out[i] = '+';
  }
  return out;
}

SpinConfig spins_from_string(std::string_view text) {
  SpinConfig s(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '+') {
      s[i] = 1;
    } else if (text[i] == '-') {
      s[i] = -1;
    } else {
      throw DomainError("spin string may only contain '+' and '-'");
    }
  }
  return s;
}

std::string format_sample_set(const SampleSet& s, std::uint64_t reads, std::uint64_t seed) {
  std::ostringstream os;
  os << "# n=" << s.n << " reads=" << reads << " seed=" << seed << '\n';
  for (const auto& e : s.entries) {
    os << format_double(e.energy) << ' ' << e.multiplicity << ' ' << spins_to_string(e.spins) << '\n';
  }
  return os.str();
}

SampleSet parse_sample_set(std::string_view text) {
  SampleSet out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("n=");
      if (pos == std::string::npos) throw ParseError(line_no, "header lacks n=");
      out.n = std::stoul(line.substr(pos + 2));
      header = true;
      continue;
    }
    if (!header) throw ParseError(line_no, "entry before header");
    std::istringstream ls(line);
    SampleEntry e;
    std::string energy, spins;
    if (!(ls >> energy >> e.multiplicity >> spins)) throw ParseError(line_no, "expected 'energy multiplicity spins'");
    e.energy = std::stod(energy);
    e.spins = spins_from_string(spins);
    if (e.spins.size() != out.n) throw ParseError(line_no, "spin string length does not match n");
    out.entries.push_back(std::move(e));
  }
  if (!header) throw ParseError(line_no, "missing header");
  return out;
}

}  // namespace kpp
