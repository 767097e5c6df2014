#include "kpp/ebm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kpp/errors.hpp"
#include "kpp/random.hpp"

namespace kpp::ebm {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

VectorXd to_vector(std::span<const std::uint8_t> bits) {
  VectorXd v(static_cast<Index>(bits.size()));
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw DomainError("binary config entry is not 0 or 1");
    v(static_cast<Index>(i)) = bits[i];
  }
  return v;
}

void check_batch(const std::vector<BinaryConfig>& batch, std::size_t width) {
  if (batch.empty()) throw EmptyBatchError("batch is empty");
  for (const auto& x : batch) {
    if (x.size() != width) {
      throw DimensionError("batch entry length " + std::to_string(x.size()) + " != " + std::to_string(width));
    }
  }
}

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

// Moments of the joint model distribution in z-space, straight from exact
// enumeration of the Ising image.
PhaseStatistics exact_model_statistics(const IsingProblem& image) {
  return from_spin_moments(exact_moments(exact_enumerate(image, 1.0)));
}

}  // namespace

RbmParams::RbmParams(std::size_t n_visible, std::size_t n_hidden)
    : weights(MatrixXd::Zero(static_cast<Index>(n_visible), static_cast<Index>(n_hidden))),
      visible_bias(VectorXd::Zero(static_cast<Index>(n_visible))),
      hidden_bias(VectorXd::Zero(static_cast<Index>(n_hidden))) {}

void RbmParams::validate() const {
  if (n_visible() == 0 || n_hidden() == 0) throw DimensionError("RBM needs visible and hidden units");
  if (weights.rows() != visible_bias.size() || weights.cols() != hidden_bias.size()) {
    throw DimensionError("RBM weight shape does not match biases");
  }
  if (!weights.allFinite() || !visible_bias.allFinite() || !hidden_bias.allFinite()) {
    throw DomainError("RBM parameters must be finite");
  }
}

BmParams::BmParams(std::size_t n)
    : coupling(MatrixXd::Zero(static_cast<Index>(n), static_cast<Index>(n))), bias(VectorXd::Zero(static_cast<Index>(n))) {}

void BmParams::validate() const {
  if (bias.size() == 0) throw DimensionError("BM needs at least one unit");
  if (coupling.rows() != bias.size() || coupling.cols() != bias.size()) throw DimensionError("BM coupling shape mismatch");
  if (!coupling.allFinite() || !bias.allFinite()) throw DomainError("BM parameters must be finite");
  for (Index i = 0; i < coupling.rows(); ++i) {
    for (Index j = 0; j <= i; ++j) {
      if (coupling(i, j) != 0.0) throw DomainError("BM coupling must be strictly upper triangular");
    }
  }
}

BmParams as_boltzmann(const RbmParams& p) {
  p.validate();
  const auto nv = static_cast<Index>(p.n_visible());
  const auto nh = static_cast<Index>(p.n_hidden());
  BmParams b(p.n_visible() + p.n_hidden());
  b.bias << p.visible_bias, p.hidden_bias;
  b.coupling.block(0, nv, nv, nh) = p.weights;
  return b;
}

double rbm_energy(const RbmParams& p, std::span<const std::uint8_t> v, std::span<const std::uint8_t> h) {
  if (v.size() != p.n_visible() || h.size() != p.n_hidden()) throw DimensionError("RBM configuration size mismatch");
  const VectorXd vv = to_vector(v);
  const VectorXd hh = to_vector(h);
  return -p.visible_bias.dot(vv) - p.hidden_bias.dot(hh) - vv.dot(p.weights * hh);
}

double bm_energy(const BmParams& p, std::span<const std::uint8_t> z) {
  if (z.size() != p.n()) throw DimensionError("BM configuration size mismatch");
  const VectorXd zz = to_vector(z);
  return -p.bias.dot(zz) - zz.dot(p.coupling.triangularView<Eigen::StrictlyUpper>() * zz);
}

// E(z) = -bias.z - sum C_ij z_i z_j is the QUBO with linear -bias and
// quadratic -C; qubo_to_ising then applies z = (1 + s) / 2 and carries the
// constant into the offset.
IsingImage to_ising(const BmParams& p) {
  p.validate();
  QuboProblem q(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) {
    q.linear[i] = -p.bias(static_cast<Index>(i));
    for (std::size_t j = i + 1; j < p.n(); ++j) {
      const double c = p.coupling(static_cast<Index>(i), static_cast<Index>(j));
      if (c != 0.0) q.quadratic[{i, j}] = -c;
    }
  }
  IsingImage img{qubo_to_ising(q), {}};
  img.units.reserve(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) img.units.push_back({Layer::visible, i});
  return img;
}

IsingImage to_ising(const RbmParams& p) {
  IsingImage img = to_ising(as_boltzmann(p));
  for (std::size_t j = 0; j < p.n_hidden(); ++j) img.units[p.n_visible() + j] = {Layer::hidden, j};
  return img;
}

void PhaseStatistics::validate() const {
  constexpr double slack = 1e-12;
  if (correlations.rows() != means.size() || correlations.cols() != means.size()) {
    throw DimensionError("phase statistics shape mismatch");
  }
  if ((means.array() < -slack).any() || (means.array() > 1 + slack).any() || (correlations.array() < -slack).any() ||
      (correlations.array() > 1 + slack).any()) {
    throw DomainError("phase statistics outside [0, 1]");
  }
  if (means.size() > 0 && (correlations - correlations.transpose()).cwiseAbs().maxCoeff() > slack) {
    throw DomainError("correlation matrix is not symmetric");
  }
}

// z = (1 + s) / 2:  <z_i> = (1 + <s_i>) / 2,
//                   <z_i z_j> = (1 + <s_i> + <s_j> + <s_i s_j>) / 4.
PhaseStatistics from_spin_moments(const MomentEstimates& m) {
  const Index n = m.first.size();
  PhaseStatistics s;
  s.means = (1.0 + m.first.array()) / 2.0;
  s.correlations.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      s.correlations(i, j) = (1.0 + m.first(i) + m.first(j) + m.second(i, j)) / 4.0;
    }
  }
  return s;
}

PhaseStatistics positive_phase(const RbmParams& p, const std::vector<BinaryConfig>& batch) {
  p.validate();
  check_batch(batch, p.n_visible());
  const auto nv = static_cast<Index>(p.n_visible());
  const auto nu = nv + static_cast<Index>(p.n_hidden());
  PhaseStatistics s{VectorXd::Zero(nu), MatrixXd::Zero(nu, nu)};
  VectorXd u(nu);
  for (const auto& x : batch) {
    const VectorXd v = to_vector(x);
    const VectorXd act = p.hidden_bias + p.weights.transpose() * v;
    u.head(nv) = v;
    for (Index j = 0; j < act.size(); ++j) u(nv + j) = logistic(act(j));
    s.means += u;
    // Hidden units are conditionally independent given v, so the product of
    // conditionals is the exact pairwise moment; the diagonal is fixed below.
    s.correlations.noalias() += u * u.transpose();
  }
  const double m = static_cast<double>(batch.size());
  s.means /= m;
  s.correlations /= m;
  s.correlations.diagonal() = s.means;
  return s;
}

PhaseStatistics positive_phase(const BmParams& p, const std::vector<BinaryConfig>& batch) {
  p.validate();
  check_batch(batch, p.n());
  const auto n = static_cast<Index>(p.n());
  PhaseStatistics s{VectorXd::Zero(n), MatrixXd::Zero(n, n)};
  for (const auto& x : batch) {
    const VectorXd z = to_vector(x);
    s.means += z;
    s.correlations.noalias() += z * z.transpose();
  }
  s.means /= static_cast<double>(batch.size());
  s.correlations /= static_cast<double>(batch.size());
  return s;
}

PhaseStatistics negative_phase(const BmParams& p, Backend backend, const BackendConfig& cfg, MomentWeighting weighting) {
  const IsingImage img = to_ising(p);
  if (backend == Backend::exact) return exact_model_statistics(img.problem);
  BackendConfig c = cfg;
  if (!c.sampler.beta) c.sampler.beta = 1.0;
  return from_spin_moments(estimate_moments(sample(backend, img.problem, c), weighting));
}

PhaseStatistics negative_phase(const RbmParams& p, Backend backend, const BackendConfig& cfg, MomentWeighting weighting) {
  return negative_phase(as_boltzmann(p), backend, cfg, weighting);
}

double expected_energy(const BmParams& p, const PhaseStatistics& s) {
  if (s.means.size() != p.bias.size()) throw DimensionError("statistics do not match model size");
  return -p.bias.dot(s.means) - p.coupling.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseProduct(s.correlations).sum();
}

double energy_difference_loss(const RbmParams& p, const std::vector<BinaryConfig>& batch, const PhaseStatistics& neg) {
  const BmParams b = as_boltzmann(p);
  return expected_energy(b, positive_phase(p, batch)) - expected_energy(b, neg);
}

double energy_difference_loss(const BmParams& p, const std::vector<BinaryConfig>& batch, const PhaseStatistics& neg) {
  return expected_energy(p, positive_phase(p, batch)) - expected_energy(p, neg);
}

double RbmGradient::max_abs() const {
  return std::max({weights.size() ? weights.cwiseAbs().maxCoeff() : 0.0,
                   visible_bias.size() ? visible_bias.cwiseAbs().maxCoeff() : 0.0,
                   hidden_bias.size() ? hidden_bias.cwiseAbs().maxCoeff() : 0.0});
}

double BmGradient::max_abs() const {
  return std::max(coupling.size() ? coupling.cwiseAbs().maxCoeff() : 0.0, bias.size() ? bias.cwiseAbs().maxCoeff() : 0.0);
}

// dE/db_i = -z_i and dE/dC_ij = -z_i z_j, so
// dNLL/dtheta = <dE/dtheta>_data - <dE/dtheta>_model = <stat>_model - <stat>_data.
BmGradient gradient_from_phases(const BmParams& p, const PhaseStatistics& pos, const PhaseStatistics& neg) {
  if (pos.means.size() != p.bias.size() || neg.means.size() != p.bias.size()) {
    throw DimensionError("statistics do not match model size");
  }
  BmGradient g;
  g.bias = neg.means - pos.means;
  g.coupling = (neg.correlations - pos.correlations).triangularView<Eigen::StrictlyUpper>();
  return g;
}

RbmGradient gradient_from_phases(const RbmParams& p, const PhaseStatistics& pos, const PhaseStatistics& neg) {
  const auto nv = static_cast<Index>(p.n_visible());
  const auto nh = static_cast<Index>(p.n_hidden());
  if (pos.means.size() != nv + nh || neg.means.size() != nv + nh) throw DimensionError("statistics do not match model size");
  RbmGradient g;
  g.visible_bias = neg.means.head(nv) - pos.means.head(nv);
  g.hidden_bias = neg.means.tail(nh) - pos.means.tail(nh);
  g.weights = neg.correlations.block(0, nv, nv, nh) - pos.correlations.block(0, nv, nv, nh);
  return g;
}

RbmGradient parameter_gradients(const RbmParams& p, const std::vector<BinaryConfig>& batch, Backend backend,
                                const BackendConfig& cfg) {
  return gradient_from_phases(p, positive_phase(p, batch), negative_phase(p, backend, cfg));
}

BmGradient parameter_gradients(const BmParams& p, const std::vector<BinaryConfig>& batch, Backend backend,
                               const BackendConfig& cfg) {
  return gradient_from_phases(p, positive_phase(p, batch), negative_phase(p, backend, cfg));
}

// log p(v) = -F(v) - log Z with free energy
//   F(v) = -b.v - sum_j softplus(c_j + sum_i v_i W_ij)
// and log Z = logsumexp_v(-F(v)) over all 2^n_visible visible vectors.
double exact_nll(const RbmParams& p, const std::vector<BinaryConfig>& data) {
  p.validate();
  if (p.n_visible() + p.n_hidden() > kMaxExactUnits) {
    throw SizeLimitError("exact NLL supports at most " + std::to_string(kMaxExactUnits) + " units");
  }
  check_batch(data, p.n_visible());
  auto neg_free_energy = [&](const VectorXd& v) {
    const VectorXd act = p.hidden_bias + p.weights.transpose() * v;
    double f = p.visible_bias.dot(v);
    for (Index j = 0; j < act.size(); ++j) f += softplus(act(j));
    return f;
  };

  const std::uint64_t count = std::uint64_t{1} << p.n_visible();
  std::vector<double> terms(count);
  VectorXd v(static_cast<Index>(p.n_visible()));
  for (std::uint64_t k = 0; k < count; ++k) {
    for (Index i = 0; i < v.size(); ++i) v(i) = static_cast<double>((k >> i) & 1u);
    terms[k] = neg_free_energy(v);
  }
  const double peak = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - peak);
  const double log_z = peak + std::log(sum);

  double total = 0.0;
  for (const auto& x : data) total += log_z - neg_free_energy(to_vector(x));
  return total / static_cast<double>(data.size());
}

double exact_nll(const BmParams& p, const std::vector<BinaryConfig>& data) {
  p.validate();
  if (p.n() > kMaxExactUnits) throw SizeLimitError("exact NLL supports at most " + std::to_string(kMaxExactUnits) + " units");
  check_batch(data, p.n());
  const double log_z = exact_enumerate(to_ising(p).problem, 1.0).log_partition;
  double total = 0.0;
  for (const auto& z : data) total += bm_energy(p, z) + log_z;
  return total / static_cast<double>(data.size());
}

BackendConfig TrainConfig::default_sampling() {
  BackendConfig c;
  c.sampler.top_k.reset();
  c.sampler.beta = 1.0;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) throw ConfigError("learning_rate must be nonnegative");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(weight_init_scale >= 0.0)) throw ConfigError("weight_init_scale must be nonnegative");
  sampling.sampler.validate();
}

RbmParams init_rbm(std::size_t n_visible, std::size_t n_hidden, double scale, std::uint64_t seed) {
  RbmParams p(n_visible, n_hidden);
  Rng rng(seed);
  for (Index j = 0; j < p.weights.cols(); ++j) {
    for (Index i = 0; i < p.weights.rows(); ++i) p.weights(i, j) = rng.uniform(-scale, scale);
  }
  return p;
}

TrainResult train(const RbmParams& p0, const std::vector<BinaryConfig>& data, const TrainConfig& tc) {
  tc.validate();
  p0.validate();
  check_batch(data, p0.n_visible());
  const std::size_t batch_size = tc.batch_size == 0 ? data.size() : std::min(tc.batch_size, data.size());
  const bool nll_ok = tc.track_nll && p0.n_visible() + p0.n_hidden() <= kMaxExactUnits;

  TrainResult out{p0, {}};
  RbmParams& p = out.params;
  std::vector<std::size_t> order(data.size());
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (batch_size < data.size()) {
      Rng shuffle(tc.seed, epoch);
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
    }
    double loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<BinaryConfig> batch;
      for (std::size_t k = start; k < std::min(start + batch_size, order.size()); ++k) batch.push_back(data[order[k]]);

      BackendConfig sampling = tc.sampling;
      sampling.sampler.seed = Rng(tc.seed, 0x100000000ull + step++).next();
      const PhaseStatistics pos = positive_phase(p, batch);
      const PhaseStatistics neg = negative_phase(p, tc.backend, sampling);
      const RbmGradient g = gradient_from_phases(p, pos, neg);
      const BmParams b = as_boltzmann(p);
      loss += expected_energy(b, pos) - expected_energy(b, neg);
      ++batches;

      p.weights -= tc.learning_rate * g.weights;
      p.visible_bias -= tc.learning_rate * g.visible_bias;
      p.hidden_bias -= tc.learning_rate * g.hidden_bias;
      if (!all_finite(p.weights) || !p.visible_bias.allFinite() || !p.hidden_bias.allFinite()) {
        throw DivergenceError("parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }
    EpochMetrics m{epoch, loss / static_cast<double>(batches), std::nullopt};
    if (nll_ok) m.nll = exact_nll(p, data);
    out.metrics.push_back(m);
  }
  return out;
}

std::vector<BinaryConfig> bars_and_stripes(std::size_t side, std::uint64_t seed) {
  if (side < 2) throw DomainError("bars-and-stripes side must be at least 2");
  if (side > 16) throw SizeLimitError("bars-and-stripes side must be at most 16");
  std::vector<BinaryConfig> out;
  const std::uint64_t masks = std::uint64_t{1} << side;
  // Stripes: row r is all ones iff bit r of the mask is set.
  for (std::uint64_t m = 0; m < masks; ++m) {
    BinaryConfig x(side * side);
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) x[r * side + c] = static_cast<std::uint8_t>((m >> r) & 1u);
    }
    out.push_back(std::move(x));
  }
  // Bars: column c is all ones iff bit c is set; skip the blank and full
  // images, which the stripes already contain.
  for (std::uint64_t m = 1; m + 1 < masks; ++m) {
    BinaryConfig x(side * side);
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) x[r * side + c] = static_cast<std::uint8_t>((m >> c) & 1u);
    }
    out.push_back(std::move(x));
  }
  Rng rng(seed);
  for (std::size_t i = out.size() - 1; i > 0; --i) std::swap(out[i], out[rng.below(i + 1)]);
  return out;
}

std::vector<BinaryConfig> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  std::vector<BinaryConfig> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    BinaryConfig x;
    for (char ch : line) {
      if (ch != '0' && ch != '1') throw ParseError(line_no, "dataset lines must be 0/1 strings");
      x.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
    if (!out.empty() && x.size() != out.front().size()) throw ParseError(line_no, "inconsistent row width");
    out.push_back(std::move(x));
  }
  return out;
}

std::string format_dataset(const std::vector<BinaryConfig>& data) {
  std::string out;
  for (const auto& x : data) {
    for (auto b : x) out.push_back(b ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

std::string metrics_line(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch}, {"loss", m.loss}};
  if (m.nll) j["nll"] = *m.nll;
  return j.dump();
}

namespace {

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const RbmParams& p) {
  return {{"n_visible", p.n_visible()},
          {"n_hidden", p.n_hidden()},
          {"weights", matrix_json(p.weights)},
          {"visible_bias", std::vector<double>(p.visible_bias.begin(), p.visible_bias.end())},
          {"hidden_bias", std::vector<double>(p.hidden_bias.begin(), p.hidden_bias.end())}};
}

RbmParams rbm_from_json(const nlohmann::json& j) {
  RbmParams p(j.at("n_visible").get<std::size_t>(), j.at("n_hidden").get<std::size_t>());
  const auto& w = j.at("weights");
  if (w.size() != p.n_visible()) throw DimensionError("weights row count mismatch");
  for (std::size_t i = 0; i < p.n_visible(); ++i) {
    const auto row = w[i].get<std::vector<double>>();
    if (row.size() != p.n_hidden()) throw DimensionError("weights column count mismatch");
    for (std::size_t k = 0; k < row.size(); ++k) p.weights(static_cast<Index>(i), static_cast<Index>(k)) = row[k];
  }
  p.visible_bias = vector_from_json(j.at("visible_bias"));
  p.hidden_bias = vector_from_json(j.at("hidden_bias"));
  p.validate();
  return p;
}

nlohmann::json to_json(const BmParams& p) {
  nlohmann::json coupling = nlohmann::json::array();
  for (Index i = 0; i < p.coupling.rows(); ++i) {
    for (Index k = i + 1; k < p.coupling.cols(); ++k) {
      if (p.coupling(i, k) != 0.0) coupling.push_back({i, k, p.coupling(i, k)});
    }
  }
  return {{"n", p.n()}, {"bias", std::vector<double>(p.bias.begin(), p.bias.end())}, {"coupling", coupling}};
}

BmParams bm_from_json(const nlohmann::json& j) {
  BmParams p(j.at("n").get<std::size_t>());
  p.bias = vector_from_json(j.at("bias"));
  if (p.bias.size() != static_cast<Index>(p.n()) || p.coupling.rows() != p.bias.size()) {
    throw DimensionError("bias length does not match n");
  }
  for (const auto& t : j.value("coupling", nlohmann::json::array())) {
    auto a = t.at(0).get<std::size_t>();
    auto b = t.at(1).get<std::size_t>();
    if (a == b || std::max(a, b) >= p.n()) throw DomainError("invalid coupling index");
    p.coupling(static_cast<Index>(std::min(a, b)), static_cast<Index>(std::max(a, b))) += t.at(2).get<double>();
  }
  p.validate();
  return p;
}

}  // namespace kpp::ebm
