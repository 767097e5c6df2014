#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "kpp/ebm.hpp"
#include "kpp/errors.hpp"
#include "kpp/random.hpp"
#include "oracles.hpp"

using namespace kpp;
using namespace kpp::ebm;

namespace {

RbmParams random_rbm(std::size_t nv, std::size_t nh, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  RbmParams p(nv, nh);
  for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = rng.uniform(-scale, scale);
  for (Eigen::Index i = 0; i < p.visible_bias.size(); ++i) p.visible_bias(i) = rng.uniform(-scale, scale);
  for (Eigen::Index i = 0; i < p.hidden_bias.size(); ++i) p.hidden_bias(i) = rng.uniform(-scale, scale);
  return p;
}

std::vector<BinaryConfig> random_visible(std::size_t nv, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<BinaryConfig> d(m, BinaryConfig(nv));
  for (auto& v : d)
    for (auto& b : v) b = rng.coin();
  return d;
}

double triple_loop_rbm(const RbmParams& p, const BinaryConfig& v, const BinaryConfig& h) {
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) e -= p.visible_bias(i) * v[i];
  for (std::size_t j = 0; j < h.size(); ++j) e -= p.hidden_bias(j) * h[j];
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) e -= v[i] * p.weights(i, j) * h[j];
  return e;
}

// Exact joint statistics <z_i>, <z_i z_j> by enumeration of the BM form.
PhaseStatistics exact_stats(const BmParams& b) {
  const std::size_t n = b.n();
  PhaseStatistics s{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  const double log_z = oracle::bm_log_z(b);
  for (std::uint64_t k = 0; k < (1ull << n); ++k) {
    auto z = oracle::bits_of(k, n);
    const double w = std::exp(-oracle::bm_energy(b, z) - log_z);
    for (std::size_t i = 0; i < n; ++i) {
      s.means(i) += w * z[i];
      for (std::size_t j = 0; j < n; ++j) s.correlations(i, j) += w * z[i] * z[j];
    }
  }
  return s;
}

double max_diff(const PhaseStatistics& a, const PhaseStatistics& b) {
  return std::max((a.means - b.means).cwiseAbs().maxCoeff(), (a.correlations - b.correlations).cwiseAbs().maxCoeff());
}

BackendConfig sa_sampling(std::size_t reads, std::uint64_t seed) {
  BackendConfig c = TrainConfig::default_sampling();
  c.sampler.reads = reads;
  c.sampler.seed = seed;
  return c;
}

}  // namespace

TEST(RbmEnergy, Examples) {
  RbmParams p(2, 1);
  EXPECT_EQ(rbm_energy(p, BinaryConfig{0, 0}, BinaryConfig{0}), 0.0);
  p.visible_bias << 1, 0;
  EXPECT_EQ(rbm_energy(p, BinaryConfig{1, 0}, BinaryConfig{0}), -1.0);
  EXPECT_THROW(rbm_energy(p, BinaryConfig{1}, BinaryConfig{0}), DimensionError);

  auto r = random_rbm(3, 2, 1);
  for (std::uint64_t a = 0; a < 8; ++a)
    for (std::uint64_t b = 0; b < 4; ++b) {
      auto v = oracle::bits_of(a, 3), h = oracle::bits_of(b, 2);
      EXPECT_NEAR(rbm_energy(r, v, h), triple_loop_rbm(r, v, h), 1e-12);
    }
}

TEST(ToIsing, ZeroAndClosedForm) {
  auto z = to_ising(RbmParams(2, 2));
  EXPECT_EQ(z.problem.offset, 0.0);
  for (double h : z.problem.linear) EXPECT_EQ(h, 0.0);
  for (const auto& [e, c] : z.problem.quadratic) EXPECT_EQ(c, 0.0);

  RbmParams one(1, 1);
  one.weights(0, 0) = 4;
  auto img = to_ising(one);
  EXPECT_EQ(img.problem.quadratic_at(0, 1), -1.0);
  EXPECT_EQ(img.problem.linear[0], -1.0);
  EXPECT_EQ(img.problem.linear[1], -1.0);
  EXPECT_EQ(img.problem.offset, -1.0);
  ASSERT_EQ(img.units.size(), 2u);
  EXPECT_EQ(img.units[0], (UnitRef{Layer::visible, 0}));
  EXPECT_EQ(img.units[1], (UnitRef{Layer::hidden, 0}));
}

TEST(ToIsing, ExhaustiveEnergyEquality) {
  auto r = random_rbm(3, 2, 7);
  auto img = to_ising(r);
  for (const auto& [e, c] : img.problem.quadratic) {
    EXPECT_TRUE(e.first < 3 && e.second >= 3) << "coupling inside a layer";
  }
  for (std::uint64_t k = 0; k < 32; ++k) {
    auto z = oracle::bits_of(k, 5);
    BinaryConfig v(z.begin(), z.begin() + 3), h(z.begin() + 3, z.end());
    EXPECT_NEAR(rbm_energy(r, v, h), ising_energy(img.problem, to_spins(z)), 1e-12);
  }

  BmParams b(6);
  Rng rng(3);
  for (int i = 0; i < 6; ++i) {
    b.bias(i) = rng.uniform(-1, 1);
    for (int j = i + 1; j < 6; ++j) b.coupling(i, j) = rng.uniform(-1, 1);
  }
  auto bi = to_ising(b);
  for (std::uint64_t k = 0; k < 64; ++k) {
    auto z = oracle::bits_of(k, 6);
    EXPECT_NEAR(bm_energy(b, z), oracle::bm_energy(b, z), 1e-12);
    EXPECT_NEAR(bm_energy(b, z), ising_energy(bi.problem, to_spins(z)), 1e-12);
  }
}

TEST(PositivePhase, Examples) {
  RbmParams p(3, 2);
  auto s = positive_phase(p, {{1, 0, 1}});
  EXPECT_EQ(s.means(3), 0.5);
  EXPECT_EQ(s.means(4), 0.5);

  p.weights.setConstant(10);
  auto sat = positive_phase(p, {{1, 1, 1}});
  EXPECT_GT(sat.means(3), 0.9999);
  EXPECT_THROW(positive_phase(p, {}), EmptyBatchError);
}

TEST(PositivePhase, MatchesConditionalEnumeration) {
  auto r = random_rbm(3, 2, 5);
  auto batch = random_visible(3, 4, 6);
  auto s = positive_phase(r, batch);
  Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(5, 5);
  for (const auto& v : batch) {
    // p(h | v) by enumerating the 4 hidden states.
    std::vector<double> w;
    for (std::uint64_t b = 0; b < 4; ++b) w.push_back(-triple_loop_rbm(r, v, oracle::bits_of(b, 2)));
    const double lz = oracle::log_sum_exp(w);
    for (std::uint64_t b = 0; b < 4; ++b) {
      auto h = oracle::bits_of(b, 2);
      BinaryConfig z(v);
      z.insert(z.end(), h.begin(), h.end());
      const double pr = std::exp(w[b] - lz) / static_cast<double>(batch.size());
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) corr(i, j) += pr * z[i] * z[j];
    }
  }
  EXPECT_LT((s.correlations - corr).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.means - corr.diagonal()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NegativePhase, ExactMatchesEnumeration) {
  auto r = random_rbm(2, 1, 11);
  auto s = negative_phase(r, Backend::exact, BackendConfig{});
  EXPECT_LT(max_diff(s, exact_stats(as_boltzmann(r))), 1e-10);

  auto zero = negative_phase(RbmParams(2, 2), Backend::exact, BackendConfig{});
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(zero.means(i), 0.5, 1e-14);
    for (int j = 0; j < 4; ++j) {
      if (i != j) {
        EXPECT_NEAR(zero.correlations(i, j), 0.25, 1e-14);
      }
    }
  }
}

TEST(NegativePhase, SamplersWithinTolerance) {
  auto r = random_rbm(2, 1, 11);
  auto ref = exact_stats(as_boltzmann(r));
  EXPECT_LT(max_diff(negative_phase(r, Backend::sa, sa_sampling(2000, 4)), ref), 0.05);
  EXPECT_LT(max_diff(negative_phase(r, Backend::fixed_temp, sa_sampling(20000, 4)), ref), 0.05);
}

TEST(NegativePhase, ErrorShrinksWithReads) {
  int better = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = random_rbm(2, 2, 100 + seed);
    auto ref = exact_stats(as_boltzmann(r));
    double e100 = 0.0, e2000 = 0.0;
    // Average a few independent estimates so one lucky draw cannot decide.
    for (std::uint64_t rep = 0; rep < 4; ++rep) {
      e100 += max_diff(negative_phase(r, Backend::sa, sa_sampling(100, seed * 10 + rep)), ref);
      e2000 += max_diff(negative_phase(r, Backend::sa, sa_sampling(2000, seed * 10 + rep)), ref);
    }
    if (e2000 < e100) ++better;
  }
  EXPECT_GE(better, 9);
}

TEST(Loss, ClosedForms) {
  // BM n=1, b=1: data all z=1, model mean m: loss = -1 - (-m).
  BmParams b(1);
  b.bias(0) = 1.0;
  PhaseStatistics neg{Eigen::VectorXd::Constant(1, 0.6), Eigen::MatrixXd::Constant(1, 1, 0.6)};
  EXPECT_NEAR(energy_difference_loss(b, {{1}, {1}}, neg), -1.0 + 0.6, 1e-15);

  auto r = random_rbm(2, 1, 2);
  // Batch distributed exactly as the model's visible marginal.
  auto bm = as_boltzmann(r);
  auto ex = exact_stats(bm);
  auto model = negative_phase(r, Backend::exact, BackendConfig{});
  EXPECT_NEAR(expected_energy(bm, model), expected_energy(bm, ex), 1e-12);
  PhaseStatistics bad{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2)};
  EXPECT_THROW(energy_difference_loss(r, {{1, 0}}, bad), DimensionError);
}

TEST(Loss, ZeroWhenDataMatchesModel) {
  // A fully visible BM whose data multiset reproduces its own distribution:
  // phase statistics coincide, so the loss vanishes.
  BmParams b(2);
  b.bias << 0.3, -0.2;
  b.coupling(0, 1) = 0.5;
  auto ex = exact_stats(b);
  // The positive phase of a weighted batch is approximated by repeating
  // each config in proportion to its probability.
  std::vector<BinaryConfig> batch;
  const double lz = oracle::bm_log_z(b);
  for (std::uint64_t k = 0; k < 4; ++k) {
    auto z = oracle::bits_of(k, 2);
    const auto copies = static_cast<int>(std::lround(1e5 * std::exp(-oracle::bm_energy(b, z) - lz)));
    for (int c = 0; c < copies; ++c) batch.push_back(z);
  }
  EXPECT_NEAR(energy_difference_loss(b, batch, ex), 0.0, 1e-4);
  auto pos = positive_phase(b, batch);
  EXPECT_NEAR(energy_difference_loss(b, batch, pos), 0.0, 1e-9);
  EXPECT_LT(gradient_from_phases(b, pos, pos).max_abs(), 1e-15);
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto r = random_rbm(3, 2, 50 + seed, 0.5);
    auto data = random_visible(3, 5, 60 + seed);
    auto g = parameter_gradients(r, data, Backend::exact, BackendConfig{});
    const double h = 1e-4;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      auto f = [&](double x) {
        param = x;
        return oracle::rbm_nll(r, data);
      };
      const double fd = oracle::central(f, saved, h);
      param = saved;
      EXPECT_LT(oracle::rel_err(analytic, fd, 1e-6), 1e-4) << analytic << " vs " << fd;
    };
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) check(r.weights(i, j), g.weights(i, j));
    for (int i = 0; i < 3; ++i) check(r.visible_bias(i), g.visible_bias(i));
    for (int j = 0; j < 2; ++j) check(r.hidden_bias(j), g.hidden_bias(j));
  }
}

TEST(Gradients, SignAtZeroInit) {
  RbmParams p(3, 1);
  auto g = parameter_gradients(p, {{1, 0, 1}}, Backend::exact, BackendConfig{});
  // Descent subtracts the gradient: bias rises where the data bit is 1.
  EXPECT_LT(g.visible_bias(0), 0.0);
  EXPECT_GT(g.visible_bias(1), 0.0);
  EXPECT_NEAR(g.visible_bias(0), 0.5 - 1.0, 1e-14);
}

TEST(ExactNll, Examples) {
  auto data = random_visible(4, 6, 1);
  EXPECT_NEAR(exact_nll(RbmParams(4, 3), data), 4 * std::log(2.0), 1e-12);

  auto r = random_rbm(2, 1, 9);
  auto d2 = random_visible(2, 5, 2);
  EXPECT_NEAR(exact_nll(r, d2), oracle::rbm_nll(r, d2), 1e-12);

  // Never below the empirical entropy.
  std::map<BinaryConfig, double> freq;
  for (const auto& v : d2) freq[v] += 1.0 / static_cast<double>(d2.size());
  double entropy = 0.0;
  for (const auto& [v, q] : freq) entropy -= q * std::log(q);
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_GE(exact_nll(random_rbm(2, 2, seed, 3.0), d2), entropy - 1e-9);

  EXPECT_THROW(exact_nll(RbmParams(15, 6), data), SizeLimitError);

  BmParams b(3);
  b.bias << 0.5, -1, 0.2;
  b.coupling(0, 2) = 0.7;
  std::vector<BinaryConfig> bd{{1, 0, 1}, {0, 0, 1}};
  double ref = 0.0;
  for (const auto& z : bd) ref += oracle::bm_energy(b, z) + oracle::bm_log_z(b);
  EXPECT_NEAR(exact_nll(b, bd), ref / 2, 1e-12);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto data = bars_and_stripes(2, 1);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 3;
  auto p0 = init_rbm(4, 2, 0.01, 5);
  auto res = train(p0, data, tc);
  EXPECT_EQ(res.params.weights, p0.weights);
  EXPECT_EQ(res.params.visible_bias, p0.visible_bias);
}

TEST(Train, ExactNllMonotoneForSmallSteps) {
  auto data = bars_and_stripes(2, 1);
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.epochs = 100;
  auto res = train(init_rbm(4, 3, 0.01, 2), data, tc);
  for (std::size_t i = 1; i < res.metrics.size(); ++i) {
    EXPECT_LE(*res.metrics[i].nll, *res.metrics[i - 1].nll + 1e-6) << "epoch " << i + 1;
  }
}

TEST(Train, DeterministicAndLearns) {
  auto data = bars_and_stripes(2, 3);
  TrainConfig tc;
  tc.learning_rate = 0.5;
  tc.epochs = 150;
  tc.batch_size = 3;
  tc.seed = 4;
  tc.backend = Backend::sa;
  tc.sampling.sampler.reads = 300;
  // A tiny init sits on the symmetric saddle of this data set for hundreds of epochs.
  auto p0 = init_rbm(4, 3, 0.5, 1);
  auto a = train(p0, data, tc);
  auto b = train(p0, data, tc);
  EXPECT_EQ(a.params.weights, b.params.weights);
  EXPECT_LT(*a.metrics.back().nll, *a.metrics.front().nll - 0.05);
  EXPECT_EQ(metrics_line(a.metrics.front()).front(), '{');
}

TEST(Train, DivergenceGuard) {
  auto data = bars_and_stripes(2, 1);
  TrainConfig tc;
  tc.learning_rate = 1e308;
  tc.epochs = 5;
  EXPECT_THROW(train(init_rbm(4, 2, 1.0, 1), data, tc), DivergenceError);
}

TEST(BarsAndStripes, Patterns) {
  EXPECT_EQ(bars_and_stripes(2, 0).size(), 6u);
  auto d3 = bars_and_stripes(3, 0);
  EXPECT_EQ(d3.size(), 14u);
  EXPECT_EQ(std::set<BinaryConfig>(d3.begin(), d3.end()).size(), 14u);
  for (const auto& x : d3) {
    bool rows_equal = true, cols_equal = true;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        rows_equal = rows_equal && x[r * 3 + c] == x[c];
        cols_equal = cols_equal && x[r * 3 + c] == x[r * 3];
      }
    EXPECT_TRUE(rows_equal || cols_equal);
  }
  EXPECT_NE(bars_and_stripes(3, 0), bars_and_stripes(3, 1));
  EXPECT_THROW(bars_and_stripes(1, 0), DomainError);
}

TEST(Serialization, RoundTrips) {
  auto r = random_rbm(3, 2, 1);
  auto back = rbm_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.weights, r.weights);
  EXPECT_EQ(back.hidden_bias, r.hidden_bias);

  auto d = bars_and_stripes(2, 0);
  auto text = format_dataset(d);
  EXPECT_EQ(text.substr(0, 5).find_first_not_of("01\n"), std::string::npos);
}
