#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kpp/active_select.hpp"
#include "kpp/errors.hpp"
#include "kpp/random.hpp"
#include "oracles.hpp"

using namespace kpp;
using namespace kpp::select;

namespace {

EmbeddingStore random_store(std::size_t m, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> ids;
  Eigen::MatrixXd v(m, d);
  Eigen::VectorXd u(m);
  for (std::size_t i = 0; i < m; ++i) {
    ids.push_back("s" + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) v(i, j) = rng.uniform(-1, 1);
    u(i) = rng.uniform();
  }
  return EmbeddingStore(ids, v, u);
}

std::vector<std::size_t> all(std::size_t n) {
  std::vector<std::size_t> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i;
  return c;
}

// Objective evaluated straight from raw vectors, without the QUBO builder.
double direct_objective(const EmbeddingStore& s, const std::vector<std::size_t>& cand, std::uint64_t mask, double gamma,
                        double lambda, std::size_t k) {
  double f = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < cand.size(); ++a) {
    if (!((mask >> a) & 1u)) continue;
    ++count;
    f -= s.uncertainty(cand[a]);
    for (std::size_t b = a + 1; b < cand.size(); ++b) {
      if (!((mask >> b) & 1u)) continue;
      auto va = s.get_embedding(cand[a]), vb = s.get_embedding(cand[b]);
      f += gamma * std::max(0.0, va.dot(vb) / (va.norm() * vb.norm()));
    }
  }
  const double excess = static_cast<double>(count) - static_cast<double>(k);
  return f + lambda * excess * excess;
}

}  // namespace

TEST(Store, Embeddings) {
  Eigen::MatrixXd v(1, 2);
  v << 3, 4;
  EmbeddingStore one({"a"}, v, Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_NEAR(one.get_embedding(0)(0), 0.6, 1e-15);
  EXPECT_NEAR(one.get_embedding(0)(1), 0.8, 1e-15);
  EXPECT_THROW(one.get_embedding(1), IndexError);

  auto s = random_store(20, 5, 1);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.get_embedding(i).norm(), 1.0, 1e-6);

  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 2);
  EXPECT_THROW(EmbeddingStore({"a"}, z, Eigen::VectorXd::Constant(1, 0.5)), Error);
  Eigen::MatrixXd two(2, 2);
  two << 1, 0, 0, 1;
  EXPECT_THROW(EmbeddingStore({"a", "a"}, two, Eigen::VectorXd::Constant(2, 0.5)), Error);
  EXPECT_THROW(EmbeddingStore({"a", "b"}, two, Eigen::VectorXd::Constant(2, -1)), Error);
}

TEST(Store, TextRoundTrip) {
  auto s = random_store(6, 3, 2);
  auto back = EmbeddingStore::parse(s.serialize());
  ASSERT_EQ(back.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.id(i), s.id(i));
    EXPECT_EQ(back.uncertainty(i), s.uncertainty(i));
    EXPECT_LT((back.get_embedding(i) - s.get_embedding(i)).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(EmbeddingStore::parse("2 1\na 0.5 1\n"), Error);
}

TEST(SelectionQubo, TwoCandidateInstance) {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, 1, 0;
  EmbeddingStore s({"a", "b"}, v, Eigen::VectorXd::Constant(2, 1.0));
  SelectionConfig c;
  c.gamma = 3.0;
  c.lambda = 0.0;
  auto q = build_selection_qubo(s, {0, 1}, c);
  EXPECT_EQ(q.linear, (std::vector<double>{-1, -1}));
  EXPECT_EQ(q.quadratic_at(0, 1), 3.0);
  double best = 1e9;
  for (std::uint64_t k = 0; k < 4; ++k) best = std::min(best, qubo_energy(q, oracle::bits_of(k, 2)));
  EXPECT_EQ(best, -1.0);

  c.solver = Solver::exact;
  auto r = select_batch(s, {0, 1}, c);
  EXPECT_EQ(r.chosen.size(), 1u);
  EXPECT_EQ(r.objective, -1.0);
  EXPECT_FALSE(r.diversity.has_value());
}

TEST(SelectionQubo, SeparableCase) {
  auto s = random_store(10, 4, 3);
  SelectionConfig c;
  c.gamma = 0.0;
  c.lambda = 0.0;
  c.solver = Solver::exact;
  auto r = select_batch(s, all(10), c);
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < 10; ++i)
    if (s.uncertainty(i) > 0) positive.push_back(i);
  EXPECT_EQ(r.chosen, positive);
}

TEST(SelectionQubo, PenaltyExpansion) {
  auto s = random_store(5, 3, 4);
  SelectionConfig c;
  c.k = 2;
  c.gamma = 0.7;
  c.lambda = 1.3;
  auto q = build_selection_qubo(s, all(5), c);
  for (std::uint64_t m = 0; m < 32; ++m) {
    EXPECT_NEAR(qubo_energy(q, oracle::bits_of(m, 5)), direct_objective(s, all(5), m, 0.7, 1.3, 2), 1e-12);
  }
  c.k = 6;
  EXPECT_THROW(build_selection_qubo(s, all(5), c), ConfigError);
}

TEST(SelectBatch, ExactMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::size_t n = 8 + seed;
    auto s = random_store(n + 3, 4, 10 + seed);
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < n; ++i) cand.push_back(i + 3);
    SelectionConfig c;
    c.k = 3;
    c.gamma = 1.0;
    c.lambda = 0.8;
    c.solver = Solver::exact;
    auto r = select_batch(s, cand, c);
    double best = 1e18;
    for (std::uint64_t m = 0; m < (1ull << n); ++m) best = std::min(best, direct_objective(s, cand, m, 1.0, 0.8, 3));
    EXPECT_NEAR(r.objective, best, 1e-9);
    EXPECT_EQ(std::set<std::size_t>(r.chosen.begin(), r.chosen.end()).size(), r.chosen.size());
    for (std::size_t i = 0; i < r.chosen.size(); ++i) EXPECT_EQ(r.ids[i], s.id(r.chosen[i]));
  }
}

TEST(SelectBatch, LambdaBoundForcesCardinality) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = random_store(10, 3, 40 + seed);
    SelectionConfig c;
    c.k = 4;
    c.gamma = 2.0;
    auto q = build_selection_qubo(s, all(10), c);
    double best = 1e18;
    std::vector<double> e(1024);
    for (std::uint64_t m = 0; m < 1024; ++m) best = std::min(best, e[m] = qubo_energy(q, oracle::bits_of(m, 10)));
    for (std::uint64_t m = 0; m < 1024; ++m) {
      if (e[m] <= best + 1e-9) {
        EXPECT_EQ(std::popcount(m), 4);
      }
    }
  }
}

TEST(SelectBatch, ExchangeThresholdForcesCardinality) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = random_store(12, 3, 70 + seed);
    SelectionConfig c;
    c.k = 5;
    c.gamma = 1.5;
    c.lambda = exchange_lambda_threshold(s, all(12), c.gamma, c.k) + 1e-6;
    EXPECT_LT(*c.lambda, cardinality_lambda_bound(s, all(12), c.gamma));
    auto q = build_selection_qubo(s, all(12), c);
    double best = 1e18;
    std::vector<double> e(4096);
    for (std::uint64_t m = 0; m < 4096; ++m) best = std::min(best, e[m] = qubo_energy(q, oracle::bits_of(m, 12)));
    for (std::uint64_t m = 0; m < 4096; ++m) {
      if (e[m] <= best + 1e-9) {
        EXPECT_EQ(std::popcount(m), 5);
      }
    }
  }
}

TEST(SelectBatch, DuplicatesAreNotBothChosen) {
  Eigen::MatrixXd v(4, 2);
  v << 1, 0, 1, 0, 0, 1, -1, 0.2;
  Eigen::VectorXd u(4);
  u << 0.9, 0.8, 0.3, 0.1;
  EmbeddingStore s({"a", "a2", "b", "c"}, v, u);
  SelectionConfig c;
  c.gamma = 2.0;  // > 2 max u
  c.lambda = 0.0;
  c.solver = Solver::exact;
  auto r = select_batch(s, all(4), c);
  EXPECT_FALSE(std::count(r.chosen.begin(), r.chosen.end(), 0) && std::count(r.chosen.begin(), r.chosen.end(), 1));
}

TEST(SelectBatch, ScalingLeavesArgminUnchanged) {
  auto s = random_store(9, 3, 7);
  SelectionConfig c;
  c.k = 3;
  c.lambda = 0.5;
  auto q = build_selection_qubo(s, all(9), c);
  auto scaled = q;
  for (auto& h : scaled.linear) h *= 2.5;
  for (auto& [e, j] : scaled.quadratic) j *= 2.5;
  scaled.offset *= 2.5;
  auto argmins = [](const QuboProblem& p) {
    std::vector<double> e(512);
    double best = 1e18;
    for (std::uint64_t m = 0; m < 512; ++m) best = std::min(best, e[m] = qubo_energy(p, oracle::bits_of(m, 9)));
    std::set<std::uint64_t> out;
    for (std::uint64_t m = 0; m < 512; ++m)
      if (e[m] <= best + 1e-9 * std::abs(best)) out.insert(m);
    return out;
  };
  EXPECT_EQ(argmins(q), argmins(scaled));
}

TEST(SelectBatch, AnnealMatchesExactOnModerateInstance) {
  auto s = random_store(14, 4, 8);
  SelectionConfig c;
  c.k = 4;
  c.lambda = 1.0;
  c.solver = Solver::exact;
  auto ex = select_batch(s, all(14), c);
  c.solver = Solver::anneal;
  c.sampler.reads = 200;
  c.sampler.seed = 3;
  auto sa = select_batch(s, all(14), c);
  EXPECT_NEAR(sa.objective, ex.objective, 1e-9);
  auto q = build_selection_qubo(s, all(14), c);
  BinaryConfig x(14, 0);
  for (auto i : sa.chosen) x[i] = 1;
  EXPECT_NEAR(qubo_energy(q, x), sa.objective, 1e-9);
}

TEST(Diversity, Scores) {
  Eigen::MatrixXd v(3, 2);
  v << 1, 0, 1, 0, 0, 1;
  EmbeddingStore s({"a", "b", "c"}, v, Eigen::VectorXd::Constant(3, 0.1));
  EXPECT_NEAR(diversity_score(s, {0, 1}), 1.0, 1e-15);
  EXPECT_NEAR(diversity_score(s, {0, 2}), 0.0, 1e-15);
  EXPECT_THROW(diversity_score(s, {0}), DomainError);
}

TEST(Diversity, BeatsRandomBatchesOnClusters) {
  auto cs = clustered_store(64, 4, 8, 0.1, 5);
  SelectionConfig c;
  c.k = 8;
  c.lambda = exchange_lambda_threshold(cs.store, all(64), c.gamma, c.k) + 0.5;
  c.solver = Solver::anneal;
  c.sampler.reads = 100;
  c.sampler.seed = 1;
  auto r = select_batch(cs.store, all(64), c);
  ASSERT_EQ(r.chosen.size(), 8u);
  std::set<std::size_t> clusters;
  for (auto i : r.chosen) clusters.insert(cs.cluster[i]);
  EXPECT_GE(clusters.size(), 3u);
  Rng rng(9);
  double mean = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> perm = all(64);
    for (std::size_t i = 63; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    perm.resize(8);
    mean += diversity_score(cs.store, perm) / 100.0;
  }
  EXPECT_LT(*r.diversity, mean);
}
