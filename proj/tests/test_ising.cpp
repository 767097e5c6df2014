#include <gtest/gtest.h>

#include <cmath>

#include "kpp/errors.hpp"
#include "kpp/ising.hpp"
#include "kpp/problem_io.hpp"
#include "kpp/random.hpp"
#include "oracles.hpp"

using namespace kpp;

namespace {

QuboProblem two_var() {
  QuboProblem p(2);
  p.linear = {-1, -1};
  p.add_quadratic(0, 1, 3);
  return p;
}

QuboProblem random_int_qubo(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  QuboProblem p(n);
  for (auto& h : p.linear) h = static_cast<double>(rng.below(11)) - 5.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p.quadratic[{i, j}] = static_cast<double>(rng.below(11)) - 5.0;
  p.offset = static_cast<double>(rng.below(5));
  return p;
}

}  // namespace

TEST(QuboEnergy, SmallCases) {
  QuboProblem one(1);
  one.linear = {-1};
  EXPECT_EQ(qubo_energy(one, BinaryConfig{1}), -1.0);

  auto p = two_var();
  EXPECT_EQ(qubo_energy(p, BinaryConfig{1, 1}), 1.0);
  EXPECT_EQ(qubo_energy(p, BinaryConfig{1, 0}), -1.0);
  double best = 1e9;
  for (std::uint64_t k = 0; k < 4; ++k) best = std::min(best, qubo_energy(p, oracle::bits_of(k, 2)));
  EXPECT_EQ(best, -1.0);

  p.offset = 2.5;
  EXPECT_EQ(qubo_energy(p, BinaryConfig{0, 0}), 2.5);
}

TEST(QuboEnergy, RejectsWrongLength) {
  EXPECT_THROW(qubo_energy(two_var(), BinaryConfig{1}), DimensionError);
}

TEST(IsingEnergy, SignAlgebra) {
  IsingProblem p(2);
  p.add_quadratic(0, 1, -1);
  EXPECT_EQ(ising_energy(p, SpinConfig{1, 1}), -1.0);
  EXPECT_EQ(ising_energy(p, SpinConfig{1, -1}), 1.0);

  IsingProblem q(1);
  q.linear = {0.5};
  EXPECT_EQ(ising_energy(q, SpinConfig{-1}), -0.5);
}

TEST(IsingEnergy, Errors) {
  IsingProblem p(2);
  EXPECT_THROW(ising_energy(p, SpinConfig{1}), DimensionError);
  EXPECT_THROW(ising_energy(p, SpinConfig{1, 0}), DomainError);
}

TEST(IsingEnergy, MatchesTripleLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto q = random_int_qubo(3, seed);
    IsingProblem p(3);
    p.linear = q.linear;
    p.quadratic = q.quadratic;
    p.offset = q.offset;
    for (std::uint64_t k = 0; k < 8; ++k) {
      auto s = oracle::spins_of(k, 3);
      EXPECT_EQ(ising_energy(p, s), oracle::energy(p, s));
    }
  }
}

TEST(Conversion, ClosedForms) {
  QuboProblem one(1);
  one.linear = {-1};
  auto i1 = qubo_to_ising(one);
  EXPECT_EQ(i1.linear[0], -0.5);
  EXPECT_EQ(i1.offset, -0.5);

  QuboProblem two(2);
  two.add_quadratic(0, 1, 4);
  auto i2 = qubo_to_ising(two);
  EXPECT_EQ(i2.quadratic_at(0, 1), 1.0);
  EXPECT_EQ(i2.linear[0], 1.0);
  EXPECT_EQ(i2.linear[1], 1.0);
  EXPECT_EQ(i2.offset, 1.0);

  auto back = ising_to_qubo(i1);
  EXPECT_EQ(back.linear[0], -1.0);
  EXPECT_EQ(back.offset, 0.0);

  auto zero = ising_to_qubo(IsingProblem(4));
  EXPECT_EQ(max_coefficient_difference(zero, QuboProblem(4)), 0.0);
}

TEST(Conversion, ExhaustiveEnergyEquality) {
  auto p = random_qubo(10, 3);
  p.offset = 0.7;
  auto q = qubo_to_ising(p);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 1024; ++k) {
    auto x = oracle::bits_of(k, 10);
    worst = std::max(worst, std::abs(oracle::energy(p, x) - ising_energy(q, to_spins(x))));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Conversion, RoundTrips) {
  auto p = random_qubo(8, 11);
  p.offset = -1.25;
  EXPECT_LT(max_coefficient_difference(ising_to_qubo(qubo_to_ising(p)), p), 1e-12);
  auto s = random_ising(8, 12);
  EXPECT_LT(max_coefficient_difference(qubo_to_ising(ising_to_qubo(s)), s), 1e-12);
}

TEST(Conversion, ArgminInvariant) {
  auto p = random_int_qubo(12, 5);
  auto q = qubo_to_ising(p);
  std::uint64_t bx = 0, bs = 0;
  double ex = 1e18, es = 1e18;
  for (std::uint64_t k = 0; k < (1u << 12); ++k) {
    double a = oracle::energy(p, oracle::bits_of(k, 12));
    double b = oracle::energy(q, oracle::spins_of(k, 12));
    if (a < ex) ex = a, bx = k;
    if (b < es) es = b, bs = k;
  }
  EXPECT_EQ(bx, bs);
  EXPECT_NEAR(ex, es, 1e-12);
}

TEST(QuadraticForm, ExplicitZerosDoNotMatter) {
  QuboProblem with(3), without(3);
  with.linear = without.linear = {1, -2, 0.5};
  with.quadratic[{0, 2}] = 0.0;
  with.quadratic[{1, 2}] = 1.5;
  without.quadratic[{1, 2}] = 1.5;
  for (std::uint64_t k = 0; k < 8; ++k) {
    auto x = oracle::bits_of(k, 3);
    EXPECT_EQ(qubo_energy(with, x), qubo_energy(without, x));
  }
  with.prune_zeros();
  EXPECT_EQ(with.quadratic.size(), 1u);
}

TEST(QuadraticForm, FoldsLowerTriangle) {
  QuboProblem p(3);
  p.add_quadratic(2, 0, 1.0);
  p.add_quadratic(0, 2, 2.0);
  EXPECT_EQ(p.quadratic.size(), 1u);
  EXPECT_EQ(p.quadratic_at(0, 2), 3.0);
  EXPECT_THROW(p.add_quadratic(1, 1, 1.0), DomainError);
  EXPECT_THROW(p.add_quadratic(0, 3, 1.0), DomainError);
}

TEST(QuadraticForm, ValidateRejectsNonFinite) {
  QuboProblem p(2);
  p.linear[0] = std::nan("");
  EXPECT_THROW(p.validate(), DomainError);
  QuboProblem q(2);
  q.quadratic[{1, 0}] = 1.0;
  EXPECT_THROW(q.validate(), DomainError);
}

TEST(ProblemIo, ParsesReferenceText) {
  auto any = parse_problem("p qubo 2\n0 0 -1\n1 1 -1\n0 1 3");
  ASSERT_TRUE(std::holds_alternative<QuboProblem>(any));
  EXPECT_EQ(max_coefficient_difference(std::get<QuboProblem>(any), two_var()), 0.0);
}

TEST(ProblemIo, CanonicalRoundTrip) {
  const char* text =
      "# fixture\n"
      "p ising 3\n"
      "2 1 0.5   # lower triangle folds\n"
      "offset -2\n"
      "0 0 1.5\n"
      "0 2 0\n";
  std::string canon = serialize_problem(parse_problem(text));
  EXPECT_EQ(canon, "p ising 3\noffset -2\n0 0 1.5\n1 2 0.5\n");
  EXPECT_EQ(serialize_problem(parse_problem(canon)), canon);
}

TEST(ProblemIo, ShortestRoundTripDoubles) {
  auto p = random_ising(5, 9);
  auto q = std::get<IsingProblem>(parse_problem(serialize_problem(p)));
  EXPECT_EQ(max_coefficient_difference(p, q), 0.0);
}

TEST(ProblemIo, Errors) {
  auto line_of = [](const std::string& t) {
    try {
      parse_problem(t);
    } catch (const ParseError& e) {
      return static_cast<long>(e.line());
    }
    return -1L;
  };
  EXPECT_EQ(line_of("0 1 3"), 1);
  EXPECT_EQ(line_of("p qubo 2\n0 1 3\n0 1 4\n"), 3);
  EXPECT_EQ(line_of("p qubo 2\n0 2 1\n"), 2);
  EXPECT_EQ(line_of("p qubo 2\n\n0 x 1\n"), 3);
  EXPECT_EQ(line_of("p tsp 2\n"), 1);
  EXPECT_EQ(line_of("p qubo 2\noffset 1\noffset 2\n"), 3);
  EXPECT_GT(line_of("# nothing\n"), 0);
}
