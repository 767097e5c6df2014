#include "kpp/ising.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kpp/errors.hpp"
#include "kpp/random.hpp"

namespace kpp {

void QuadraticForm::add_linear(std::size_t i, double c) {
  if (i >= n) throw DomainError("linear index " + std::to_string(i) + " out of range");
  linear[i] += c;
}

void QuadraticForm::add_quadratic(std::size_t i, std::size_t j, double c) {
  if (i == j) throw DomainError("diagonal coupling (" + std::to_string(i) + "," + std::to_string(j) + ")");
  if (i >= n || j >= n) {
    throw DomainError("coupling index (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
  }
  quadratic[{std::min(i, j), std::max(i, j)}] += c;
}

double QuadraticForm::quadratic_at(std::size_t i, std::size_t j) const {
  auto it = quadratic.find({std::min(i, j), std::max(i, j)});
  return it == quadratic.end() ? 0.0 : it->second;
}

void QuadraticForm::validate() const {
  if (linear.size() != n) throw DomainError("linear vector length does not match n");
  for (double c : linear) {
    if (!std::isfinite(c)) throw DomainError("non-finite linear coefficient");
  }
  for (const auto& [e, c] : quadratic) {
    if (!(e.first < e.second) || e.second >= n) {
      throw DomainError("invalid coupling key (" + std::to_string(e.first) + "," + std::to_string(e.second) + ")");
    }
    if (!std::isfinite(c)) throw DomainError("non-finite coupling coefficient");
  }
  if (!std::isfinite(offset)) throw DomainError("non-finite offset");
}

void QuadraticForm::prune_zeros() {
  std::erase_if(quadratic, [](const auto& kv) { return kv.second == 0.0; });
}

double qubo_energy(const QuboProblem& p, std::span<const std::uint8_t> x) {
  if (x.size() != p.n) throw DimensionError("config length " + std::to_string(x.size()) + " != n=" + std::to_string(p.n));
  double e = p.offset;
  for (std::size_t i = 0; i < p.n; ++i) {
    if (x[i] > 1) throw DomainError("binary config entry is not 0 or 1");
    if (x[i]) e += p.linear[i];
  }
  for (const auto& [ij, c] : p.quadratic) {
    if (x[ij.first] && x[ij.second]) e += c;
  }
  return e;
}

double ising_energy(const IsingProblem& p, std::span<const std::int8_t> s) {
  if (s.size() != p.n) throw DimensionError("config length " + std::to_string(s.size()) + " != n=" + std::to_string(p.n));
  double e = p.offset;
  for (std::size_t i = 0; i < p.n; ++i) {
    if (s[i] != 1 && s[i] != -1) throw DomainError("spin entry is not +1 or -1");
    e += p.linear[i] * s[i];
  }
  for (const auto& [ij, c] : p.quadratic) e += c * s[ij.first] * s[ij.second];
  return e;
}

// x = (1+s)/2:
//   h x_i            = h/2 + h/2 s_i
//   J x_i x_j        = J/4 (1 + s_i + s_j + s_i s_j)
IsingProblem qubo_to_ising(const QuboProblem& p) {
  p.validate();
  IsingProblem q(p.n);
  q.offset = p.offset;
  for (std::size_t i = 0; i < p.n; ++i) {
    q.linear[i] += p.linear[i] / 2.0;
    q.offset += p.linear[i] / 2.0;
  }
  for (const auto& [ij, c] : p.quadratic) {
    q.quadratic[ij] = c / 4.0;
    q.linear[ij.first] += c / 4.0;
    q.linear[ij.second] += c / 4.0;
    q.offset += c / 4.0;
  }
  return q;
}

// s = 2x - 1:
//   h s_i            = 2h x_i - h
//   J s_i s_j        = 4J x_i x_j - 2J x_i - 2J x_j + J
QuboProblem ising_to_qubo(const IsingProblem& p) {
  p.validate();
  QuboProblem q(p.n);
  q.offset = p.offset;
  for (std::size_t i = 0; i < p.n; ++i) {
    q.linear[i] += 2.0 * p.linear[i];
    q.offset -= p.linear[i];
  }
  for (const auto& [ij, c] : p.quadratic) {
    q.quadratic[ij] = 4.0 * c;
    q.linear[ij.first] -= 2.0 * c;
    q.linear[ij.second] -= 2.0 * c;
    q.offset += c;
  }
  return q;
}

SpinConfig to_spins(std::span<const std::uint8_t> x) {
  SpinConfig s(x.size());
  std::transform(x.begin(), x.end(), s.begin(), [](std::uint8_t b) { return static_cast<std::int8_t>(b ? 1 : -1); });
  return s;
}

BinaryConfig to_bits(std::span<const std::int8_t> s) {
  BinaryConfig x(s.size());
  std::transform(s.begin(), s.end(), x.begin(), [](std::int8_t v) { return static_cast<std::uint8_t>(v > 0 ? 1 : 0); });
  return x;
}

namespace {

template <class Problem>
Problem random_form(std::size_t n, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Problem p(n);
  for (std::size_t i = 0; i < n; ++i) p.linear[i] = rng.uniform(-scale, scale);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) p.quadratic[{i, j}] = rng.uniform(-scale, scale);
  }
  return p;
}

}  // namespace

IsingProblem random_ising(std::size_t n, std::uint64_t seed, double scale) { return random_form<IsingProblem>(n, seed, scale); }

QuboProblem random_qubo(std::size_t n, std::uint64_t seed, double scale) { return random_form<QuboProblem>(n, seed, scale); }

double max_coefficient_difference(const QuadraticForm& a, const QuadraticForm& b) {
  if (a.n != b.n) throw DimensionError("problems differ in size");
  double d = std::abs(a.offset - b.offset);
  for (std::size_t i = 0; i < a.n; ++i) d = std::max(d, std::abs(a.linear[i] - b.linear[i]));
  for (const auto& [ij, c] : a.quadratic) d = std::max(d, std::abs(c - b.quadratic_at(ij.first, ij.second)));
  for (const auto& [ij, c] : b.quadratic) d = std::max(d, std::abs(c - a.quadratic_at(ij.first, ij.second)));
  return d;
}

}  // namespace kpp
