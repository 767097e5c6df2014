#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "kpp/ising.hpp"

namespace kpp {

using AnyProblem = std::variant<QuboProblem, IsingProblem>;

/// Parses the coordinate-list problem format:
///
///   # comment
///   p qubo 3          (or: p ising 3)
///   offset 0.5        (optional, at most once)
///   0 0 -1            i == j: linear term
///   0 1 2.5           i != j: quadratic term, folded onto (min, max)
///
/// Throws ParseError carrying the 1-based line number.
AnyProblem parse_problem(std::string_view text);

/// Canonical form: header, offset if nonzero, nonzero linear terms ascending,
/// nonzero couplings in lexicographic (i, j) order. Numbers are written in the
/// shortest form that parses back to the same double.
std::string serialize_problem(const QuboProblem& p);
std::string serialize_problem(const IsingProblem& p);
std::string serialize_problem(const AnyProblem& p);

AnyProblem read_problem_file(const std::string& path);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace kpp
