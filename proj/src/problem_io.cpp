#include "kpp/problem_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "kpp/errors.hpp"

namespace kpp {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, "invalid number '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(line_no, "non-finite coefficient");
  return v;
}

std::size_t parse_index(std::string_view tok, std::size_t line_no) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, "invalid index '" + std::string(tok) + "'");
  }
  return v;
}

template <class Problem>
std::string serialize_form(const Problem& p, std::string_view kind) {
  std::ostringstream os;
  os << "p " << kind << ' ' << p.n << '\n';
  if (p.offset != 0.0) os << "offset " << format_double(p.offset) << '\n';
  for (std::size_t i = 0; i < p.n; ++i) {
    if (p.linear[i] != 0.0) os << i << ' ' << i << ' ' << format_double(p.linear[i]) << '\n';
  }
  for (const auto& [ij, c] : p.quadratic) {
    if (c != 0.0) os << ij.first << ' ' << ij.second << ' ' << format_double(c) << '\n';
  }
  return os.str();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

AnyProblem parse_problem(std::string_view text) {
  bool have_header = false;
  bool is_qubo = true;
  bool have_offset = false;
  QuadraticForm form;
  std::set<Edge> seen;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;

    if (toks[0] == "p") {
      if (have_header) throw ParseError(line_no, "duplicate header");
      if (toks.size() != 3) throw ParseError(line_no, "header must be 'p qubo N' or 'p ising N'");
      if (toks[1] == "qubo") {
        is_qubo = true;
      } else if (toks[1] == "ising") {
        is_qubo = false;
      } else {
        throw ParseError(line_no, "unknown problem kind '" + std::string(toks[1]) + "'");
      }
      form = QuadraticForm(parse_index(toks[2], line_no));
      have_header = true;
      continue;
    }
    if (!have_header) throw ParseError(line_no, "entry before 'p' header");

    if (toks[0] == "offset") {
      if (toks.size() != 2) throw ParseError(line_no, "offset line must be 'offset c'");
      if (have_offset) throw ParseError(line_no, "duplicate offset line");
      form.offset = parse_real(toks[1], line_no);
      have_offset = true;
      continue;
    }

    if (toks.size() != 3) throw ParseError(line_no, "expected 'i j c'");
    std::size_t i = parse_index(toks[0], line_no);
    std::size_t j = parse_index(toks[1], line_no);
    double c = parse_real(toks[2], line_no);
    if (i >= form.n || j >= form.n) throw ParseError(line_no, "index out of range for n=" + std::to_string(form.n));
    if (!seen.insert({i, j}).second) throw ParseError(line_no, "duplicate entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
    if (i == j) {
      form.linear[i] += c;
    } else {
      form.add_quadratic(i, j, c);
    }
  }
  if (!have_header) throw ParseError(line_no, "missing 'p' header");

  if (is_qubo) {
    QuboProblem q;
    static_cast<QuadraticForm&>(q) = std::move(form);
    return q;
  }
  IsingProblem q;
  static_cast<QuadraticForm&>(q) = std::move(form);
  return q;
}

std::string serialize_problem(const QuboProblem& p) { return serialize_form(p, "qubo"); }
std::string serialize_problem(const IsingProblem& p) { return serialize_form(p, "ising"); }

std::string serialize_problem(const AnyProblem& p) {
  return std::visit([](const auto& v) { return serialize_problem(v); }, p);
}

AnyProblem read_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

}  // namespace kpp
