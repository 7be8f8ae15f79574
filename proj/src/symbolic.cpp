#include "paon/symbolic.hpp"

#include <sstream>
#include <stdexcept>

#include "paon/tensor.hpp"

namespace paon {

Polynomial Polynomial::constant(std::size_t variables, std::int64_t c) {
  Polynomial p(variables);
  p.add_term(Monomial(variables, 0), c);
  return p;
}

Polynomial Polynomial::variable(std::size_t variables, std::size_t index) {
  if (index >= variables) throw Error("Polynomial::variable: index out of range");
  Polynomial p(variables);
  Monomial m(variables, 0);
  m[index] = 1;
  p.add_term(m, 1);
  return p;
}

void Polynomial::add_term(const Monomial& m, std::int64_t c) {
  if (c == 0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    if (__builtin_add_overflow(it->second, c, &it->second)) throw Error("Polynomial: coefficient overflow");
    if (it->second == 0) terms_.erase(it);
  }
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  if (o.nvars_ != nvars_) throw Error("Polynomial: variable count mismatch");
  Polynomial r = *this;
  for (const auto& [m, c] : o.terms_) r.add_term(m, c);
  return r;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
  if (o.nvars_ != nvars_) throw Error("Polynomial: variable count mismatch");
  Polynomial r(nvars_);
  for (const auto& [ma, ca] : terms_)
    for (const auto& [mb, cb] : o.terms_) {
      Monomial m(nvars_);
      for (std::size_t i = 0; i < nvars_; ++i) m[i] = ma[i] + mb[i];
      std::int64_t c;
      if (__builtin_mul_overflow(ca, cb, &c)) throw Error("Polynomial: coefficient overflow");
      r.add_term(m, c);
    }
  return r;
}

int Polynomial::degree_in(std::size_t var) const {
  int d = -1;
  for (const auto& [m, c] : terms_) d = std::max(d, m.at(var));
  return d;
}

Polynomial Polynomial::coefficient(std::size_t var, int power) const {
  Polynomial r(nvars_);
  for (const auto& [m, c] : terms_) {
    if (m.at(var) != power) continue;
    Monomial mm = m;
    mm[var] = 0;
    r.add_term(mm, c);
  }
  return r;
}

std::string Polynomial::str(const std::vector<std::string>& names) const {
  if (terms_.empty()) return "0";
  std::ostringstream out;
  bool first = true;
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const auto& [m, c] = *it;
    if (!first) out << (c < 0 ? " - " : " + ");
    else if (c < 0) out << "-";
    first = false;
    const std::int64_t a = c < 0 ? -c : c;
    bool any = false;
    for (std::size_t i = 0; i < nvars_; ++i) any |= m[i] != 0;
    if (a != 1 || !any) out << a;
    for (std::size_t i = 0; i < nvars_; ++i) {
      if (m[i] == 0) continue;
      out << names.at(i);
      if (m[i] > 1) out << '^' << m[i];
    }
  }
  return out.str();
}

namespace {

struct Symbols {
  std::vector<std::string> names;
  std::vector<Polynomial> P;  // P[k] = a0 + ... + ak x^k
  std::vector<Polynomial> Q;  // Q[l] = 1 + b1 x + ... + bl x^l
};

Symbols build(int K, int L) {
  if (K < 0 || L < 0 || K + L < 1) throw Error("expand: invalid degree");
  Symbols s;
  for (int k = 0; k <= K; ++k) s.names.push_back("a" + std::to_string(k));
  for (int l = 1; l <= L; ++l) s.names.push_back("b" + std::to_string(l));
  s.names.push_back("x");
  const std::size_t n = s.names.size(), x = n - 1;
  const auto X = Polynomial::variable(n, x);
  Polynomial xp = Polynomial::constant(n, 1);
  for (int k = 0; k <= K; ++k) {
    const auto term = Polynomial::variable(n, static_cast<std::size_t>(k)) * xp;
    s.P.push_back(k ? s.P.back() + term : term);
    xp = xp * X;
  }
  s.Q.push_back(Polynomial::constant(n, 1));
  xp = X;
  for (int l = 1; l <= L; ++l) {
    s.Q.push_back(s.Q.back() + Polynomial::variable(n, static_cast<std::size_t>(K + l)) * xp);
    xp = xp * X;
  }
  return s;
}

}  // namespace

RationalExpansion expand_smoothed(int K, int L) {
  auto s = build(K, L);
  const std::size_t n = s.names.size();
  RationalExpansion r{s.names, Polynomial(n), Polynomial(n)};
  if (L == 0) {
    r.numerator = s.P[K];
    r.denominator = Polynomial::constant(n, 1);
    return r;
  }
  r.numerator = s.Q[L] * s.P[K];
  if (K >= 1) r.numerator = r.numerator + s.Q[L - 1] * s.P[K - 1];
  r.denominator = s.Q[L] * s.Q[L] + s.Q[L - 1] * s.Q[L - 1];
  return r;
}

RationalExpansion expand_vanilla(int K, int L) {
  auto s = build(K, L);
  return RationalExpansion{s.names, s.P[K], s.Q[L]};
}

}  // namespace paon
