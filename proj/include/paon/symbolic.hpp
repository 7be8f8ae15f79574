#pragma once

// Exact multivariate polynomials with integer coefficients, used to expand a
// scalar Padé neuron symbolically in its coefficients and input.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace paon {

class Polynomial {
 public:
  using Monomial = std::vector<int>;  // exponent of each variable

  explicit Polynomial(std::size_t variables = 0) : nvars_(variables) {}
  static Polynomial constant(std::size_t variables, std::int64_t c);
  static Polynomial variable(std::size_t variables, std::size_t index);

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  bool operator==(const Polynomial& o) const = default;

  [[nodiscard]] bool is_zero() const { return terms_.empty(); }
  /// Highest exponent of `var` over all terms; -1 for the zero polynomial.
  [[nodiscard]] int degree_in(std::size_t var) const;
  /// Collects the terms with var^power, with var removed.
  [[nodiscard]] Polynomial coefficient(std::size_t var, int power) const;
  [[nodiscard]] const std::map<Monomial, std::int64_t>& terms() const { return terms_; }
  [[nodiscard]] std::string str(const std::vector<std::string>& names) const;

 private:
  void add_term(const Monomial& m, std::int64_t c);
  std::size_t nvars_;
  std::map<Monomial, std::int64_t> terms_;
};

/// Scalar Padé neuron with symbolic coefficients a0..aK, b1..bL and input x,
/// expanded as numerator / denominator polynomials.
struct RationalExpansion {
  std::vector<std::string> names;  // variable names; the last one is x
  Polynomial numerator;
  Polynomial denominator;
  [[nodiscard]] std::size_t x() const { return names.size() - 1; }
};

RationalExpansion expand_smoothed(int K, int L);
RationalExpansion expand_vanilla(int K, int L);

}  // namespace paon
