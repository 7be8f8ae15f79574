#include <gtest/gtest.h>

#include <cmath>

#include "paon/data.hpp"
#include "paon/random.hpp"
#include "paon/symbolic.hpp"

using namespace paon;

namespace {

double evaluate(const Polynomial& p, const std::vector<double>& at) {
  double s = 0;
  for (const auto& [m, c] : p.terms()) {
    double t = double(c);
    for (std::size_t i = 0; i < m.size(); ++i) t *= std::pow(at[i], m[i]);
    s += t;
  }
  return s;
}

}  // namespace

TEST(Polynomial, ArithmeticAndCoefficients) {
  const auto x = Polynomial::variable(2, 0), y = Polynomial::variable(2, 1);
  const auto one = Polynomial::constant(2, 1);
  const auto p = (x + one) * (x + one) * y;  // x^2 y + 2 x y + y
  EXPECT_EQ(p.degree_in(0), 2);
  EXPECT_EQ(p.degree_in(1), 1);
  EXPECT_EQ(p.coefficient(0, 1), Polynomial::constant(2, 2) * y);
  EXPECT_EQ(Polynomial(2).degree_in(0), -1);
  EXPECT_TRUE((x + Polynomial::constant(2, -1) * x).is_zero());
  EXPECT_EQ(p.str({"x", "y"}), "x^2y + 2xy + y");
}

TEST(Polynomial, OverflowIsDetected) {
  auto big = Polynomial::constant(1, std::int64_t{1} << 40);
  EXPECT_THROW(big * big, Error);
}

TEST(Expansion, SmoothedOneOneByHand) {
  const auto r = expand_smoothed(1, 1);
  ASSERT_EQ(r.names, (std::vector<std::string>{"a0", "a1", "b1", "x"}));
  const auto a0 = Polynomial::variable(4, 0), a1 = Polynomial::variable(4, 1);
  const auto b1 = Polynomial::variable(4, 2), x = Polynomial::variable(4, 3);
  const auto one = Polynomial::constant(4, 1);
  const auto q = one + b1 * x;
  EXPECT_EQ(r.numerator, q * (a0 + a1 * x) + a0);
  EXPECT_EQ(r.denominator, q * q + one);
}

TEST(Expansion, SmoothedDegreesInInput) {
  for (auto [K, L] : {std::pair{1, 1}, {2, 1}, {2, 2}}) {
    const auto r = expand_smoothed(K, L);
    EXPECT_EQ(r.numerator.degree_in(r.x()), K + L) << K << "/" << L;
    EXPECT_EQ(r.denominator.degree_in(r.x()), 2 * L) << K << "/" << L;
    // Leading coefficients: aK bL and bL^2.
    const auto aK = Polynomial::variable(r.names.size(), static_cast<std::size_t>(K));
    const auto bL = Polynomial::variable(r.names.size(), static_cast<std::size_t>(K + L));
    EXPECT_EQ(r.numerator.coefficient(r.x(), K + L), aK * bL);
    EXPECT_EQ(r.denominator.coefficient(r.x(), 2 * L), bL * bL);
  }
}

TEST(Expansion, VanillaDegrees) {
  for (auto [K, L] : {std::pair{1, 1}, {2, 1}, {2, 2}, {3, 0}}) {
    const auto r = expand_vanilla(K, L);
    EXPECT_EQ(r.numerator.degree_in(r.x()), K);
    EXPECT_EQ(r.denominator.degree_in(r.x()), L);
  }
}

TEST(Expansion, AgreesWithNumericNeuron) {
  Rng rng(1);
  for (auto [K, L] : {std::pair{1, 1}, {2, 1}, {2, 2}, {1, 2}, {3, 0}}) {
    const auto r = expand_smoothed(K, L);
    for (int trial = 0; trial < 20; ++trial) {
      ScalarPaon f;
      f.a.resize(std::size_t(K) + 1);
      f.b.resize(std::size_t(L));
      std::vector<double> at;
      for (auto& v : f.a) at.push_back(v = rng.uniform(-2, 2));
      for (auto& v : f.b) at.push_back(v = rng.uniform(-2, 2));
      const double xv = rng.uniform(-2, 2);
      at.push_back(xv);
      EXPECT_NEAR(evaluate(r.numerator, at) / evaluate(r.denominator, at), f(xv), 1e-9);
    }
  }
}
