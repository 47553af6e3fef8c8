#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tracesift {

// Exact non-negative fractions for scoring. Partial credit produces values
// like 2/3 that must survive aggregation without rounding; denominators stay
// small (products of fragment sizes), so int64 components are ample.
class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(int64_t n) : num_(n), den_(1) {}  // NOLINT(runtime/explicit)
  constexpr Rational(int64_t n, int64_t d) : num_(n), den_(d) { reduce(); }

  constexpr int64_t num() const { return num_; }
  constexpr int64_t den() const { return den_; }

  constexpr Rational operator+(const Rational& o) const {
    return Rational(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
  }
  constexpr Rational operator-(const Rational& o) const {
    return Rational(num_ * o.den_ - o.num_ * den_, den_ * o.den_);
  }
  constexpr Rational operator*(const Rational& o) const {
    return Rational(num_ * o.num_, den_ * o.den_);
  }
  constexpr Rational operator/(const Rational& o) const {
    if (o.num_ == 0) throw std::domain_error("rational division by zero");
    return Rational(num_ * o.den_, den_ * o.num_);
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }

  constexpr bool operator==(const Rational& o) const {
    return num_ == o.num_ && den_ == o.den_;
  }
  constexpr bool operator<(const Rational& o) const {
    return num_ * o.den_ < o.num_ * den_;
  }
  constexpr bool operator>(const Rational& o) const { return o < *this; }
  constexpr bool operator<=(const Rational& o) const { return !(o < *this); }
  constexpr bool operator>=(const Rational& o) const { return !(*this < o); }

  constexpr bool is_zero() const { return num_ == 0; }
  constexpr double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }
  std::string str() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  constexpr void reduce() {
    if (den_ == 0) throw std::domain_error("rational with zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  int64_t num_ = 0;
  int64_t den_ = 1;
};

}  // namespace tracesift
