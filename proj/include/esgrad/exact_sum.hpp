#pragma once

#include <cmath>
#include <vector>

namespace esgrad {

/// Error-free floating-point accumulator (Shewchuk expansions, as in Python's
/// math.fsum). The stored partials represent the running sum exactly; value()
/// rounds once, correctly. Two accumulators holding the same exact real
/// therefore round to the same double no matter how the terms were grouped.
///
/// All inputs must be finite.
class ExactSum {
 public:
  ExactSum() = default;
  explicit ExactSum(double x) { add(x); }

  void add(double x) {
    std::size_t kept = 0;
    for (double y : partials_) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[kept++] = lo;
      x = hi;
    }
    partials_.resize(kept);
    partials_.push_back(x);
  }

  // Adds a*b without rounding the product.
  void add_product(double a, double b) {
    const double p = a * b;
    const double e = std::fma(a, b, -p);
    add(p);
    if (e != 0.0) add(e);
  }

  // Adds scale * other exactly.
  void add_scaled(const ExactSum& other, double scale) {
    for (double y : other.partials_) add_product(scale, y);
  }

  void merge(const ExactSum& other) {
    for (double y : other.partials_) add(y);
  }

  ExactSum& operator+=(double x) {
    add(x);
    return *this;
  }
  ExactSum& operator+=(const ExactSum& other) {
    merge(other);
    return *this;
  }

  [[nodiscard]] double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction when the remainder sits exactly on a tie.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

  [[nodiscard]] const std::vector<double>& partials() const { return partials_; }

 private:
  std::vector<double> partials_;
};

}  // namespace esgrad
