#pragma once

// Forward-mode dual numbers. A Jet<N> carries a value and its derivative with
// respect to N independent inputs; arithmetic propagates both exactly.

#include <array>
#include <cmath>

namespace besplat {

template <int N>
struct Jet {
  double a = 0.0;
  std::array<double, N> v{};

  Jet() = default;
  Jet(double value) : a(value) {} // NOLINT: implicit lift of constants

  static Jet variable(double value, int index) {
    Jet j(value);
    j.v[index] = 1.0;
    return j;
  }

  Jet& operator+=(const Jet& o) {
    a += o.a;
    for (int i = 0; i < N; ++i) v[i] += o.v[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    a -= o.a;
    for (int i = 0; i < N; ++i) v[i] -= o.v[i];
    return *this;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator-(const Jet& x) {
    Jet r;
    r.a = -x.a;
    for (int i = 0; i < N; ++i) r.v[i] = -x.v[i];
    return r;
  }
  friend Jet operator+(Jet x, const Jet& y) { return x += y; }
  friend Jet operator-(Jet x, const Jet& y) { return x -= y; }
  friend Jet operator*(const Jet& x, const Jet& y) {
    Jet r;
    r.a = x.a * y.a;
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] * y.a + x.a * y.v[i];
    return r;
  }
  friend Jet operator/(const Jet& x, const Jet& y) {
    Jet r;
    const double inv = 1.0 / y.a;
    r.a = x.a * inv;
    for (int i = 0; i < N; ++i) r.v[i] = (x.v[i] - r.a * y.v[i]) * inv;
    return r;
  }
  friend Jet operator+(const Jet& x, double s) { return x + Jet(s); }
  friend Jet operator+(double s, const Jet& x) { return Jet(s) + x; }
  friend Jet operator-(const Jet& x, double s) { return x - Jet(s); }
  friend Jet operator-(double s, const Jet& x) { return Jet(s) - x; }
  friend Jet operator*(const Jet& x, double s) {
    Jet r;
    r.a = x.a * s;
    for (int i = 0; i < N; ++i) r.v[i] = x.v[i] * s;
    return r;
  }
  friend Jet operator*(double s, const Jet& x) { return x * s; }
  friend Jet operator/(const Jet& x, double s) { return x * (1.0 / s); }
  friend Jet operator/(double s, const Jet& x) { return Jet(s) / x; }

  friend bool operator<(const Jet& x, const Jet& y) { return x.a < y.a; }
  friend bool operator>(const Jet& x, const Jet& y) { return x.a > y.a; }
  friend bool operator<=(const Jet& x, const Jet& y) { return x.a <= y.a; }
  friend bool operator>=(const Jet& x, const Jet& y) { return x.a >= y.a; }
};

namespace detail {
template <int N>
Jet<N> chain(const Jet<N>& x, double value, double derivative) {
  Jet<N> r;
  r.a = value;
  for (int i = 0; i < N; ++i) r.v[i] = derivative * x.v[i];
  return r;
}
} // namespace detail

template <int N>
Jet<N> sqrt(const Jet<N>& x) {
  const double s = std::sqrt(x.a);
  return detail::chain(x, s, 0.5 / s);
}
template <int N>
Jet<N> sin(const Jet<N>& x) {
  return detail::chain(x, std::sin(x.a), std::cos(x.a));
}
template <int N>
Jet<N> cos(const Jet<N>& x) {
  return detail::chain(x, std::cos(x.a), -std::sin(x.a));
}
template <int N>
Jet<N> atan2(const Jet<N>& y, const Jet<N>& x) {
  Jet<N> r;
  r.a = std::atan2(y.a, x.a);
  const double d = x.a * x.a + y.a * y.a;
  for (int i = 0; i < N; ++i) r.v[i] = (x.a * y.v[i] - y.a * x.v[i]) / d;
  return r;
}
template <int N>
bool isfinite(const Jet<N>& x) {
  if (!std::isfinite(x.a)) return false;
  for (double d : x.v)
    if (!std::isfinite(d)) return false;
  return true;
}

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Jet<N>& x) {
  return x.a;
}

} // namespace besplat
