#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace podminn {

using Vec = std::vector<double>;

/// Norm selector for the error metrics (p = 2 or p = inf).
enum class Norm { two, inf };

inline std::string norm_name(Norm p) { return p == Norm::two ? "2" : "inf"; }

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm(const Vec& a, Norm p) {
  return p == Norm::two ? norm2(a) : norm_inf(a);
}

/// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& x, double alpha) {
  for (double& v : x) v *= alpha;
}

}  // namespace podminn
