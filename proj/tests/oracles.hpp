// Test-only reference implementations, kept deliberately naive and separate
// from the library code paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "podminn/benchmarks.hpp"
#include "podminn/fem.hpp"
#include "podminn/mesh.hpp"
#include "podminn/minn.hpp"

namespace oracles {

using podminn::Vec;

// --- dense P1 assembly from first principles --------------------------------

struct DenseMatrix {
  int n = 0;
  std::vector<double> a;  // row-major
  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

inline DenseMatrix dense_stiffness_full(const podminn::StructuredTriMesh& mesh) {
  DenseMatrix m{mesh.node_count(), {}};
  m.a.assign(static_cast<std::size_t>(m.n) * m.n, 0.0);
  for (const auto& tri : mesh.triangles) {
    const podminn::Point2 p0 = mesh.nodes[tri[0]], p1 = mesh.nodes[tri[1]],
                          p2 = mesh.nodes[tri[2]];
    const double two_area = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    // Gradients of the barycentric basis on this triangle.
    const double gx[3] = {(p1.y - p2.y) / two_area, (p2.y - p0.y) / two_area,
                          (p0.y - p1.y) / two_area};
    const double gy[3] = {(p2.x - p1.x) / two_area, (p0.x - p2.x) / two_area,
                          (p1.x - p0.x) / two_area};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        m.at(tri[a], tri[b]) += (gx[a] * gx[b] + gy[a] * gy[b]) * std::abs(two_area) / 2.0;
  }
  return m;
}

inline DenseMatrix dense_mass_full(const podminn::StructuredTriMesh& mesh) {
  DenseMatrix m{mesh.node_count(), {}};
  m.a.assign(static_cast<std::size_t>(m.n) * m.n, 0.0);
  for (const auto& tri : mesh.triangles) {
    const podminn::Point2 p0 = mesh.nodes[tri[0]], p1 = mesh.nodes[tri[1]],
                          p2 = mesh.nodes[tri[2]];
    const double area =
        std::abs((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y)) / 2.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) m.at(tri[a], tri[b]) += area / 12.0 * (a == b ? 2.0 : 1.0);
  }
  return m;
}

// --- brute-force trigonometric expansions ------------------------------------

/// All 144 products of the 12 x-terms and 12 y-terms, summed one by one.
inline double forcing_continuous_bruteforce(const podminn::ParamsContinuousScales& p, double x,
                                            double y) {
  const double pi = std::numbers::pi;
  double f = 0.0;
  for (int k = 1; k <= 6; ++k)
    for (int l = 1; l <= 6; ++l) {
      f += p.alpha_x[k - 1] * p.alpha_y[l - 1] * std::sin(k * pi * x) * std::sin(l * pi * y);
      f += p.alpha_x[k - 1] * p.beta_y[l - 1] * std::sin(k * pi * x) * std::cos(l * pi * y);
      f += p.beta_x[k - 1] * p.alpha_y[l - 1] * std::cos(k * pi * x) * std::sin(l * pi * y);
      f += p.beta_x[k - 1] * p.beta_y[l - 1] * std::cos(k * pi * x) * std::cos(l * pi * y);
    }
  return f;
}

/// All 16 low-frequency plus 64 high-frequency products.
inline double forcing_separated_bruteforce(const podminn::ParamsScaleSeparation& p, double x,
                                           double y) {
  const double pi = std::numbers::pi;
  double f = 0.0;
  for (int k = 1; k <= 2; ++k)
    for (int l = 1; l <= 2; ++l) {
      f += p.alpha_low_x[k - 1] * p.alpha_low_y[l - 1] * std::sin(k * pi * x) * std::sin(l * pi * y);
      f += p.alpha_low_x[k - 1] * p.beta_low_y[l - 1] * std::sin(k * pi * x) * std::cos(l * pi * y);
      f += p.beta_low_x[k - 1] * p.alpha_low_y[l - 1] * std::cos(k * pi * x) * std::sin(l * pi * y);
      f += p.beta_low_x[k - 1] * p.beta_low_y[l - 1] * std::cos(k * pi * x) * std::cos(l * pi * y);
    }
  for (int k = 5; k <= 8; ++k)
    for (int l = 5; l <= 8; ++l) {
      f += p.alpha_high_x[k - 5] * p.alpha_high_y[l - 5] * std::sin(k * pi * x) * std::sin(l * pi * y);
      f += p.alpha_high_x[k - 5] * p.beta_high_y[l - 5] * std::sin(k * pi * x) * std::cos(l * pi * y);
      f += p.beta_high_x[k - 5] * p.alpha_high_y[l - 5] * std::cos(k * pi * x) * std::sin(l * pi * y);
      f += p.beta_high_x[k - 5] * p.beta_high_y[l - 5] * std::cos(k * pi * x) * std::cos(l * pi * y);
    }
  return f;
}

// --- singular values via Gram matrix + cyclic Jacobi eigensolver -------------

/// Independent SVD route for small matrices: eigendecompose S^T S with a
/// two-sided cyclic Jacobi sweep and take square roots.
inline std::vector<double> singular_values_gram_jacobi(const std::vector<double>& columns,
                                                       int rows, int cols) {
  std::vector<double> g(static_cast<std::size_t>(cols) * cols);
  for (int i = 0; i < cols; ++i)
    for (int j = 0; j < cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < rows; ++k)
        s += columns[static_cast<std::size_t>(i) * rows + k] *
             columns[static_cast<std::size_t>(j) * rows + k];
      g[static_cast<std::size_t>(i) * cols + j] = s;
    }
  auto at = [&](int i, int j) -> double& { return g[static_cast<std::size_t>(i) * cols + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, fro = 0.0;
    for (int i = 0; i < cols; ++i)
      for (int j = 0; j < cols; ++j) {
        fro += at(i, j) * at(i, j);
        if (i != j) off += at(i, j) * at(i, j);
      }
    if (std::sqrt(off) <= 1e-15 * std::sqrt(fro)) break;
    for (int p = 0; p < cols; ++p)
      for (int q = p + 1; q < cols; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (int k = 0; k < cols; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < cols; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> sv(cols);
  for (int i = 0; i < cols; ++i) sv[i] = std::sqrt(std::max(0.0, at(i, i)));
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

// --- finite differences -------------------------------------------------------

/// Central difference of a scalar function along a direction, step 1e-5.
inline double directional_derivative_fd(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& theta,
                                        const std::vector<double>& direction, double h = 1e-5) {
  std::vector<double> plus = theta, minus = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += h * direction[i];
    minus[i] -= h * direction[i];
  }
  return (f(plus) - f(minus)) / (2.0 * h);
}

// --- naive dense network evaluation ------------------------------------------

/// Re-evaluates a network by materializing every layer as a dense matrix.
inline Vec dense_network_eval(const podminn::Network& net, const Vec& x) {
  Vec a = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    std::vector<double> w(static_cast<std::size_t>(layer.out_dim) * layer.in_dim, 0.0);
    const double* params = net.weights(static_cast<int>(l));
    if (layer.kind == podminn::Layer::Kind::dense) {
      std::copy(params, params + w.size(), w.begin());
    } else {
      for (int i = 0; i < layer.out_dim; ++i)
        for (int p = layer.pattern.row_ptr[i]; p < layer.pattern.row_ptr[i + 1]; ++p)
          w[static_cast<std::size_t>(i) * layer.in_dim + layer.pattern.col_idx[p]] = params[p];
    }
    Vec z(layer.out_dim);
    for (int i = 0; i < layer.out_dim; ++i) {
      double s = net.bias(static_cast<int>(l))[i];
      for (int j = 0; j < layer.in_dim; ++j)
        s += w[static_cast<std::size_t>(i) * layer.in_dim + j] * a[j];
      z[i] = podminn::apply_activation(layer.activation, layer.activation_scale, s);
    }
    a = std::move(z);
  }
  return a;
}

/// Exhaustive pairwise-distance enumeration of a sparsity pattern.
inline std::vector<std::pair<int, int>> bruteforce_pattern(
    const std::vector<podminn::Point2>& input_coords,
    const std::vector<podminn::Point2>& output_coords, double r) {
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < output_coords.size(); ++i)
    for (std::size_t j = 0; j < input_coords.size(); ++j) {
      const double dx = input_coords[j].x - output_coords[i].x;
      const double dy = input_coords[j].y - output_coords[i].y;
      if (dx * dx + dy * dy <= r * r)
        pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  return pairs;
}

}  // namespace oracles
