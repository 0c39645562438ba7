#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "podminn/benchmarks.hpp"
#include "podminn/vec.hpp"

namespace podminn {

/// Orthonormal basis of the dominant left-singular subspace of a snapshot
/// matrix, with the corresponding singular values. `full_spectrum` keeps the
/// complete set of computed singular values (one per snapshot column) even
/// though only `max_modes` columns are retained.
struct ReducedBasis {
  int dof_count = 0;
  int max_modes = 0;
  std::vector<double> basis_columns;  // column-major, dof_count x max_modes
  Vec singular_values;                // length max_modes, nonincreasing
  Vec full_spectrum;                  // all singular values, nonincreasing

  const double* mode(int i) const {
    return basis_columns.data() + static_cast<std::size_t>(i) * dof_count;
  }
  double* mode(int i) {
    return basis_columns.data() + static_cast<std::size_t>(i) * dof_count;
  }
};

namespace detail {

/// One-sided Jacobi orthogonalization of the columns of a (rows x cols)
/// column-major matrix, in place. On return the columns are mutually
/// orthogonal; their norms are the singular values and the normalized
/// columns the left singular vectors. Pairs are processed in round-robin
/// rounds of disjoint pairs, so rotations within a round commute and the
/// result is independent of thread scheduling. Working on the matrix itself
/// (instead of eigendecomposing the Gram matrix) preserves the relative
/// accuracy of the trailing singular values, which the rank diagnostics of
/// the snapshot sets rely on.
inline void one_sided_jacobi(std::vector<double>& a, int rows, int cols) {
  const double tol = 1e-14;
  const int max_sweeps = 60;

  std::vector<double> sq(cols);
  auto col = [&](int j) { return a.data() + static_cast<std::size_t>(j) * rows; };

  // Round-robin schedule: n-1 rounds of disjoint pairs (circle method).
  const int n_slots = cols % 2 == 0 ? cols : cols + 1;
  std::vector<int> slots(n_slots);
  std::iota(slots.begin(), slots.end(), 0);
  if (n_slots != cols) slots.back() = -1;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_sq = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double* cj = col(j);
      double s = 0.0;
      for (int k = 0; k < rows; ++k) s += cj[k] * cj[k];
      sq[j] = s;
      max_sq = std::max(max_sq, s);
    }
    // Deflation: columns below the retention cutoff (sigma <= 1e-13 sigma_1)
    // carry no resolvable direction. Rotating them against live columns only
    // re-pollutes them with copies of the live directions, which can stall
    // the sweep count on rank-deficient inputs, so they are frozen instead.
    const double floor_sq = max_sq * 1e-26;

    long rotations = 0;
    std::vector<int> order = slots;
    for (int round = 0; round < n_slots - 1; ++round) {
#pragma omp parallel for schedule(dynamic) reduction(+ : rotations)
      for (int i = 0; i < n_slots / 2; ++i) {
        int p = order[i];
        int q = order[n_slots - 1 - i];
        if (p < 0 || q < 0) continue;
        if (p > q) std::swap(p, q);
        if (sq[p] <= floor_sq || sq[q] <= floor_sq) continue;
        double* cp = col(p);
        double* cq = col(q);
        double apq = 0.0;
        for (int k = 0; k < rows; ++k) apq += cp[k] * cq[k];
        if (apq == 0.0 || std::abs(apq) <= tol * std::sqrt(sq[p] * sq[q])) continue;
        const double app = sq[p], aqq = sq[q];
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int k = 0; k < rows; ++k) {
          const double xp = cp[k], xq = cq[k];
          cp[k] = c * xp - s * xq;
          cq[k] = s * xp + c * xq;
        }
        sq[p] = c * c * app - 2.0 * c * s * apq + s * s * aqq;
        sq[q] = s * s * app + 2.0 * c * s * apq + c * c * aqq;
        ++rotations;
      }
      // Rotate the schedule, keeping slot 0 fixed.
      const int last = order[n_slots - 1];
      for (int i = n_slots - 1; i > 1; --i) order[i] = order[i - 1];
      order[1] = last;
    }
    if (rotations == 0) return;
  }
  throw std::runtime_error("one_sided_jacobi: no convergence within sweep cap");
}

}  // namespace detail

/// POD of an arbitrary column-major matrix; `max_modes` bounds the number of
/// retained columns. Modes whose singular value falls below 1e-13 * sigma_1
/// are discarded as numerically meaningless. Retained columns are passed
/// through one round of modified Gram-Schmidt so the orthonormality
/// invariant holds independently of the SVD route.
inline ReducedBasis compute_pod_from_columns(const double* data, int rows, int cols,
                                             int max_modes) {
  if (max_modes < 1 || max_modes > std::min(rows, cols))
    throw std::invalid_argument("compute_pod: max_modes out of range [1, min(N_h, N)]");

  std::vector<double> work(data, data + static_cast<std::size_t>(rows) * cols);
  detail::one_sided_jacobi(work, rows, cols);

  std::vector<double> sigma(cols);
  for (int j = 0; j < cols; ++j) {
    double s = 0.0;
    const double* cj = work.data() + static_cast<std::size_t>(j) * rows;
    for (int k = 0; k < rows; ++k) s += cj[k] * cj[k];
    sigma[j] = std::sqrt(s);
  }
  std::vector<int> perm(cols);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int i, int j) { return sigma[i] > sigma[j]; });

  ReducedBasis basis;
  basis.dof_count = rows;
  basis.full_spectrum.resize(cols);
  for (int j = 0; j < cols; ++j) basis.full_spectrum[j] = sigma[perm[j]];

  const double sigma1 = basis.full_spectrum[0];
  if (!(sigma1 > 0.0))
    throw std::runtime_error("compute_pod: snapshot matrix is numerically zero");

  int kept = 0;
  while (kept < max_modes && basis.full_spectrum[kept] > 1e-13 * sigma1) ++kept;
  basis.max_modes = kept;
  basis.singular_values.assign(basis.full_spectrum.begin(), basis.full_spectrum.begin() + kept);
  basis.basis_columns.resize(static_cast<std::size_t>(rows) * kept);
  for (int j = 0; j < kept; ++j) {
    const double* cj = work.data() + static_cast<std::size_t>(perm[j]) * rows;
    double* uj = basis.mode(j);
    const double inv = 1.0 / sigma[perm[j]];
    for (int k = 0; k < rows; ++k) uj[k] = cj[k] * inv;
  }

  // Modified Gram-Schmidt re-orthonormalization of the kept columns.
  for (int j = 0; j < kept; ++j) {
    double* uj = basis.mode(j);
    for (int i = 0; i < j; ++i) {
      const double* ui = basis.mode(i);
      double proj = 0.0;
      for (int k = 0; k < rows; ++k) proj += ui[k] * uj[k];
      for (int k = 0; k < rows; ++k) uj[k] -= proj * ui[k];
    }
    double nrm = 0.0;
    for (int k = 0; k < rows; ++k) nrm += uj[k] * uj[k];
    nrm = std::sqrt(nrm);
    if (!(nrm > 0.0)) throw std::runtime_error("compute_pod: basis column collapsed");
    const double inv = 1.0 / nrm;
    for (int k = 0; k < rows; ++k) uj[k] *= inv;
  }
  return basis;
}

inline ReducedBasis compute_pod(const SnapshotMatrix& snapshots, int max_modes) {
  return compute_pod_from_columns(snapshots.columns.data(), snapshots.dof_count,
                                  snapshots.sample_count, max_modes);
}

/// POD of a column subset (used to build the basis from training columns).
inline ReducedBasis compute_pod_subset(const SnapshotMatrix& snapshots,
                                       const std::vector<int>& column_indices, int max_modes) {
  std::vector<double> sub(static_cast<std::size_t>(snapshots.dof_count) * column_indices.size());
  for (std::size_t j = 0; j < column_indices.size(); ++j)
    std::copy(snapshots.column(column_indices[j]),
              snapshots.column(column_indices[j]) + snapshots.dof_count,
              sub.begin() + j * snapshots.dof_count);
  return compute_pod_from_columns(sub.data(), snapshots.dof_count,
                                  static_cast<int>(column_indices.size()), max_modes);
}

/// Coefficients of u in the first n_rb modes: V^T u.
inline Vec project(const ReducedBasis& basis, int n_rb, const Vec& u) {
  if (n_rb < 0 || n_rb > basis.max_modes)
    throw std::invalid_argument("project: n_rb exceeds the retained mode count");
  if (static_cast<int>(u.size()) != basis.dof_count)
    throw std::invalid_argument("project: vector length != dof_count");
  Vec coeffs(n_rb);
  for (int j = 0; j < n_rb; ++j) {
    const double* vj = basis.mode(j);
    double s = 0.0;
    for (int k = 0; k < basis.dof_count; ++k) s += vj[k] * u[k];
    coeffs[j] = s;
  }
  return coeffs;
}

/// Expansion over the first coeffs.size() modes: V * coeffs.
inline Vec reconstruct(const ReducedBasis& basis, const Vec& coeffs) {
  if (static_cast<int>(coeffs.size()) > basis.max_modes)
    throw std::invalid_argument("reconstruct: too many coefficients");
  Vec u(basis.dof_count, 0.0);
  for (std::size_t j = 0; j < coeffs.size(); ++j) {
    const double* vj = basis.mode(static_cast<int>(j));
    const double c = coeffs[j];
    for (int k = 0; k < basis.dof_count; ++k) u[k] += c * vj[k];
  }
  return u;
}

/// Relative projection error || (I - V V^T) u ||_p / || u ||_p with V
/// truncated to its first n_rb columns.
inline double projection_error(const ReducedBasis& basis, int n_rb, const Vec& u, Norm p) {
  const double denom = norm(u, p);
  if (denom == 0.0) throw std::invalid_argument("projection_error: zero-norm input");
  const Vec coeffs = project(basis, n_rb, u);
  Vec residual = u;
  for (int j = 0; j < n_rb; ++j) {
    const double* vj = basis.mode(j);
    const double c = coeffs[j];
    for (int k = 0; k < basis.dof_count; ++k) residual[k] -= c * vj[k];
  }
  return norm(residual, p) / denom;
}

}  // namespace podminn
