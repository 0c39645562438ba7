#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "podminn/mesh.hpp"
#include "podminn/vec.hpp"

namespace podminn {

/// Piecewise-linear Lagrangian FE space on a structured mesh. Degrees of
/// freedom are the nodal values, boundary nodes included; interior nodes
/// additionally carry a compact index used by the Dirichlet-restricted
/// operators.
struct P1Space {
  StructuredTriMesh mesh;
  int dof_count = 0;
  std::vector<int> interior_index;  // node -> interior index, -1 on the boundary
  std::vector<int> interior_nodes;  // interior index -> node

  int interior_count() const { return static_cast<int>(interior_nodes.size()); }
};

inline P1Space make_p1_space(StructuredTriMesh mesh) {
  P1Space space;
  space.dof_count = mesh.node_count();
  space.interior_index.assign(space.dof_count, -1);
  for (int i = 0; i < space.dof_count; ++i) {
    if (!mesh.boundary_mask[i]) {
      space.interior_index[i] = static_cast<int>(space.interior_nodes.size());
      space.interior_nodes.push_back(i);
    }
  }
  space.mesh = std::move(mesh);
  return space;
}

/// Symmetric sparse matrix in CSR storage (both triangles stored).
struct SparseSymmetricMatrix {
  int dimension = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<double> values;

  void multiply(const double* x, double* y) const {
    for (int i = 0; i < dimension; ++i) {
      double s = 0.0;
      for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += values[p] * x[col_idx[p]];
      y[i] = s;
    }
  }

  Vec multiply(const Vec& x) const {
    Vec y(dimension);
    multiply(x.data(), y.data());
    return y;
  }

  double entry(int i, int j) const {
    for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
      if (col_idx[p] == j) return values[p];
    return 0.0;
  }
};

namespace detail {

struct Triplet {
  int row;
  int col;
  double value;
};

inline SparseSymmetricMatrix csr_from_triplets(int dimension, std::vector<Triplet> triplets) {
  // Stable sort keeps the element-order accumulation deterministic.
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseSymmetricMatrix m;
  m.dimension = dimension;
  m.row_ptr.assign(dimension + 1, 0);
  for (std::size_t k = 0; k < triplets.size();) {
    std::size_t j = k;
    double s = 0.0;
    while (j < triplets.size() && triplets[j].row == triplets[k].row &&
           triplets[j].col == triplets[k].col) {
      s += triplets[j].value;
      ++j;
    }
    m.col_idx.push_back(triplets[k].col);
    m.values.push_back(s);
    ++m.row_ptr[triplets[k].row + 1];
    k = j;
  }
  for (int i = 0; i < dimension; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

/// Exact P1 element integrals on one triangle: grad(phi_a).grad(phi_b)*|T|
/// (gradients are constant per element, so no quadrature is involved).
inline void local_stiffness(const StructuredTriMesh& mesh, int t, double k[3][3]) {
  const auto& tri = mesh.triangles[t];
  const Point2 p[3] = {mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]};
  const double area = triangle_signed_area(mesh, t);
  double bg[3], cg[3];
  for (int a = 0; a < 3; ++a) {
    const int a1 = (a + 1) % 3, a2 = (a + 2) % 3;
    bg[a] = p[a1].y - p[a2].y;
    cg[a] = p[a2].x - p[a1].x;
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) k[a][b] = (bg[a] * bg[b] + cg[a] * cg[b]) / (4.0 * area);
}

}  // namespace detail

/// Stiffness matrix of -Laplace restricted to interior DOFs (homogeneous
/// Dirichlet conditions eliminate the boundary rows and columns).
inline SparseSymmetricMatrix assemble_stiffness(const P1Space& space) {
  std::vector<detail::Triplet> triplets;
  triplets.reserve(9u * space.mesh.triangles.size());
  for (std::size_t t = 0; t < space.mesh.triangles.size(); ++t) {
    double k[3][3];
    detail::local_stiffness(space.mesh, static_cast<int>(t), k);
    const auto& tri = space.mesh.triangles[t];
    for (int a = 0; a < 3; ++a) {
      const int ia = space.interior_index[tri[a]];
      if (ia < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const int ib = space.interior_index[tri[b]];
        if (ib < 0) continue;
        triplets.push_back({ia, ib, k[a][b]});
      }
    }
  }
  return detail::csr_from_triplets(space.interior_count(), std::move(triplets));
}

/// Stiffness matrix over all nodes, boundary included (no condition applied).
inline SparseSymmetricMatrix assemble_stiffness_full(const P1Space& space) {
  std::vector<detail::Triplet> triplets;
  triplets.reserve(9u * space.mesh.triangles.size());
  for (std::size_t t = 0; t < space.mesh.triangles.size(); ++t) {
    double k[3][3];
    detail::local_stiffness(space.mesh, static_cast<int>(t), k);
    const auto& tri = space.mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) triplets.push_back({tri[a], tri[b], k[a][b]});
  }
  return detail::csr_from_triplets(space.dof_count, std::move(triplets));
}

/// Consistent P1 mass matrix over all nodes: M_ab = integral(phi_a*phi_b)
/// = |T|/12 * (1 + delta_ab) summed over elements.
inline SparseSymmetricMatrix assemble_mass(const P1Space& space) {
  std::vector<detail::Triplet> triplets;
  triplets.reserve(9u * space.mesh.triangles.size());
  for (std::size_t t = 0; t < space.mesh.triangles.size(); ++t) {
    const double area = triangle_signed_area(space.mesh, static_cast<int>(t));
    const auto& tri = space.mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        triplets.push_back({tri[a], tri[b], area / 12.0 * (a == b ? 2.0 : 1.0)});
  }
  return detail::csr_from_triplets(space.dof_count, std::move(triplets));
}

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Solves -Laplace(u) = f with homogeneous Dirichlet conditions. The forcing
/// is given by its nodal values; the load vector is M*f (nodal interpolation
/// against the consistent mass matrix). Returns the full nodal solution with
/// boundary entries exactly zero. The interior SPD system is solved with
/// Jacobi-preconditioned conjugate gradients to a true relative residual of
/// 1e-12, capped at 10*n_interior iterations.
inline Vec solve_poisson(const P1Space& space, const Vec& forcing_nodal,
                         const SparseSymmetricMatrix* stiffness_interior = nullptr,
                         const SparseSymmetricMatrix* mass_full = nullptr) {
  if (static_cast<int>(forcing_nodal.size()) != space.dof_count)
    throw std::invalid_argument("solve_poisson: forcing length != dof_count");

  SparseSymmetricMatrix a_local, m_local;
  if (!stiffness_interior) {
    a_local = assemble_stiffness(space);
    stiffness_interior = &a_local;
  }
  if (!mass_full) {
    m_local = assemble_mass(space);
    mass_full = &m_local;
  }
  const auto& A = *stiffness_interior;
  const int n = space.interior_count();

  const Vec mf = mass_full->multiply(forcing_nodal);
  Vec b(n);
  for (int i = 0; i < n; ++i) b[i] = mf[space.interior_nodes[i]];

  Vec u_full(space.dof_count, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) return u_full;

  Vec diag_inv(n);
  for (int i = 0; i < n; ++i) {
    const double d = A.entry(i, i);
    if (d <= 0.0) throw SolverFailure("solve_poisson: nonpositive diagonal entry");
    diag_inv[i] = 1.0 / d;
  }

  const double tol = 1e-12;
  const int max_iters = 10 * n;
  Vec x(n, 0.0), r = b, z(n), p(n), ap(n);
  for (int i = 0; i < n; ++i) z[i] = diag_inv[i] * r[i];
  p = z;
  double rz = dot(r, z);

  for (int iter = 0; iter < max_iters; ++iter) {
    A.multiply(p.data(), ap.data());
    const double pap = dot(p, ap);
    if (pap <= 0.0) throw SolverFailure("solve_poisson: lost positive definiteness in CG");
    const double alpha = rz / pap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    if (norm2(r) <= tol * bnorm) {
      // Guard against recurrence drift: accept only a true residual.
      A.multiply(x.data(), ap.data());
      for (int i = 0; i < n; ++i) r[i] = b[i] - ap[i];
      if (norm2(r) <= tol * bnorm) {
        for (int i = 0; i < n; ++i) u_full[space.interior_nodes[i]] = x[i];
        return u_full;
      }
    }
    for (int i = 0; i < n; ++i) z[i] = diag_inv[i] * r[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverFailure("solve_poisson: CG did not converge within " +
                      std::to_string(max_iters) + " iterations");
}

}  // namespace podminn
