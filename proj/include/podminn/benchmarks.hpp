#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "podminn/fem.hpp"
#include "podminn/mesh.hpp"
#include "podminn/rng.hpp"

namespace podminn {

enum class BenchmarkId : int { continuous_scales = 1, scale_separation = 2 };

inline BenchmarkId benchmark_from_int(int id) {
  if (id == 1) return BenchmarkId::continuous_scales;
  if (id == 2) return BenchmarkId::scale_separation;
  throw std::invalid_argument("benchmark id must be 1 or 2");
}

/// Forcing family 1: f(x,y) = p(x)*p(y) with
/// p(z) = sum_{k=1..6} (alpha_k sin(k pi z) + beta_k cos(k pi z))
/// and independent coefficient sets for the x and y factors (24 in total).
struct ParamsContinuousScales {
  std::array<double, 6> alpha_x{}, beta_x{}, alpha_y{}, beta_y{};
};

/// Forcing family 2: f(x,y) = pl(x)*pl(y) + ph(x)*ph(y) with the low factor
/// summing frequencies k in {1,2} (8 coefficients) and the high factor
/// frequencies k in {5..8} (16 coefficients).
struct ParamsScaleSeparation {
  std::array<double, 2> alpha_low_x{}, beta_low_x{}, alpha_low_y{}, beta_low_y{};
  std::array<double, 4> alpha_high_x{}, beta_high_x{}, alpha_high_y{}, beta_high_y{};
};

/// Flat 24-coefficient record, in the documented order:
///   benchmark 1: alpha_x[6], beta_x[6], alpha_y[6], beta_y[6]
///   benchmark 2: alpha_low_x[2], beta_low_x[2], alpha_low_y[2], beta_low_y[2],
///                alpha_high_x[4], beta_high_x[4], alpha_high_y[4], beta_high_y[4]
using ParamRecord = std::array<double, 24>;

inline ParamsContinuousScales params_continuous_from_record(const ParamRecord& r) {
  ParamsContinuousScales p;
  for (int k = 0; k < 6; ++k) {
    p.alpha_x[k] = r[k];
    p.beta_x[k] = r[6 + k];
    p.alpha_y[k] = r[12 + k];
    p.beta_y[k] = r[18 + k];
  }
  return p;
}

inline ParamsScaleSeparation params_separated_from_record(const ParamRecord& r) {
  ParamsScaleSeparation p;
  for (int k = 0; k < 2; ++k) {
    p.alpha_low_x[k] = r[k];
    p.beta_low_x[k] = r[2 + k];
    p.alpha_low_y[k] = r[4 + k];
    p.beta_low_y[k] = r[6 + k];
  }
  for (int k = 0; k < 4; ++k) {
    p.alpha_high_x[k] = r[8 + k];
    p.beta_high_x[k] = r[12 + k];
    p.alpha_high_y[k] = r[16 + k];
    p.beta_high_y[k] = r[20 + k];
  }
  return p;
}

namespace detail {

template <std::size_t N>
inline double trig_sum(const std::array<double, N>& alpha, const std::array<double, N>& beta,
                       int k_first, double z) {
  double s = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    const double kz = (k_first + static_cast<int>(j)) * std::numbers::pi * z;
    s += alpha[j] * std::sin(kz) + beta[j] * std::cos(kz);
  }
  return s;
}

}  // namespace detail

inline Vec forcing_continuous(const ParamsContinuousScales& params,
                              const std::vector<Point2>& points) {
  Vec f(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double px = detail::trig_sum(params.alpha_x, params.beta_x, 1, points[i].x);
    const double py = detail::trig_sum(params.alpha_y, params.beta_y, 1, points[i].y);
    f[i] = px * py;
  }
  return f;
}

inline Vec forcing_separated(const ParamsScaleSeparation& params,
                             const std::vector<Point2>& points) {
  Vec f(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double plx = detail::trig_sum(params.alpha_low_x, params.beta_low_x, 1, points[i].x);
    const double ply = detail::trig_sum(params.alpha_low_y, params.beta_low_y, 1, points[i].y);
    const double phx = detail::trig_sum(params.alpha_high_x, params.beta_high_x, 5, points[i].x);
    const double phy = detail::trig_sum(params.alpha_high_y, params.beta_high_y, 5, points[i].y);
    f[i] = plx * ply + phx * phy;
  }
  return f;
}

inline Vec forcing_from_record(BenchmarkId benchmark, const ParamRecord& record,
                               const std::vector<Point2>& points) {
  if (benchmark == BenchmarkId::continuous_scales)
    return forcing_continuous(params_continuous_from_record(record), points);
  return forcing_separated(params_separated_from_record(record), points);
}

/// Draws `count` parameter records, every coefficient independent U[-1,1),
/// in record order. Deterministic for a given seed.
inline std::vector<ParamRecord> sample_params(BenchmarkId benchmark, std::uint64_t rng_seed,
                                              int count) {
  (void)benchmark;  // both families use 24 iid coefficients
  if (count < 1) throw std::invalid_argument("sample_params: count must be >= 1");
  Rng rng(rng_seed);
  std::vector<ParamRecord> records(count);
  for (auto& r : records)
    for (double& c : r) c = rng.uniform_pm1();
  return records;
}

/// Column store of FOM solutions plus everything needed to reproduce them:
/// the parameter records, the nodal forcing values fed to the networks
/// (micro inputs) and the sampling seed.
struct SnapshotMatrix {
  int dof_count = 0;
  int sample_count = 0;
  std::vector<double> columns;       // column-major, dof_count x sample_count
  std::vector<double> micro_inputs;  // column-major, nodal forcing values
  std::vector<ParamRecord> param_records;
  BenchmarkId benchmark = BenchmarkId::continuous_scales;
  int cells_per_side = 0;
  std::uint64_t seed = 0;

  const double* column(int i) const { return columns.data() + static_cast<std::size_t>(i) * dof_count; }
  const double* micro(int i) const { return micro_inputs.data() + static_cast<std::size_t>(i) * dof_count; }
  Vec column_vec(int i) const { return Vec(column(i), column(i) + dof_count); }
  Vec micro_vec(int i) const { return Vec(micro(i), micro(i) + dof_count); }
};

/// Solves the FOM for `count` sampled parameters. Columns are written into
/// pre-assigned slots, so the result does not depend on scheduling.
inline SnapshotMatrix generate_snapshots(BenchmarkId benchmark, const P1Space& space,
                                         std::uint64_t rng_seed, int count) {
  SnapshotMatrix snaps;
  snaps.dof_count = space.dof_count;
  snaps.sample_count = count;
  snaps.benchmark = benchmark;
  snaps.cells_per_side = space.mesh.cells_per_side;
  snaps.seed = rng_seed;
  snaps.param_records = sample_params(benchmark, rng_seed, count);
  snaps.columns.assign(static_cast<std::size_t>(space.dof_count) * count, 0.0);
  snaps.micro_inputs.assign(static_cast<std::size_t>(space.dof_count) * count, 0.0);

  const SparseSymmetricMatrix stiffness = assemble_stiffness(space);
  const SparseSymmetricMatrix mass = assemble_mass(space);
  const auto& points = node_coordinates(space.mesh);

  int failed_sample = -1;
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      const Vec f = forcing_from_record(benchmark, snaps.param_records[i], points);
      const Vec u = solve_poisson(space, f, &stiffness, &mass);
      std::copy(f.begin(), f.end(),
                snaps.micro_inputs.begin() + static_cast<std::size_t>(i) * space.dof_count);
      std::copy(u.begin(), u.end(),
                snaps.columns.begin() + static_cast<std::size_t>(i) * space.dof_count);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failed_sample < 0 || i < failed_sample) {
        failed_sample = i;
        failure = e.what();
      }
    }
  }
  if (failed_sample >= 0)
    throw SolverFailure("generate_snapshots: sample " + std::to_string(failed_sample) +
                        " failed: " + failure);
  return snaps;
}

}  // namespace podminn
