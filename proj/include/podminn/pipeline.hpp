#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "podminn/benchmarks.hpp"
#include "podminn/io.hpp"
#include "podminn/rom.hpp"

namespace podminn {

// Stage seed streams, all derived from the run seed.
inline constexpr std::uint64_t kStreamSampling = 1;
inline constexpr std::uint64_t kStreamSplit = 2;

namespace detail {

inline void require_file(const std::filesystem::path& path, const std::string& producing_stage) {
  if (!std::filesystem::exists(path))
    throw IoError("missing input " + path.string() + " (produced by the " + producing_stage +
                  " stage)");
}

inline std::vector<std::string> param_column_names(BenchmarkId benchmark) {
  std::vector<std::string> names;
  auto block = [&](const std::string& prefix, int k_first, int count) {
    for (int k = 0; k < count; ++k) names.push_back(prefix + "_" + std::to_string(k_first + k));
  };
  if (benchmark == BenchmarkId::continuous_scales) {
    block("alpha_x", 1, 6);
    block("beta_x", 1, 6);
    block("alpha_y", 1, 6);
    block("beta_y", 1, 6);
  } else {
    block("alpha_low_x", 1, 2);
    block("beta_low_x", 1, 2);
    block("alpha_low_y", 1, 2);
    block("beta_low_y", 1, 2);
    block("alpha_high_x", 5, 4);
    block("beta_high_x", 5, 4);
    block("alpha_high_y", 5, 4);
    block("beta_high_y", 5, 4);
  }
  return names;
}

inline std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return kv;
}

}  // namespace detail

struct PipelinePaths {
  std::filesystem::path dir;

  std::filesystem::path snapshots() const { return dir / "S.mrom"; }
  std::filesystem::path micro_inputs() const { return dir / "micro_inputs.mrom"; }
  std::filesystem::path params() const { return dir / "params.csv"; }
  std::filesystem::path meta() const { return dir / "meta.txt"; }
  std::filesystem::path basis() const { return dir / "basis.mrom"; }
  std::filesystem::path sigma() const { return dir / "singular_values.csv"; }
  std::filesystem::path coeff_net(int n_rb) const {
    return dir / ("model_rb_" + std::to_string(n_rb) + ".minn");
  }
  std::filesystem::path coeff_history(int n_rb) const {
    return dir / ("history_rb_" + std::to_string(n_rb) + ".csv");
  }
  std::filesystem::path closure_net(int n_rb) const {
    return dir / ("model_closure_" + std::to_string(n_rb) + ".minn");
  }
  std::filesystem::path closure_history(int n_rb) const {
    return dir / ("history_closure_" + std::to_string(n_rb) + ".csv");
  }
  std::filesystem::path manifest(int n_rb) const {
    return dir / ("manifest_" + std::to_string(n_rb) + ".txt");
  }
  std::filesystem::path errors() const { return dir / "errors.csv"; }
  std::filesystem::path curves() const { return dir / "curves.csv"; }
};

inline DataSplit config_split(const RunConfig& cfg) {
  return make_split(cfg.snapshot_count, cfg.train_size, cfg.valid_size, cfg.test_size,
                    derive_seed(cfg.seed, kStreamSplit));
}

// ---------------------------------------------------------------------------
// snapshots: sample parameters, solve the FOM, persist the dataset.
// ---------------------------------------------------------------------------

inline void cmd_snapshots(const RunConfig& cfg) {
  const PipelinePaths paths{cfg.out_dir};
  std::filesystem::create_directories(cfg.out_dir);

  const P1Space space = make_p1_space(build_unit_square_mesh(cfg.mesh_cells));
  const SnapshotMatrix snaps =
      generate_snapshots(benchmark_from_int(cfg.benchmark), space,
                         derive_seed(cfg.seed, kStreamSampling), cfg.snapshot_count);

  write_matrix_file(paths.snapshots(), snaps.columns.data(), snaps.dof_count,
                    snaps.sample_count);
  write_matrix_file(paths.micro_inputs(), snaps.micro_inputs.data(), snaps.dof_count,
                    snaps.sample_count);

  std::string csv = "sample";
  for (const auto& name : detail::param_column_names(snaps.benchmark)) csv += "," + name;
  csv += "\n";
  for (int i = 0; i < snaps.sample_count; ++i) {
    csv += std::to_string(i);
    for (double v : snaps.param_records[i]) csv += "," + csv_number(v);
    csv += "\n";
  }
  write_file_atomic(paths.params(), csv);

  std::string meta;
  meta += "format_version = 1\n";
  meta += "benchmark = " + std::to_string(cfg.benchmark) + "\n";
  meta += "mesh_cells = " + std::to_string(cfg.mesh_cells) + "\n";
  meta += "dof_count = " + std::to_string(snaps.dof_count) + "\n";
  meta += "snapshot_count = " + std::to_string(snaps.sample_count) + "\n";
  meta += "sampling_seed = " + std::to_string(snaps.seed) + "\n";
  meta += "run_seed = " + std::to_string(cfg.seed) + "\n";
  write_file_atomic(paths.meta(), meta);
}

/// Reads back a snapshot dataset and checks it against the active config.
inline SnapshotMatrix load_snapshots(const RunConfig& cfg) {
  const PipelinePaths paths{cfg.out_dir};
  detail::require_file(paths.meta(), "snapshots");
  detail::require_file(paths.snapshots(), "snapshots");
  detail::require_file(paths.micro_inputs(), "snapshots");
  detail::require_file(paths.params(), "snapshots");

  const auto meta = detail::read_kv_file(paths.meta());
  auto meta_int = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("meta.txt: missing key '" + key + "'");
    return std::stoll(it->second);
  };
  if (meta_int("benchmark") != cfg.benchmark || meta_int("mesh_cells") != cfg.mesh_cells ||
      meta_int("snapshot_count") != cfg.snapshot_count)
    throw IoError("snapshot files in " + cfg.out_dir.string() +
                  " were produced with a different config");

  SnapshotMatrix snaps;
  snaps.benchmark = benchmark_from_int(cfg.benchmark);
  snaps.cells_per_side = cfg.mesh_cells;
  snaps.seed = static_cast<std::uint64_t>(meta_int("sampling_seed"));

  LoadedMatrix s = read_matrix_file(paths.snapshots());
  LoadedMatrix micro = read_matrix_file(paths.micro_inputs());
  if (s.rows != micro.rows || s.cols != micro.cols)
    throw IoError("S.mrom and micro_inputs.mrom disagree on shape");
  snaps.dof_count = static_cast<int>(s.rows);
  snaps.sample_count = static_cast<int>(s.cols);
  snaps.columns = std::move(s.data);
  snaps.micro_inputs = std::move(micro.data);

  std::ifstream in(paths.params());
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ParamRecord record{};
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // sample index
    for (double& v : record) {
      if (!std::getline(ss, cell, ',')) throw IoError("params.csv: short row");
      v = std::stod(cell);
    }
    snaps.param_records.push_back(record);
  }
  if (static_cast<int>(snaps.param_records.size()) != snaps.sample_count)
    throw IoError("params.csv row count does not match S.mrom");
  return snaps;
}

// ---------------------------------------------------------------------------
// pod: basis from the training columns, full spectrum to CSV.
// ---------------------------------------------------------------------------

inline void cmd_pod(const RunConfig& cfg) {
  const SnapshotMatrix snaps = load_snapshots(cfg);
  const DataSplit split = config_split(cfg);
  const int max_modes =
      std::min(*std::max_element(cfg.n_rb_list.begin(), cfg.n_rb_list.end()),
               std::min(snaps.dof_count, static_cast<int>(split.train_indices.size())));
  const ReducedBasis basis = compute_pod_subset(snaps, split.train_indices, max_modes);
  const PipelinePaths paths{cfg.out_dir};
  write_basis(paths.basis(), paths.sigma(), basis);
}

inline ReducedBasis load_basis(const RunConfig& cfg) {
  const PipelinePaths paths{cfg.out_dir};
  detail::require_file(paths.basis(), "pod");
  detail::require_file(paths.sigma(), "pod");
  return read_basis(paths.basis(), paths.sigma());
}

// ---------------------------------------------------------------------------
// train-rb / train-closure: one model per requested basis size.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_manifest(const RunConfig& cfg, const PipelinePaths& paths, int n_rb,
                           bool with_closure) {
  std::string m;
  m += "benchmark = " + std::to_string(cfg.benchmark) + "\n";
  m += "n_rb = " + std::to_string(n_rb) + "\n";
  m += "mesh_cells = " + std::to_string(cfg.mesh_cells) + "\n";
  m += "support_radius = " + csv_number(cfg.support_radius) + "\n";
  m += "seed = " + std::to_string(cfg.seed) + "\n";
  m += "basis = " + paths.basis().filename().string() + "\n";
  m += "sigma = " + paths.sigma().filename().string() + "\n";
  m += "coeff_net = " + paths.coeff_net(n_rb).filename().string() + "\n";
  if (with_closure)
    m += "closure_net = " + paths.closure_net(n_rb).filename().string() + "\n";
  write_file_atomic(paths.manifest(n_rb), m);
}

}  // namespace detail

inline void cmd_train_rb(const RunConfig& cfg) {
  const SnapshotMatrix snaps = load_snapshots(cfg);
  const DataSplit split = config_split(cfg);
  const ReducedBasis basis = load_basis(cfg);
  const PipelinePaths paths{cfg.out_dir};
  const TrainConfig tc = cfg.train_config();

  for (int n_rb : cfg.n_rb_list) {
    const int n_eff = std::min(n_rb, basis.max_modes);
    RomModel model = train_pod_minn_with_basis(truncate_basis(basis, n_eff), snaps, split, tc,
                                               cfg.support_radius);
    write_network(paths.coeff_net(n_rb), model.coeff_net);
    write_history_csv(paths.coeff_history(n_rb), model.coeff_history);
    detail::write_manifest(cfg, paths, n_rb, false);
  }
}

inline RomModel load_model(const RunConfig& cfg, int n_rb) {
  const PipelinePaths paths{cfg.out_dir};
  detail::require_file(paths.manifest(n_rb), "train-rb");
  const auto manifest = detail::read_kv_file(paths.manifest(n_rb));

  RomModel model;
  model.benchmark = benchmark_from_int(cfg.benchmark);
  model.cells_per_side = cfg.mesh_cells;
  model.support_radius = cfg.support_radius;
  detail::require_file(paths.coeff_net(n_rb), "train-rb");
  model.coeff_net = read_network(paths.coeff_net(n_rb));
  model.n_rb = model.coeff_net.out_dim();

  const ReducedBasis basis = load_basis(cfg);
  model.basis = truncate_basis(basis, model.n_rb);

  if (manifest.count("closure_net")) {
    detail::require_file(paths.closure_net(n_rb), "train-closure");
    model.closure_net = read_network(paths.closure_net(n_rb));
  }
  return model;
}

inline void cmd_train_closure(const RunConfig& cfg) {
  const SnapshotMatrix snaps = load_snapshots(cfg);
  const DataSplit split = config_split(cfg);
  const PipelinePaths paths{cfg.out_dir};
  const TrainConfig tc = cfg.train_config();

  for (int n_rb : cfg.n_rb_list) {
    RomModel model = load_model(cfg, n_rb);
    model = train_closure(std::move(model), snaps, split, tc);
    write_network(paths.closure_net(n_rb), *model.closure_net);
    write_history_csv(paths.closure_history(n_rb), model.closure_history);
    detail::write_manifest(cfg, paths, n_rb, true);
  }
}

// ---------------------------------------------------------------------------
// eval / curves: mean test-set error tables in both norms.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string error_table(const RunConfig& cfg, bool with_sigma) {
  const SnapshotMatrix snaps = load_snapshots(cfg);
  const DataSplit split = config_split(cfg);
  const ReducedBasis basis = load_basis(cfg);

  std::string csv = with_sigma ? "benchmark,n_rb,p,sigma,E_POD,E_PODMINN,E_PODMINNplus,n_test\n"
                               : "benchmark,n_rb,p,E_POD,E_PODMINN,E_PODMINNplus,n_test\n";
  for (int n_rb : cfg.n_rb_list) {
    const RomModel model = load_model(cfg, n_rb);
    for (Norm p : {Norm::two, Norm::inf}) {
      const ErrorRow row = evaluate_errors(model, snaps, split.test_indices, model.n_rb, p);
      csv += std::to_string(cfg.benchmark) + "," + std::to_string(model.n_rb) + "," +
             norm_name(p) + ",";
      if (with_sigma) {
        const double sigma = model.n_rb <= static_cast<int>(basis.full_spectrum.size())
                                 ? basis.full_spectrum[model.n_rb - 1]
                                 : 0.0;
        csv += csv_number(sigma) + ",";
      }
      csv += csv_number(row.e_pod) + "," + csv_number(row.e_podminn) + "," +
             csv_number(row.e_podminnplus) + "," + std::to_string(split.test_indices.size()) +
             "\n";
    }
  }
  return csv;
}

}  // namespace detail

inline void cmd_eval(const RunConfig& cfg) {
  const PipelinePaths paths{cfg.out_dir};
  write_file_atomic(paths.errors(), detail::error_table(cfg, false));
}

inline void cmd_curves(const RunConfig& cfg) {
  const PipelinePaths paths{cfg.out_dir};
  write_file_atomic(paths.curves(), detail::error_table(cfg, true));
}

}  // namespace podminn
