#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "podminn/io.hpp"
#include "podminn/pipeline.hpp"

using namespace podminn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("podminn_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) { return read_file_bytes(p); }

void write_config(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

}  // namespace

TEST_CASE("matrix files round-trip bitwise") {
  TempDir dir("matrix");
  Rng rng(1);
  std::vector<double> data(6 * 4);
  for (double& v : data) v = rng.uniform_pm1();
  data[0] = 0.0;
  data[1] = -0.0;
  data[2] = 1e-308;
  const fs::path path = dir.path / "m.mrom";
  write_matrix_file(path, data.data(), 6, 4);

  const LoadedMatrix m = read_matrix_file(path);
  REQUIRE(m.rows == 6);
  REQUIRE(m.cols == 4);
  REQUIRE(m.data.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t a, b;
    std::memcpy(&a, &data[i], 8);
    std::memcpy(&b, &m.data[i], 8);
    REQUIRE(a == b);
  }

  // Writing the same matrix again produces identical bytes.
  const std::string first = slurp(path);
  write_matrix_file(path, data.data(), 6, 4);
  REQUIRE(slurp(path) == first);
}

TEST_CASE("matrix reader rejects corrupted headers before the payload") {
  TempDir dir("badmatrix");
  std::vector<double> data(4, 1.0);
  const fs::path path = dir.path / "m.mrom";
  write_matrix_file(path, data.data(), 2, 2);
  std::string bytes = slurp(path);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_file_atomic(dir.path / "bad1.mrom", bad_magic);
  REQUIRE_THROWS_WITH(read_matrix_file(dir.path / "bad1.mrom"),
                      Catch::Matchers::ContainsSubstring("bad magic"));

  std::string bad_version = bytes;
  bad_version[4] = 9;
  write_file_atomic(dir.path / "bad2.mrom", bad_version);
  REQUIRE_THROWS_WITH(read_matrix_file(dir.path / "bad2.mrom"),
                      Catch::Matchers::ContainsSubstring("version"));

  std::string bad_dtype = bytes;
  bad_dtype[8] = 7;
  write_file_atomic(dir.path / "bad3.mrom", bad_dtype);
  REQUIRE_THROWS_WITH(read_matrix_file(dir.path / "bad3.mrom"),
                      Catch::Matchers::ContainsSubstring("dtype"));

  write_file_atomic(dir.path / "bad4.mrom", bytes.substr(0, bytes.size() - 5));
  REQUIRE_THROWS_WITH(read_matrix_file(dir.path / "bad4.mrom"),
                      Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("csv numbers preserve doubles exactly") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = (rng.uniform_pm1()) * std::pow(10.0, rng.uniform(-30, 30));
    REQUIRE(std::stod(csv_number(v)) == v);
  }
}

TEST_CASE("network files round-trip structure and parameters") {
  TempDir dir("net");
  const auto fine = build_unit_square_mesh(6);
  const auto coarse = build_unit_square_mesh(3);
  Network net = make_network({
      mesh_informed_layer(build_sparsity(node_coordinates(fine), node_coordinates(coarse), 0.6),
                          Activation::tanh, 1.0, 6, 3),
      dense_layer(coarse.node_count(), 4, Activation::scaled_tanh, 0.4),
  });
  init_glorot(net, 42);

  const fs::path path = dir.path / "net.minn";
  write_network(path, net);
  const Network loaded = read_network(path);
  REQUIRE(loaded.layers.size() == net.layers.size());
  REQUIRE(loaded.params == net.params);
  REQUIRE(loaded.layers[0].pattern.col_idx == net.layers[0].pattern.col_idx);
  REQUIRE(loaded.layers[1].activation == Activation::scaled_tanh);
  REQUIRE(loaded.layers[1].activation_scale == 0.4);

  Rng rng(9);
  Vec x(net.in_dim());
  for (double& v : x) v = rng.uniform_pm1();
  REQUIRE(forward(net, x) == forward(loaded, x));
}

TEST_CASE("mesh-informed layers without mesh descriptors cannot be persisted") {
  TempDir dir("netbad");
  const auto pts = node_coordinates(build_unit_square_mesh(3));
  Network net = make_network({mesh_informed_layer(build_sparsity(pts, pts, 0.5), Activation::tanh)});
  REQUIRE_THROWS_AS(write_network(dir.path / "net.minn", net), IoError);
}

TEST_CASE("run config: parsing, defaults and rejection of unknown keys") {
  TempDir dir("config");
  const fs::path path = dir.path / "run.cfg";
  write_config(path,
               "# comment line\n"
               "benchmark = 2\n"
               "mesh_cells = 20\n"
               "snapshot_count = 40\n"
               "train_size = 30\n"
               "valid_size = 5\n"
               "test_size = 5\n"
               "n_rb_list = 2, 4, 8\n"
               "optimizer = adam\n"
               "learning_rate = 0.01\n"
               "max_epochs = 17\n"
               "inf_norm_term = 1\n"
               "seed = 99\n"
               "out_dir = run_out\n");
  const RunConfig cfg = parse_run_config(path);
  REQUIRE(cfg.benchmark == 2);
  REQUIRE(cfg.mesh_cells == 20);
  REQUIRE(cfg.n_rb_list == std::vector<int>{2, 4, 8});
  REQUIRE(cfg.optimizer == "adam");
  REQUIRE(cfg.max_epochs == 17);
  REQUIRE(cfg.inf_norm_term);
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.out_dir == dir.path / "run_out");  // resolved against the config dir
  REQUIRE(cfg.support_radius == 0.6);
  REQUIRE(cfg.lbfgs_history == 10);

  write_config(path, "benchmark = 1\nout_dir = x\nmystery_key = 3\n");
  REQUIRE_THROWS_WITH(parse_run_config(path), Catch::Matchers::ContainsSubstring("unknown key"));

  write_config(path, "benchmark = 1\n");
  REQUIRE_THROWS_WITH(parse_run_config(path), Catch::Matchers::ContainsSubstring("out_dir"));

  write_config(path, "benchmark = 2\nout_dir = y\n");
  REQUIRE(parse_run_config(path).n_rb_list == default_n_rb_sweep(2));
}

TEST_CASE("basis files round-trip and truncate consistently") {
  TempDir dir("basis");
  Rng rng(3);
  std::vector<double> cols(30 * 6);
  for (double& v : cols) v = rng.uniform_pm1();
  const ReducedBasis basis = compute_pod_from_columns(cols.data(), 30, 6, 5);

  write_basis(dir.path / "basis.mrom", dir.path / "sigma.csv", basis);
  const ReducedBasis loaded = read_basis(dir.path / "basis.mrom", dir.path / "sigma.csv");
  REQUIRE(loaded.dof_count == basis.dof_count);
  REQUIRE(loaded.max_modes == basis.max_modes);
  REQUIRE(loaded.basis_columns == basis.basis_columns);
  REQUIRE(loaded.singular_values == basis.singular_values);
  REQUIRE(loaded.full_spectrum.size() == basis.full_spectrum.size());
  for (std::size_t i = 0; i < basis.full_spectrum.size(); ++i)
    REQUIRE(loaded.full_spectrum[i] == basis.full_spectrum[i]);

  const ReducedBasis cut = truncate_basis(loaded, 3);
  REQUIRE(cut.max_modes == 3);
  REQUIRE(cut.singular_values.size() == 3);
  REQUIRE(std::equal(cut.basis_columns.begin(), cut.basis_columns.end(),
                     basis.basis_columns.begin()));
  REQUIRE_THROWS_AS(truncate_basis(loaded, 9), std::invalid_argument);
}

namespace {

RunConfig tiny_pipeline_config(const fs::path& dir) {
  const fs::path cfg_path = dir / "run.cfg";
  write_config(cfg_path,
               "benchmark = 2\n"
               "mesh_cells = 8\n"
               "snapshot_count = 24\n"
               "train_size = 16\n"
               "valid_size = 4\n"
               "test_size = 4\n"
               "n_rb_list = 2,4\n"
               "max_epochs = 5\n"
               "seed = 11\n"
               "out_dir = out\n");
  return parse_run_config(cfg_path);
}

}  // namespace

TEST_CASE("pipeline stages produce, reuse and reproduce their artifacts") {
  TempDir dir("pipeline");
  const RunConfig cfg = tiny_pipeline_config(dir.path);
  const PipelinePaths paths{cfg.out_dir};

  cmd_snapshots(cfg);
  REQUIRE(fs::exists(paths.snapshots()));
  REQUIRE(fs::exists(paths.micro_inputs()));
  REQUIRE(fs::exists(paths.params()));
  REQUIRE(fs::exists(paths.meta()));

  const LoadedMatrix s = read_matrix_file(paths.snapshots());
  REQUIRE(s.rows == 81);
  REQUIRE(s.cols == 24);

  cmd_pod(cfg);
  cmd_train_rb(cfg);
  cmd_train_closure(cfg);
  cmd_eval(cfg);
  cmd_curves(cfg);
  for (int n : {2, 4}) {
    REQUIRE(fs::exists(paths.coeff_net(n)));
    REQUIRE(fs::exists(paths.closure_net(n)));
    REQUIRE(fs::exists(paths.coeff_history(n)));
    REQUIRE(fs::exists(paths.closure_history(n)));
    REQUIRE(fs::exists(paths.manifest(n)));
  }

  // errors.csv: header plus 2 n_rb values x 2 norms.
  const std::string errors = slurp(paths.errors());
  REQUIRE(errors.rfind("benchmark,n_rb,p,E_POD,E_PODMINN,E_PODMINNplus,n_test\n", 0) == 0);
  REQUIRE(std::count(errors.begin(), errors.end(), '\n') == 5);
  const std::string curves = slurp(paths.curves());
  REQUIRE(curves.rfind("benchmark,n_rb,p,sigma,E_POD,E_PODMINN,E_PODMINNplus,n_test\n", 0) == 0);

  // Deleting a downstream artifact and rerunning only its stage reproduces
  // it bitwise.
  const std::string basis_bytes = slurp(paths.basis());
  const std::string sigma_bytes = slurp(paths.sigma());
  fs::remove(paths.basis());
  fs::remove(paths.sigma());
  cmd_pod(cfg);
  REQUIRE(slurp(paths.basis()) == basis_bytes);
  REQUIRE(slurp(paths.sigma()) == sigma_bytes);

  const std::string errors_bytes = slurp(paths.errors());
  fs::remove(paths.errors());
  cmd_eval(cfg);
  REQUIRE(slurp(paths.errors()) == errors_bytes);

  const std::string net_bytes = slurp(paths.coeff_net(2));
  const std::string closure_bytes = slurp(paths.closure_net(2));
  cmd_train_rb(cfg);
  cmd_train_closure(cfg);
  REQUIRE(slurp(paths.coeff_net(2)) == net_bytes);
  REQUIRE(slurp(paths.closure_net(2)) == closure_bytes);

  // History CSV carries the documented columns.
  const std::string history = slurp(paths.coeff_history(2));
  REQUIRE(history.rfind("epoch,train_loss,valid_loss,step_size,line_search_backtracks\n", 0) == 0);
}

TEST_CASE("missing upstream artifacts are reported with their producing stage") {
  TempDir dir("missing");
  const RunConfig cfg = tiny_pipeline_config(dir.path);
  REQUIRE_THROWS_WITH(cmd_pod(cfg), Catch::Matchers::ContainsSubstring("snapshots"));
  cmd_snapshots(cfg);
  REQUIRE_THROWS_WITH(cmd_train_rb(cfg), Catch::Matchers::ContainsSubstring("pod"));
  cmd_pod(cfg);
  REQUIRE_THROWS_WITH(cmd_eval(cfg), Catch::Matchers::ContainsSubstring("train-rb"));
}

TEST_CASE("snapshot metadata guards against config drift") {
  TempDir dir("drift");
  const RunConfig cfg = tiny_pipeline_config(dir.path);
  cmd_snapshots(cfg);
  RunConfig other = cfg;
  other.snapshot_count = 30;
  REQUIRE_THROWS_WITH(load_snapshots(other), Catch::Matchers::ContainsSubstring("different config"));
}

TEST_CASE("eval on a hand-built exact model yields all-zero error rows") {
  TempDir dir("oracle");
  const fs::path cfg_path = dir.path / "run.cfg";
  write_config(cfg_path,
               "benchmark = 1\n"
               "mesh_cells = 1\n"
               "snapshot_count = 3\n"
               "train_size = 1\n"
               "valid_size = 1\n"
               "test_size = 1\n"
               "n_rb_list = 3\n"
               "seed = 2\n"
               "out_dir = out\n");
  const RunConfig cfg = parse_run_config(cfg_path);
  const PipelinePaths paths{cfg.out_dir};
  fs::create_directories(cfg.out_dir);

  // Snapshot bundle: three 3-dof columns, micro inputs equal to the columns.
  const std::vector<double> columns = {0.4, -0.2, 0.9, 1.0, 0.5, -0.7, 0.1, 0.8, 0.3};
  write_matrix_file(paths.snapshots(), columns.data(), 3, 3);
  write_matrix_file(paths.micro_inputs(), columns.data(), 3, 3);
  std::string params = "sample";
  for (int c = 0; c < 24; ++c) params += ",c" + std::to_string(c);
  params += "\n";
  for (int i = 0; i < 3; ++i) {
    params += std::to_string(i);
    for (int c = 0; c < 24; ++c) params += ",0";
    params += "\n";
  }
  write_file_atomic(paths.params(), params);
  write_file_atomic(paths.meta(),
                    "format_version = 1\nbenchmark = 1\nmesh_cells = 1\ndof_count = 3\n"
                    "snapshot_count = 3\nsampling_seed = 0\nrun_seed = 2\n");

  // Identity basis and an identity readout network: predictions are exact.
  ReducedBasis eye;
  eye.dof_count = 3;
  eye.max_modes = 3;
  eye.basis_columns = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  eye.singular_values = {1, 1, 1};
  eye.full_spectrum = {1, 1, 1};
  write_basis(paths.basis(), paths.sigma(), eye);

  Network identity_net = make_network({dense_layer(3, 3, Activation::identity)});
  for (int i = 0; i < 3; ++i) identity_net.weights(0)[i * 3 + i] = 1.0;
  write_network(paths.coeff_net(3), identity_net);
  write_file_atomic(paths.manifest(3),
                    "benchmark = 1\nn_rb = 3\ncoeff_net = model_rb_3.minn\n");

  cmd_eval(cfg);
  std::ifstream in(paths.errors());
  std::string line;
  std::getline(in, line);  // header
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // benchmark
    std::getline(ss, cell, ',');  // n_rb
    std::getline(ss, cell, ',');  // p
    for (int c = 0; c < 3; ++c) {
      std::getline(ss, cell, ',');
      REQUIRE(std::stod(cell) == 0.0);
    }
  }
  REQUIRE(rows == 2);
}
