#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "podminn/minn.hpp"
#include "podminn/pod.hpp"
#include "podminn/training.hpp"

namespace podminn {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_u64(out, bits);
}

struct ByteReader {
  const char* p;
  const char* end;
  std::string context;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw IoError(context + ": truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    p += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
};

}  // namespace detail

/// Writes bytes to a temporary file in the target directory, then renames.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Binary matrix container: magic "MROM", format version, dtype tag (f64 = 1),
// row/column counts, then the column-major float64 little-endian payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kMatrixFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF64 = 1;

inline void write_matrix_file(const std::filesystem::path& path, const double* data,
                              std::uint64_t rows, std::uint64_t cols) {
  std::string bytes;
  bytes.reserve(28 + 8 * rows * cols);
  bytes.append("MROM", 4);
  detail::append_u32(bytes, kMatrixFormatVersion);
  detail::append_u32(bytes, kDtypeF64);
  detail::append_u64(bytes, rows);
  detail::append_u64(bytes, cols);
  const std::uint64_t count = rows * cols;
  for (std::uint64_t i = 0; i < count; ++i) detail::append_f64(bytes, data[i]);
  write_file_atomic(path, bytes);
}

struct LoadedMatrix {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;  // column-major
};

inline LoadedMatrix read_matrix_file(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  detail::ByteReader r{bytes.data(), bytes.data() + bytes.size(), path.string()};
  r.need(4);
  if (std::memcmp(r.p, "MROM", 4) != 0) throw IoError(path.string() + ": bad magic");
  r.p += 4;
  const std::uint32_t version = r.u32();
  if (version != kMatrixFormatVersion)
    throw IoError(path.string() + ": unsupported format version " + std::to_string(version));
  const std::uint32_t dtype = r.u32();
  if (dtype != kDtypeF64)
    throw IoError(path.string() + ": unsupported dtype tag " + std::to_string(dtype));
  LoadedMatrix m;
  m.rows = r.u64();
  m.cols = r.u64();
  const std::uint64_t count = m.rows * m.cols;
  r.need(8 * count);
  m.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) m.data[i] = r.f64();
  return m;
}

// ---------------------------------------------------------------------------
// CSV helpers. Numeric cells use 17 significant digits so float64 values
// survive a write/read round trip exactly.
// ---------------------------------------------------------------------------

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Line-based key=value run configuration. Unknown keys are rejected; paths
// are resolved relative to the directory containing the config file.
// ---------------------------------------------------------------------------

struct RunConfig {
  int benchmark = 1;
  int mesh_cells = 50;
  int snapshot_count = 1000;
  int train_size = 750;
  int valid_size = 50;
  int test_size = 200;
  std::vector<int> n_rb_list;  // defaults to the per-benchmark sweep grid
  double support_radius = 0.6;
  std::string optimizer = "lbfgs";
  double learning_rate = 1.0;
  int max_epochs = 250;
  int lbfgs_history = 10;
  int early_stop_window = 2;
  bool inf_norm_term = false;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;

  TrainConfig train_config() const {
    TrainConfig tc;
    if (optimizer == "lbfgs")
      tc.optimizer = TrainConfig::Optimizer::lbfgs;
    else if (optimizer == "adam")
      tc.optimizer = TrainConfig::Optimizer::adam;
    else
      throw IoError("config: optimizer must be lbfgs or adam");
    tc.learning_rate = learning_rate;
    tc.max_epochs = max_epochs;
    tc.lbfgs_history = lbfgs_history;
    tc.early_stop_window = early_stop_window;
    tc.inf_norm_term = inf_norm_term;
    tc.rng_seed = seed;
    return tc;
  }
};

inline std::vector<int> default_n_rb_sweep(int benchmark) {
  if (benchmark == 1) return {2, 4, 8, 12, 16, 20, 30, 40, 60, 80, 100, 144};
  return {2, 4, 8, 16, 24, 40, 60, 80};
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  RunConfig cfg;
  bool have_n_rb_list = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw IoError("config " + path.string() + ":" + std::to_string(line_no) +
                    ": expected key=value");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    try {
      if (key == "benchmark") cfg.benchmark = std::stoi(value);
      else if (key == "mesh_cells") cfg.mesh_cells = std::stoi(value);
      else if (key == "snapshot_count") cfg.snapshot_count = std::stoi(value);
      else if (key == "train_size") cfg.train_size = std::stoi(value);
      else if (key == "valid_size") cfg.valid_size = std::stoi(value);
      else if (key == "test_size") cfg.test_size = std::stoi(value);
      else if (key == "support_radius") cfg.support_radius = std::stod(value);
      else if (key == "optimizer") cfg.optimizer = value;
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
      else if (key == "lbfgs_history") cfg.lbfgs_history = std::stoi(value);
      else if (key == "early_stop_window") cfg.early_stop_window = std::stoi(value);
      else if (key == "inf_norm_term") cfg.inf_norm_term = std::stoi(value) != 0;
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "n_rb_list") {
        have_n_rb_list = true;
        cfg.n_rb_list.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!detail::trim(item).empty()) cfg.n_rb_list.push_back(std::stoi(detail::trim(item)));
        if (cfg.n_rb_list.empty())
          throw IoError("config: n_rb_list must contain at least one value");
      } else {
        throw IoError("config " + path.string() + ":" + std::to_string(line_no) +
                      ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw IoError("config " + path.string() + ":" + std::to_string(line_no) +
                    ": cannot parse value for '" + key + "'");
    }
  }
  if (cfg.benchmark != 1 && cfg.benchmark != 2)
    throw IoError("config: benchmark must be 1 or 2");
  if (cfg.out_dir.empty()) throw IoError("config: out_dir is required");
  if (!have_n_rb_list) cfg.n_rb_list = default_n_rb_sweep(cfg.benchmark);
  if (cfg.out_dir.is_relative())
    cfg.out_dir = std::filesystem::absolute(path).parent_path() / cfg.out_dir;
  return cfg;
}

// ---------------------------------------------------------------------------
// Network serialization: a structured text header describing the layer stack
// followed by the flat float64 little-endian parameter block in storage
// (pattern) order. Mesh-informed layers record the unit-square mesh sizes of
// their endpoint spaces; the sparsity pattern is rebuilt on load.
// ---------------------------------------------------------------------------

inline std::string activation_tag(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::scaled_tanh: return "scaled_tanh";
  }
  return "identity";
}

inline Activation activation_from_tag(const std::string& tag) {
  if (tag == "identity") return Activation::identity;
  if (tag == "tanh") return Activation::tanh;
  if (tag == "scaled_tanh") return Activation::scaled_tanh;
  throw IoError("unknown activation tag '" + tag + "'");
}

inline void write_network(const std::filesystem::path& path, const Network& net) {
  std::ostringstream header;
  header << "MINNNET 1\n";
  header << "layers " << net.layers.size() << "\n";
  for (const Layer& l : net.layers) {
    if (l.kind == Layer::Kind::mesh_informed) {
      if (l.in_mesh_cells < 1 || l.out_mesh_cells < 1)
        throw IoError("write_network: mesh-informed layer lacks mesh descriptors");
      header << "layer mesh_informed in " << l.in_dim << " out " << l.out_dim << " act "
             << activation_tag(l.activation) << " scale " << csv_number(l.activation_scale)
             << " r " << csv_number(l.pattern.support_radius) << " in_cells " << l.in_mesh_cells
             << " out_cells " << l.out_mesh_cells << "\n";
    } else {
      header << "layer dense in " << l.in_dim << " out " << l.out_dim << " act "
             << activation_tag(l.activation) << " scale " << csv_number(l.activation_scale)
             << "\n";
    }
  }
  header << "params " << net.param_count() << "\n";
  std::string bytes = header.str();
  for (double v : net.params) detail::append_f64(bytes, v);
  write_file_atomic(path, bytes);
}

inline Network read_network(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw IoError(path.string() + ": truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != "MINNNET 1") throw IoError(path.string() + ": bad magic or version");
  std::istringstream ls(next_line());
  std::string word;
  std::size_t n_layers = 0;
  ls >> word >> n_layers;
  if (word != "layers" || n_layers == 0) throw IoError(path.string() + ": bad layer count");

  std::vector<Layer> layers;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::istringstream line(next_line());
    std::string tag, kind;
    line >> tag >> kind;
    if (tag != "layer") throw IoError(path.string() + ": expected layer line");
    std::string key;
    int in = 0, out = 0, in_cells = -1, out_cells = -1;
    double scale = 1.0, r = 0.0;
    std::string act = "identity";
    while (line >> key) {
      if (key == "in") line >> in;
      else if (key == "out") line >> out;
      else if (key == "act") line >> act;
      else if (key == "scale") line >> scale;
      else if (key == "r") line >> r;
      else if (key == "in_cells") line >> in_cells;
      else if (key == "out_cells") line >> out_cells;
      else throw IoError(path.string() + ": unknown layer field '" + key + "'");
    }
    if (kind == "dense") {
      layers.push_back(dense_layer(in, out, activation_from_tag(act), scale));
    } else if (kind == "mesh_informed") {
      const StructuredTriMesh in_mesh = build_unit_square_mesh(in_cells);
      const StructuredTriMesh out_mesh = build_unit_square_mesh(out_cells);
      if (in_mesh.node_count() != in || out_mesh.node_count() != out)
        throw IoError(path.string() + ": mesh descriptors inconsistent with layer dims");
      SparsityPattern pattern =
          build_sparsity(node_coordinates(in_mesh), node_coordinates(out_mesh), r);
      layers.push_back(mesh_informed_layer(std::move(pattern), activation_from_tag(act), scale,
                                           in_cells, out_cells));
    } else {
      throw IoError(path.string() + ": unknown layer kind '" + kind + "'");
    }
  }

  std::istringstream ps(next_line());
  std::size_t param_count = 0;
  ps >> word >> param_count;
  if (word != "params") throw IoError(path.string() + ": missing params line");

  Network net = make_network(std::move(layers));
  if (net.param_count() != param_count)
    throw IoError(path.string() + ": parameter count mismatch (header " +
                  std::to_string(param_count) + ", structure " +
                  std::to_string(net.param_count()) + ")");
  detail::ByteReader r{bytes.data() + pos, bytes.data() + bytes.size(), path.string()};
  for (std::size_t i = 0; i < param_count; ++i) net.params[i] = r.f64();
  return net;
}

// ---------------------------------------------------------------------------
// Reduced basis persistence: basis columns as a matrix file plus a CSV of
// the full singular value spectrum (index, sigma).
// ---------------------------------------------------------------------------

inline void write_basis(const std::filesystem::path& matrix_path,
                        const std::filesystem::path& sigma_csv_path, const ReducedBasis& basis) {
  write_matrix_file(matrix_path, basis.basis_columns.data(), basis.dof_count, basis.max_modes);
  std::string csv = "index,sigma\n";
  for (std::size_t i = 0; i < basis.full_spectrum.size(); ++i)
    csv += std::to_string(i + 1) + "," + csv_number(basis.full_spectrum[i]) + "\n";
  write_file_atomic(sigma_csv_path, csv);
}

inline ReducedBasis read_basis(const std::filesystem::path& matrix_path,
                               const std::filesystem::path& sigma_csv_path) {
  const LoadedMatrix m = read_matrix_file(matrix_path);
  ReducedBasis basis;
  basis.dof_count = static_cast<int>(m.rows);
  basis.max_modes = static_cast<int>(m.cols);
  basis.basis_columns = m.data;

  std::ifstream in(sigma_csv_path);
  if (!in) throw IoError("cannot open " + sigma_csv_path.string());
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    basis.full_spectrum.push_back(std::stod(line.substr(comma + 1)));
  }
  if (static_cast<int>(basis.full_spectrum.size()) < basis.max_modes)
    throw IoError(sigma_csv_path.string() + ": fewer singular values than basis columns");
  basis.singular_values.assign(basis.full_spectrum.begin(),
                               basis.full_spectrum.begin() + basis.max_modes);
  return basis;
}

/// First n_rb columns (and singular values) of a wider basis.
inline ReducedBasis truncate_basis(const ReducedBasis& basis, int n_rb) {
  if (n_rb < 1 || n_rb > basis.max_modes)
    throw std::invalid_argument("truncate_basis: n_rb out of range");
  ReducedBasis t;
  t.dof_count = basis.dof_count;
  t.max_modes = n_rb;
  t.basis_columns.assign(basis.basis_columns.begin(),
                         basis.basis_columns.begin() +
                             static_cast<std::size_t>(basis.dof_count) * n_rb);
  t.singular_values.assign(basis.singular_values.begin(), basis.singular_values.begin() + n_rb);
  t.full_spectrum = basis.full_spectrum;
  return t;
}

// ---------------------------------------------------------------------------
// Training history CSV.
// ---------------------------------------------------------------------------

inline void write_history_csv(const std::filesystem::path& path, const TrainingHistory& history) {
  std::string csv = "epoch,train_loss,valid_loss,step_size,line_search_backtracks\n";
  for (const EpochRecord& e : history.epochs)
    csv += std::to_string(e.epoch) + "," + csv_number(e.train) + "," + csv_number(e.valid) +
           "," + csv_number(e.step_size) + "," + std::to_string(e.backtracks) + "\n";
  write_file_atomic(path, csv);
}

}  // namespace podminn
