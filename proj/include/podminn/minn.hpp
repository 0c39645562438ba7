#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "podminn/mesh.hpp"
#include "podminn/rng.hpp"
#include "podminn/vec.hpp"

namespace podminn {

/// Distance-pruned connectivity between two nodal coordinate sets: position
/// (i, j) is present iff |x_j - x'_i| <= r, squared distances compared
/// against r^2 so the tie d = r is included. Stored as CSR over output rows
/// together with a transpose view used by reverse-mode input gradients.
struct SparsityPattern {
  int in_dim = 0;
  int out_dim = 0;
  double support_radius = 0.0;
  std::vector<int> row_ptr;  // out_dim + 1
  std::vector<int> col_idx;  // per-row sorted ascending

  // Transpose view: for input column j, the CSR positions and rows of its
  // entries.
  std::vector<int> col_ptr;  // in_dim + 1
  std::vector<int> t_pos;    // value position in CSR order
  std::vector<int> t_row;    // owning output row of that position

  long nnz() const { return static_cast<long>(col_idx.size()); }

  void build_transpose() {
    col_ptr.assign(in_dim + 1, 0);
    for (int c : col_idx) ++col_ptr[c + 1];
    for (int j = 0; j < in_dim; ++j) col_ptr[j + 1] += col_ptr[j];
    t_pos.resize(col_idx.size());
    t_row.resize(col_idx.size());
    std::vector<int> cursor(col_ptr.begin(), col_ptr.end() - 1);
    for (int i = 0; i < out_dim; ++i)
      for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
        const int slot = cursor[col_idx[p]]++;
        t_pos[slot] = p;
        t_row[slot] = i;
      }
  }
};

/// Enumerates all (output, input) pairs within the support radius using a
/// bucket grid over the input coordinates, then sorts each row.
inline SparsityPattern build_sparsity(const std::vector<Point2>& input_coords,
                                      const std::vector<Point2>& output_coords, double r) {
  if (r < 0.0) throw std::invalid_argument("build_sparsity: negative support radius");
  if (input_coords.empty() || output_coords.empty())
    throw std::invalid_argument("build_sparsity: empty coordinate list");

  SparsityPattern pattern;
  pattern.in_dim = static_cast<int>(input_coords.size());
  pattern.out_dim = static_cast<int>(output_coords.size());
  pattern.support_radius = r;
  pattern.row_ptr.assign(pattern.out_dim + 1, 0);

  if (r == 0.0) {
    // Exact coincidence only.
    struct Key {
      std::uint64_t x, y;
      bool operator==(const Key& o) const { return x == o.x && y == o.y; }
    };
    struct KeyHash {
      std::size_t operator()(const Key& k) const {
        std::uint64_t h = k.x * 0x9e3779b97f4a7c15ULL ^ k.y;
        return static_cast<std::size_t>(h ^ (h >> 29));
      }
    };
    auto bits = [](double v) {
      std::uint64_t b;
      std::memcpy(&b, &v, sizeof(b));
      return b;
    };
    std::unordered_map<Key, std::vector<int>, KeyHash> by_coord;
    for (int j = 0; j < pattern.in_dim; ++j)
      by_coord[{bits(input_coords[j].x), bits(input_coords[j].y)}].push_back(j);
    for (int i = 0; i < pattern.out_dim; ++i) {
      auto it = by_coord.find({bits(output_coords[i].x), bits(output_coords[i].y)});
      if (it != by_coord.end())
        for (int j : it->second) pattern.col_idx.push_back(j);
      pattern.row_ptr[i + 1] = static_cast<int>(pattern.col_idx.size());
    }
    pattern.build_transpose();
    return pattern;
  }

  double xmin = input_coords[0].x, ymin = input_coords[0].y;
  for (const auto& p : input_coords) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
  }
  double xmax = xmin, ymax = ymin;
  for (const auto& p : input_coords) {
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  }
  const int bx = std::max(1, static_cast<int>((xmax - xmin) / r) + 1);
  const int by = std::max(1, static_cast<int>((ymax - ymin) / r) + 1);
  auto cell_of = [&](double v, double lo, int nb) {
    int c = static_cast<int>((v - lo) / r);
    return std::clamp(c, 0, nb - 1);
  };
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(bx) * by);
  for (int j = 0; j < pattern.in_dim; ++j)
    buckets[cell_of(input_coords[j].y, ymin, by) * static_cast<std::size_t>(bx) +
            cell_of(input_coords[j].x, xmin, bx)]
        .push_back(j);

  const double r2 = r * r;
  std::vector<int> row;
  for (int i = 0; i < pattern.out_dim; ++i) {
    row.clear();
    const Point2& o = output_coords[i];
    const int cx = cell_of(o.x, xmin, bx);
    const int cy = cell_of(o.y, ymin, by);
    for (int gy = std::max(0, cy - 1); gy <= std::min(by - 1, cy + 1); ++gy)
      for (int gx = std::max(0, cx - 1); gx <= std::min(bx - 1, cx + 1); ++gx)
        for (int j : buckets[gy * static_cast<std::size_t>(bx) + gx]) {
          const double dx = input_coords[j].x - o.x;
          const double dy = input_coords[j].y - o.y;
          if (dx * dx + dy * dy <= r2) row.push_back(j);
        }
    std::sort(row.begin(), row.end());
    pattern.col_idx.insert(pattern.col_idx.end(), row.begin(), row.end());
    pattern.row_ptr[i + 1] = static_cast<int>(pattern.col_idx.size());
  }
  pattern.build_transpose();
  return pattern;
}

enum class Activation { identity, tanh, scaled_tanh };

inline double apply_activation(Activation act, double scale, double z) {
  switch (act) {
    case Activation::identity: return z;
    case Activation::tanh: return std::tanh(z);
    case Activation::scaled_tanh: return scale * std::tanh(z);
  }
  return z;
}

/// Derivative expressed through the post-activation value a = rho(z).
inline double activation_derivative(Activation act, double scale, double a) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - a * a;
    case Activation::scaled_tanh: return scale - a * a / scale;
  }
  return 1.0;
}

struct Layer {
  enum class Kind { dense, mesh_informed };

  Kind kind = Kind::dense;
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::identity;
  double activation_scale = 1.0;  // c in rho(z) = c*tanh(z)
  SparsityPattern pattern;        // mesh_informed only

  // Mesh descriptors for serialization (-1 when the side is not a FE space).
  int in_mesh_cells = -1;
  int out_mesh_cells = -1;

  // Offsets into the flat parameter vector, assigned by make_network.
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t weight_count() const {
    return kind == Kind::dense ? static_cast<std::size_t>(in_dim) * out_dim
                               : static_cast<std::size_t>(pattern.nnz());
  }
  std::size_t param_count() const { return weight_count() + out_dim; }
};

inline Layer dense_layer(int in_dim, int out_dim, Activation act, double scale = 1.0) {
  Layer l;
  l.kind = Layer::Kind::dense;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.activation = act;
  l.activation_scale = scale;
  return l;
}

inline Layer mesh_informed_layer(SparsityPattern pattern, Activation act, double scale = 1.0,
                                 int in_mesh_cells = -1, int out_mesh_cells = -1) {
  Layer l;
  l.kind = Layer::Kind::mesh_informed;
  l.in_dim = pattern.in_dim;
  l.out_dim = pattern.out_dim;
  l.activation = act;
  l.activation_scale = scale;
  l.pattern = std::move(pattern);
  l.in_mesh_cells = in_mesh_cells;
  l.out_mesh_cells = out_mesh_cells;
  return l;
}

/// Feedforward stack of dense and mesh-informed layers. All trainable
/// scalars live in one flat vector ordered layer-major, weights before bias,
/// weights in row-major (dense) or pattern (mesh-informed) order. Weights
/// outside a mesh-informed pattern are structurally absent.
struct Network {
  std::vector<Layer> layers;
  std::vector<double> params;

  int in_dim() const { return layers.front().in_dim; }
  int out_dim() const { return layers.back().out_dim; }
  std::size_t param_count() const { return params.size(); }

  const double* weights(int l) const { return params.data() + layers[l].weight_offset; }
  double* weights(int l) { return params.data() + layers[l].weight_offset; }
  const double* bias(int l) const { return params.data() + layers[l].bias_offset; }
  double* bias(int l) { return params.data() + layers[l].bias_offset; }
};

inline Network make_network(std::vector<Layer> layers) {
  if (layers.empty()) throw std::invalid_argument("make_network: no layers");
  for (std::size_t l = 1; l < layers.size(); ++l)
    if (layers[l].in_dim != layers[l - 1].out_dim)
      throw std::invalid_argument("make_network: layer dimensions do not chain at layer " +
                                  std::to_string(l));
  Network net;
  std::size_t offset = 0;
  for (auto& layer : layers) {
    layer.weight_offset = offset;
    layer.bias_offset = offset + layer.weight_count();
    offset += layer.param_count();
  }
  net.layers = std::move(layers);
  net.params.assign(offset, 0.0);
  return net;
}

/// Per-layer pre- and post-activations of one forward pass.
struct ForwardCache {
  Vec input;
  std::vector<Vec> pre;
  std::vector<Vec> post;
};

namespace detail {

inline void layer_affine(const Network& net, int l, const double* x, double* z) {
  const Layer& layer = net.layers[l];
  const double* w = net.weights(l);
  const double* b = net.bias(l);
  if (layer.kind == Layer::Kind::dense) {
    const int in = layer.in_dim;
#pragma omp parallel for schedule(static) if (layer.out_dim * in > 16384)
    for (int i = 0; i < layer.out_dim; ++i) {
      const double* wi = w + static_cast<std::size_t>(i) * in;
      double s = b[i];
      for (int j = 0; j < in; ++j) s += wi[j] * x[j];
      z[i] = s;
    }
  } else {
    const auto& pat = layer.pattern;
#pragma omp parallel for schedule(static) if (pat.nnz() > 16384)
    for (int i = 0; i < layer.out_dim; ++i) {
      double s = b[i];
      for (int p = pat.row_ptr[i]; p < pat.row_ptr[i + 1]; ++p)
        s += w[p] * x[pat.col_idx[p]];
      z[i] = s;
    }
  }
}

}  // namespace detail

inline Vec forward(const Network& net, const Vec& x, ForwardCache* cache = nullptr) {
  if (static_cast<int>(x.size()) != net.in_dim())
    throw std::invalid_argument("forward: input length != first layer in_dim");
  if (cache) {
    cache->input = x;
    cache->pre.assign(net.layers.size(), {});
    cache->post.assign(net.layers.size(), {});
  }
  Vec a = x;
  Vec z;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    z.resize(layer.out_dim);
    detail::layer_affine(net, static_cast<int>(l), a.data(), z.data());
    Vec out(layer.out_dim);
    for (int i = 0; i < layer.out_dim; ++i)
      out[i] = apply_activation(layer.activation, layer.activation_scale, z[i]);
    if (cache) {
      cache->pre[l] = z;
      cache->post[l] = out;
    }
    a = std::move(out);
  }
  return a;
}

/// Gradients of a scalar loss with respect to every trainable parameter
/// (flat, aligned with Network::params) and to the network input.
struct GradientRecord {
  std::vector<double> params;
  Vec input;
};

/// Reverse sweep. Adds the parameter gradients into `param_grad` (callers
/// accumulate over samples); the input gradient is optional because the
/// first layer's is never consumed during training.
inline void backward_accumulate(const Network& net, const ForwardCache& cache,
                                const Vec& output_gradient, double* param_grad,
                                Vec* input_gradient = nullptr) {
  const int n_layers = static_cast<int>(net.layers.size());
  if (static_cast<int>(cache.post.size()) != n_layers ||
      static_cast<int>(cache.input.size()) != net.in_dim())
    throw std::invalid_argument("backward: cache does not match this network");
  for (int l = 0; l < n_layers; ++l)
    if (static_cast<int>(cache.post[l].size()) != net.layers[l].out_dim)
      throw std::invalid_argument("backward: cache does not match this network");
  if (static_cast<int>(output_gradient.size()) != net.out_dim())
    throw std::invalid_argument("backward: output gradient length mismatch");

  Vec delta = output_gradient;
  for (int l = n_layers - 1; l >= 0; --l) {
    const Layer& layer = net.layers[l];
    const Vec& post = cache.post[l];
    for (int i = 0; i < layer.out_dim; ++i)
      delta[i] *= activation_derivative(layer.activation, layer.activation_scale, post[i]);

    const Vec& below = l == 0 ? cache.input : cache.post[l - 1];
    double* gw = param_grad + layer.weight_offset;
    double* gb = param_grad + layer.bias_offset;
    const double* w = net.params.data() + layer.weight_offset;

    if (layer.kind == Layer::Kind::dense) {
      const int in = layer.in_dim;
#pragma omp parallel for schedule(static) if (layer.out_dim * in > 16384)
      for (int i = 0; i < layer.out_dim; ++i) {
        double* gwi = gw + static_cast<std::size_t>(i) * in;
        const double d = delta[i];
        for (int j = 0; j < in; ++j) gwi[j] += d * below[j];
        gb[i] += d;
      }
    } else {
      const auto& pat = layer.pattern;
#pragma omp parallel for schedule(static) if (pat.nnz() > 16384)
      for (int i = 0; i < layer.out_dim; ++i) {
        const double d = delta[i];
        for (int p = pat.row_ptr[i]; p < pat.row_ptr[i + 1]; ++p)
          gw[p] += d * below[pat.col_idx[p]];
        gb[i] += d;
      }
    }

    const bool need_below_grad = l > 0 || input_gradient != nullptr;
    if (!need_below_grad) break;
    Vec next(layer.in_dim, 0.0);
    if (layer.kind == Layer::Kind::dense) {
      const int in = layer.in_dim;
#pragma omp parallel for schedule(static) if (layer.out_dim * in > 16384)
      for (int j = 0; j < in; ++j) {
        double s = 0.0;
        for (int i = 0; i < layer.out_dim; ++i) s += w[static_cast<std::size_t>(i) * in + j] * delta[i];
        next[j] = s;
      }
    } else {
      const auto& pat = layer.pattern;
#pragma omp parallel for schedule(static) if (pat.nnz() > 16384)
      for (int j = 0; j < layer.in_dim; ++j) {
        double s = 0.0;
        for (int t = pat.col_ptr[j]; t < pat.col_ptr[j + 1]; ++t)
          s += w[pat.t_pos[t]] * delta[pat.t_row[t]];
        next[j] = s;
      }
    }
    if (l == 0) {
      if (input_gradient) *input_gradient = std::move(next);
      break;
    }
    delta = std::move(next);
  }
}

inline GradientRecord backward(const Network& net, const ForwardCache& cache,
                               const Vec& output_gradient) {
  GradientRecord record;
  record.params.assign(net.param_count(), 0.0);
  record.input.assign(net.in_dim(), 0.0);
  backward_accumulate(net, cache, output_gradient, record.params.data(), &record.input);
  return record;
}

/// Normalized uniform initialization: dense weights on +-sqrt(6/(in+out)),
/// mesh-informed weights per output row on +-sqrt(6/(row_nnz+out)) (the row
/// nonzero count is the effective fan-in of a pruned row). Biases zero.
/// `gain` rescales the bounds; draws happen in flat parameter order.
inline void init_glorot(Network& net, std::uint64_t rng_seed, double gain = 1.0) {
  Rng rng(rng_seed);
  std::fill(net.params.begin(), net.params.end(), 0.0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    double* w = net.weights(static_cast<int>(l));
    if (layer.kind == Layer::Kind::dense) {
      const double bound = gain * std::sqrt(6.0 / (layer.in_dim + layer.out_dim));
      for (std::size_t k = 0; k < layer.weight_count(); ++k) w[k] = bound * rng.uniform_pm1();
    } else {
      const auto& pat = layer.pattern;
      for (int i = 0; i < layer.out_dim; ++i) {
        const int row_nnz = pat.row_ptr[i + 1] - pat.row_ptr[i];
        const double bound =
            row_nnz == 0 ? 0.0 : gain * std::sqrt(6.0 / (row_nnz + layer.out_dim));
        for (int p = pat.row_ptr[i]; p < pat.row_ptr[i + 1]; ++p) w[p] = bound * rng.uniform_pm1();
      }
    }
  }
}

/// Closure initialization: the final layer starts at exactly zero (weights
/// and bias), so the network output is identically zero and training starts
/// from the uncorrected prediction. A literal all-zero stack would have zero
/// gradient everywhere upstream of the last layer under tanh, so the hidden
/// layers get a small Glorot draw (gain 0.1) instead.
inline void init_closure(Network& net, std::uint64_t rng_seed) {
  if (net.layers.empty()) throw std::invalid_argument("init_closure: empty network");
  init_glorot(net, rng_seed, 0.1);
  const Layer& last = net.layers.back();
  std::fill(net.params.begin() + last.weight_offset, net.params.end(), 0.0);
}

inline std::vector<double> flatten_params(const Network& net) { return net.params; }

inline void unflatten_params(Network& net, const std::vector<double>& theta) {
  if (theta.size() != net.param_count())
    throw std::invalid_argument("unflatten_params: length " + std::to_string(theta.size()) +
                                " != param_count " + std::to_string(net.param_count()));
  net.params = theta;
}

}  // namespace podminn
