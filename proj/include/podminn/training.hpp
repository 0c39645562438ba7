#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "podminn/minn.hpp"
#include "podminn/pod.hpp"
#include "podminn/rng.hpp"
#include "podminn/vec.hpp"

namespace podminn {

struct DataSplit {
  std::vector<int> train_indices;
  std::vector<int> valid_indices;
  std::vector<int> test_indices;
};

/// Deterministic Fisher-Yates shuffle of 0..N-1, then contiguous assignment
/// of the requested sizes.
inline DataSplit make_split(int n, int train_size, int valid_size, int test_size,
                            std::uint64_t rng_seed) {
  if (train_size < 0 || valid_size < 0 || test_size < 0 || train_size + valid_size + test_size > n)
    throw std::invalid_argument("make_split: sizes oversubscribe the sample count");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  Rng rng(rng_seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  DataSplit split;
  split.train_indices.assign(perm.begin(), perm.begin() + train_size);
  split.valid_indices.assign(perm.begin() + train_size, perm.begin() + train_size + valid_size);
  split.test_indices.assign(perm.begin() + train_size + valid_size,
                            perm.begin() + train_size + valid_size + test_size);
  return split;
}

struct TrainConfig {
  enum class Optimizer { lbfgs, adam };

  Optimizer optimizer = Optimizer::lbfgs;
  double learning_rate = 1.0;  // initial L-BFGS step / Adam step size
  int max_epochs = 250;
  int lbfgs_history = 10;
  int early_stop_window = 2;
  bool inf_norm_term = false;  // closure loss only
  std::uint64_t rng_seed = 0;
};

/// True iff over the last `window` epoch transitions the training error
/// strictly decreased while the validation error strictly increased.
inline bool early_stop_check(const Vec& train_history, const Vec& valid_history, int window) {
  if (train_history.size() != valid_history.size())
    throw std::invalid_argument("early_stop_check: history length mismatch");
  if (static_cast<int>(train_history.size()) < window + 1)
    throw std::invalid_argument("early_stop_check: history shorter than window+1");
  const std::size_t n = train_history.size();
  for (int k = 0; k < window; ++k) {
    const std::size_t i = n - 1 - k;
    if (!(train_history[i] < train_history[i - 1])) return false;
    if (!(valid_history[i] > valid_history[i - 1])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Loss functions. Both losses are means of (non-squared) residual 2-norms,
// smoothed at the origin as sqrt(|r|^2 + eps^2) with eps = 1e-12 so the
// gradient is defined everywhere. The closure loss optionally adds a smooth
// max-norm term: softmax with sharpness beta = 50 over sqrt(r_j^2 + eps^2).
// ---------------------------------------------------------------------------

inline constexpr double kLossEpsilon = 1e-12;
inline constexpr double kSoftmaxSharpness = 50.0;

namespace detail {

/// Samples per block in the batched loss evaluation. Fixed (never derived
/// from the thread count or data size) because changing it would change the
/// floating-point summation order of the gradients.
inline constexpr int kSampleBlock = 32;

/// Block-major activations: value of node i for in-block sample s lives at
/// [i * block + s], so per-node sample runs are contiguous.
struct LossWorkspace {
  std::vector<Vec> post;  // per layer, out_dim x block
  Vec input;              // in_dim x block
  Vec delta;              // current layer, out_dim x block
  Vec delta_next;
};

inline void layer_affine_block(const Network& net, int l, const double* below, double* z,
                               int bs) {
  const Layer& layer = net.layers[l];
  const double* w = net.weights(l);
  const double* b = net.bias(l);
  if (layer.kind == Layer::Kind::dense) {
    const int in = layer.in_dim;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < layer.out_dim; ++i) {
      double* zi = z + static_cast<std::size_t>(i) * kSampleBlock;
      for (int s = 0; s < bs; ++s) zi[s] = b[i];
      const double* wi = w + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) {
        const double wij = wi[j];
        const double* xj = below + static_cast<std::size_t>(j) * kSampleBlock;
        for (int s = 0; s < bs; ++s) zi[s] += wij * xj[s];
      }
    }
  } else {
    const auto& pat = layer.pattern;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < layer.out_dim; ++i) {
      double* zi = z + static_cast<std::size_t>(i) * kSampleBlock;
      for (int s = 0; s < bs; ++s) zi[s] = b[i];
      for (int p = pat.row_ptr[i]; p < pat.row_ptr[i + 1]; ++p) {
        const double wij = w[p];
        const double* xj = below + static_cast<std::size_t>(pat.col_idx[p]) * kSampleBlock;
        for (int s = 0; s < bs; ++s) zi[s] += wij * xj[s];
      }
    }
  }
}

/// Mean over `indices` of smoothed residual norms between net(inputs[:,i])
/// and targets[:,i], plus the optional soft max-norm term. Targets and
/// inputs are column-major. Accumulates exact gradients of the smoothed
/// objective when `gradient` is non-null.
///
/// Samples are processed in fixed-size blocks so the weight-gradient buffer
/// is touched once per block instead of once per sample and the inner loops
/// run contiguously over the in-block samples. Blocks are sequential and all
/// parallel loops assign each output element to exactly one iteration, so
/// results are bitwise independent of the thread count.
inline double regression_loss(const Network& net, const double* inputs, int input_dim,
                              const double* targets, int target_dim,
                              const std::vector<int>& indices, bool inf_norm_term,
                              std::vector<double>* gradient) {
  if (indices.empty()) throw std::invalid_argument("loss: empty index set");
  if (net.in_dim() != input_dim || net.out_dim() != target_dim)
    throw std::invalid_argument("loss: network dimensions do not match the data");
  if (gradient) gradient->assign(net.param_count(), 0.0);

  const int n_layers = static_cast<int>(net.layers.size());
  const double inv_n = 1.0 / static_cast<double>(indices.size());

  LossWorkspace ws;
  ws.input.resize(static_cast<std::size_t>(input_dim) * kSampleBlock);
  ws.post.resize(n_layers);
  for (int l = 0; l < n_layers; ++l)
    ws.post[l].resize(static_cast<std::size_t>(net.layers[l].out_dim) * kSampleBlock);
  if (gradient) {
    std::size_t max_dim = static_cast<std::size_t>(target_dim);
    for (const Layer& l : net.layers) max_dim = std::max(max_dim, static_cast<std::size_t>(l.in_dim));
    ws.delta.resize(max_dim * kSampleBlock);
    ws.delta_next.resize(max_dim * kSampleBlock);
  }

  double total = 0.0;
  Vec soft(target_dim);
  for (std::size_t block_start = 0; block_start < indices.size();
       block_start += kSampleBlock) {
    const int bs = static_cast<int>(
        std::min<std::size_t>(kSampleBlock, indices.size() - block_start));

    for (int s = 0; s < bs; ++s) {
      const double* x = inputs + static_cast<std::size_t>(indices[block_start + s]) * input_dim;
      for (int j = 0; j < input_dim; ++j)
        ws.input[static_cast<std::size_t>(j) * kSampleBlock + s] = x[j];
    }

    for (int l = 0; l < n_layers; ++l) {
      const Layer& layer = net.layers[l];
      double* z = ws.post[l].data();
      layer_affine_block(net, l, l == 0 ? ws.input.data() : ws.post[l - 1].data(), z, bs);
      if (layer.activation != Activation::identity) {
        const std::size_t count = static_cast<std::size_t>(layer.out_dim) * kSampleBlock;
#pragma omp parallel for schedule(static)
        for (std::size_t k = 0; k < count; ++k)
          z[k] = apply_activation(layer.activation, layer.activation_scale, z[k]);
      }
    }

    // Per-sample loss terms and the seed gradient dL/dy, in sample order.
    const Vec& y = ws.post[n_layers - 1];
    for (int s = 0; s < bs; ++s) {
      const double* t =
          targets + static_cast<std::size_t>(indices[block_start + s]) * target_dim;
      double sq = 0.0;
      for (int j = 0; j < target_dim; ++j) {
        const double r = t[j] - y[static_cast<std::size_t>(j) * kSampleBlock + s];
        sq += r * r;
        if (inf_norm_term) soft[j] = std::sqrt(r * r + kLossEpsilon * kLossEpsilon);
      }
      const double smooth = std::sqrt(sq + kLossEpsilon * kLossEpsilon);
      total += smooth;

      double lse = 0.0, shift = 0.0;
      if (inf_norm_term) {
        for (int j = 0; j < target_dim; ++j) shift = std::max(shift, soft[j]);
        for (int j = 0; j < target_dim; ++j) lse += std::exp(kSoftmaxSharpness * (soft[j] - shift));
        total += shift + std::log(lse) / kSoftmaxSharpness;
      }

      if (gradient) {
        for (int j = 0; j < target_dim; ++j) {
          const double yj = y[static_cast<std::size_t>(j) * kSampleBlock + s];
          const double r = t[j] - yj;
          double g = -r / smooth * inv_n;
          if (inf_norm_term) {
            const double sj = soft[j];
            const double wj = std::exp(kSoftmaxSharpness * (sj - shift)) / lse;
            g += -wj * r / sj * inv_n;
          }
          ws.delta[static_cast<std::size_t>(j) * kSampleBlock + s] = g;
        }
      }
    }
    if (!gradient) continue;

    // Reverse sweep over the block.
    for (int l = n_layers - 1; l >= 0; --l) {
      const Layer& layer = net.layers[l];
      const Vec& post = ws.post[l];
      double* delta = ws.delta.data();
      if (layer.activation != Activation::identity) {
        const std::size_t count = static_cast<std::size_t>(layer.out_dim) * kSampleBlock;
#pragma omp parallel for schedule(static)
        for (std::size_t k = 0; k < count; ++k)
          delta[k] *= activation_derivative(layer.activation, layer.activation_scale, post[k]);
      }

      const double* below = l == 0 ? ws.input.data() : ws.post[l - 1].data();
      double* gw = gradient->data() + layer.weight_offset;
      double* gb = gradient->data() + layer.bias_offset;
      const double* w = net.params.data() + layer.weight_offset;

      if (layer.kind == Layer::Kind::dense) {
        const int in = layer.in_dim;
#pragma omp parallel for schedule(static)
        for (int i = 0; i < layer.out_dim; ++i) {
          const double* di = delta + static_cast<std::size_t>(i) * kSampleBlock;
          double* gwi = gw + static_cast<std::size_t>(i) * in;
          for (int j = 0; j < in; ++j) {
            const double* xj = below + static_cast<std::size_t>(j) * kSampleBlock;
            double acc = 0.0;
            for (int s = 0; s < bs; ++s) acc += di[s] * xj[s];
            gwi[j] += acc;
          }
          double bacc = 0.0;
          for (int s = 0; s < bs; ++s) bacc += di[s];
          gb[i] += bacc;
        }
      } else {
        const auto& pat = layer.pattern;
#pragma omp parallel for schedule(static)
        for (int i = 0; i < layer.out_dim; ++i) {
          const double* di = delta + static_cast<std::size_t>(i) * kSampleBlock;
          for (int p = pat.row_ptr[i]; p < pat.row_ptr[i + 1]; ++p) {
            const double* xj = below + static_cast<std::size_t>(pat.col_idx[p]) * kSampleBlock;
            double acc = 0.0;
            for (int s = 0; s < bs; ++s) acc += di[s] * xj[s];
            gw[p] += acc;
          }
          double bacc = 0.0;
          for (int s = 0; s < bs; ++s) bacc += di[s];
          gb[i] += bacc;
        }
      }

      if (l == 0) break;
      double* next = ws.delta_next.data();
      if (layer.kind == Layer::Kind::dense) {
        const int in = layer.in_dim;
#pragma omp parallel for schedule(static)
        for (int j = 0; j < in; ++j) {
          double* nj = next + static_cast<std::size_t>(j) * kSampleBlock;
          for (int s = 0; s < bs; ++s) nj[s] = 0.0;
          for (int i = 0; i < layer.out_dim; ++i) {
            const double wij = w[static_cast<std::size_t>(i) * in + j];
            const double* di = delta + static_cast<std::size_t>(i) * kSampleBlock;
            for (int s = 0; s < bs; ++s) nj[s] += wij * di[s];
          }
        }
      } else {
        const auto& pat = layer.pattern;
#pragma omp parallel for schedule(static)
        for (int j = 0; j < layer.in_dim; ++j) {
          double* nj = next + static_cast<std::size_t>(j) * kSampleBlock;
          for (int s = 0; s < bs; ++s) nj[s] = 0.0;
          for (int t = pat.col_ptr[j]; t < pat.col_ptr[j + 1]; ++t) {
            const double wij = w[pat.t_pos[t]];
            const double* di = delta + static_cast<std::size_t>(pat.t_row[t]) * kSampleBlock;
            for (int s = 0; s < bs; ++s) nj[s] += wij * di[s];
          }
        }
      }
      std::swap(ws.delta, ws.delta_next);
    }
  }
  return total * inv_n;
}

}  // namespace detail

/// Coefficient-regression loss: mean over the index set of
/// |V^T S(:,i) - net(micro(:,i))|_2, smoothed. The targets V^T S are
/// recomputed here; training drivers precompute them once instead.
inline std::pair<double, std::vector<double>> loss_rb(const Network& net,
                                                      const ReducedBasis& basis, int n_rb,
                                                      const SnapshotMatrix& snapshots,
                                                      const std::vector<int>& indices) {
  std::vector<double> targets(static_cast<std::size_t>(n_rb) * snapshots.sample_count, 0.0);
  for (int i : indices) {
    const Vec c = project(basis, n_rb, snapshots.column_vec(i));
    std::copy(c.begin(), c.end(), targets.begin() + static_cast<std::size_t>(i) * n_rb);
  }
  std::vector<double> gradient;
  const double value = detail::regression_loss(net, snapshots.micro_inputs.data(),
                                               snapshots.dof_count, targets.data(), n_rb,
                                               indices, false, &gradient);
  return {value, std::move(gradient)};
}

/// Closure loss over precomputed residual targets
/// r_i = S(:,i) - V * coeff_net(micro(:,i)) held frozen during training.
inline std::pair<double, std::vector<double>> loss_closure(const Network& closure_net,
                                                           const std::vector<double>& residual_targets,
                                                           const std::vector<double>& micro_inputs,
                                                           int dof_count,
                                                           const std::vector<int>& indices,
                                                           bool inf_norm_term) {
  if (residual_targets.size() != micro_inputs.size())
    throw std::invalid_argument("loss_closure: residuals/inputs size mismatch");
  std::vector<double> gradient;
  const double value =
      detail::regression_loss(closure_net, micro_inputs.data(), dof_count,
                              residual_targets.data(), dof_count, indices, inf_norm_term,
                              &gradient);
  return {value, std::move(gradient)};
}

// ---------------------------------------------------------------------------
// Full-batch minimization.
// ---------------------------------------------------------------------------

/// Objective: returns the value at theta; fills the gradient when the
/// pointer is non-null.
using Objective = std::function<double(const std::vector<double>&, std::vector<double>*)>;
using ValueFn = std::function<double(const std::vector<double>&)>;

struct EpochRecord {
  int epoch = 0;
  double train = 0.0;
  double valid = 0.0;
  double step_size = 0.0;
  int backtracks = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
};

struct MinimizeResult {
  std::vector<double> theta;  // parameters of the best-validation epoch
  TrainingHistory history;
};

struct OptimizerFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_finite(double value, const std::vector<double>& gradient, int epoch) {
  if (!std::isfinite(value))
    throw OptimizerFailure("minimize: non-finite loss at epoch " + std::to_string(epoch));
  for (double g : gradient)
    if (!std::isfinite(g))
      throw OptimizerFailure("minimize: non-finite gradient at epoch " + std::to_string(epoch));
}

}  // namespace detail

/// Full-batch minimization with per-epoch validation tracking, early
/// stopping, and best-validation checkpointing.
///
/// L-BFGS uses the two-loop recursion with `lbfgs_history` pairs and a
/// backtracking Armijo line search (c1 = 1e-4, halving, at most 30
/// backtracks, initial step = learning_rate). A failed line search falls
/// back to a plain gradient step of length 1e-3; five consecutive failures
/// abort. A pair with nonpositive curvature resets the memory.
inline MinimizeResult minimize(const Objective& objective, std::vector<double> theta0,
                               const TrainConfig& config, const ValueFn& validation) {
  if (config.max_epochs < 1) throw std::invalid_argument("minimize: max_epochs must be >= 1");
  if (config.early_stop_window < 1)
    throw std::invalid_argument("minimize: early_stop_window must be >= 1");

  const std::size_t dim = theta0.size();
  std::vector<double> theta = std::move(theta0);
  std::vector<double> grad(dim);
  double value = objective(theta, &grad);
  detail::check_finite(value, grad, 0);

  MinimizeResult result;
  result.history.epochs.push_back({0, value, validation(theta), 0.0, 0});
  result.theta = theta;
  result.history.best_epoch = 0;
  double best_valid = result.history.epochs[0].valid;
  Vec train_hist{value}, valid_hist{best_valid};

  auto grad_inf = [](const std::vector<double>& g) {
    double m = 0.0;
    for (double v : g) m = std::max(m, std::abs(v));
    return m;
  };

  // Adam state (only touched when selected).
  std::vector<double> adam_m, adam_v;
  if (config.optimizer == TrainConfig::Optimizer::adam) {
    adam_m.assign(dim, 0.0);
    adam_v.assign(dim, 0.0);
  }

  // L-BFGS memory.
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y)
  std::deque<double> rho;
  std::vector<double> direction(dim), theta_try(dim), grad_new(dim);
  int consecutive_ls_failures = 0;

  auto vdot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (grad_inf(grad) <= 1e-16) break;  // already stationary

    double step = 0.0;
    int backtracks = 0;
    double value_new = value;
    bool have_new_grad = false;

    if (config.optimizer == TrainConfig::Optimizer::adam) {
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double bc1 = 1.0 - std::pow(b1, epoch);
      const double bc2 = 1.0 - std::pow(b2, epoch);
      for (std::size_t i = 0; i < dim; ++i) {
        adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * grad[i];
        adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
        theta[i] -= config.learning_rate * (adam_m[i] / bc1) /
                    (std::sqrt(adam_v[i] / bc2) + eps);
      }
      step = config.learning_rate;
      value_new = objective(theta, &grad_new);
      have_new_grad = true;
    } else {
      // Two-loop recursion.
      direction = grad;
      for (double& d : direction) d = -d;
      std::vector<double> alphas(memory.size());
      for (int k = static_cast<int>(memory.size()) - 1; k >= 0; --k) {
        alphas[k] = rho[k] * vdot(memory[k].first, direction);
        for (std::size_t i = 0; i < dim; ++i) direction[i] -= alphas[k] * memory[k].second[i];
      }
      if (!memory.empty()) {
        const auto& [s_last, y_last] = memory.back();
        const double gamma = vdot(s_last, y_last) / vdot(y_last, y_last);
        for (double& d : direction) d *= gamma;
      }
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const double beta = rho[k] * vdot(memory[k].second, direction);
        for (std::size_t i = 0; i < dim; ++i)
          direction[i] += (alphas[k] - beta) * memory[k].first[i];
      }

      double dir_deriv = vdot(grad, direction);
      if (dir_deriv >= 0.0) {
        // Not a descent direction: restart from steepest descent.
        memory.clear();
        rho.clear();
        direction = grad;
        for (double& d : direction) d = -d;
        dir_deriv = -vdot(grad, grad);
      }

      const double c1 = 1e-4;
      double alpha = config.learning_rate;
      bool accepted = false;
      for (backtracks = 0; backtracks <= 30; ++backtracks) {
        for (std::size_t i = 0; i < dim; ++i) theta_try[i] = theta[i] + alpha * direction[i];
        // The first trial usually succeeds, so ask for the gradient at once
        // and reuse it below; later trials are value-only probes.
        const bool with_grad = backtracks == 0;
        const double f_try =
            with_grad ? objective(theta_try, &grad_new) : objective(theta_try, nullptr);
        if (std::isfinite(f_try) && f_try <= value + c1 * alpha * dir_deriv) {
          accepted = true;
          have_new_grad = with_grad;
          value_new = f_try;
          step = alpha;
          break;
        }
        alpha *= 0.5;
      }

      if (accepted) {
        consecutive_ls_failures = 0;
        std::swap(theta, theta_try);
      } else {
        // Fallback: short gradient step; give up after five in a row.
        if (++consecutive_ls_failures >= 5)
          throw OptimizerFailure("minimize: line search failed 5 consecutive times at epoch " +
                                 std::to_string(epoch));
        const double gnorm = std::sqrt(vdot(grad, grad));
        for (std::size_t i = 0; i < dim; ++i) theta[i] -= 1e-3 * grad[i] / gnorm;
        memory.clear();
        rho.clear();
        step = 1e-3;
        have_new_grad = false;
      }

      if (!have_new_grad) value_new = objective(theta, &grad_new);
      if (accepted) {
        std::vector<double> s(dim), y(dim);
        for (std::size_t i = 0; i < dim; ++i) {
          s[i] = step * direction[i];
          y[i] = grad_new[i] - grad[i];
        }
        const double sy = vdot(s, y);
        if (sy > 1e-10 * std::sqrt(vdot(s, s)) * std::sqrt(vdot(y, y))) {
          memory.emplace_back(std::move(s), std::move(y));
          rho.push_back(1.0 / sy);
          if (static_cast<int>(memory.size()) > config.lbfgs_history) {
            memory.pop_front();
            rho.pop_front();
          }
        } else {
          // Armijo backtracking does not enforce the curvature condition, so
          // a nonpositive s'y can occur; dropping the whole memory instead of
          // skipping the pair avoids creeping along a stale model.
          memory.clear();
          rho.clear();
        }
      }
    }

    detail::check_finite(value_new, grad_new, epoch);
    grad = grad_new;
    value = value_new;

    const double valid_value = validation(theta);
    result.history.epochs.push_back({epoch, value, valid_value, step, backtracks});
    train_hist.push_back(value);
    valid_hist.push_back(valid_value);
    if (valid_value < best_valid) {
      best_valid = valid_value;
      result.theta = theta;
      result.history.best_epoch = epoch;
    }

    if (static_cast<int>(train_hist.size()) >= config.early_stop_window + 1 &&
        early_stop_check(train_hist, valid_hist, config.early_stop_window)) {
      result.history.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace podminn
