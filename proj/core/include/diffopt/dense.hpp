#pragma once

#include <cstdint>
#include <functional>

#include "diffopt/rng.hpp"
#include "diffopt/types.hpp"

namespace diffopt {

/// Affine layer y = weight * x + bias. Inputs are batched column-wise: an
/// in_dim x B matrix maps to an out_dim x B matrix.
struct DenseLayer {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim

  /// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero bias.
  static DenseLayer glorot(Index in_dim, Index out_dim, Rng& rng);
  static DenseLayer zeros(Index in_dim, Index out_dim);

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

struct DenseGrads {
  Matrix weight;
  Vector bias;
  Matrix input;
};

Matrix dense_forward(const DenseLayer& layer, const Matrix& x);
/// Reverse-mode gradients of sum(grad_out .* dense_forward(layer, x)).
DenseGrads dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out);

Matrix relu_forward(const Matrix& x);
/// Passes grad_out where x > 0; the subgradient at exactly 0 is 0.
Matrix relu_backward(const Matrix& x, const Matrix& grad_out);

/// Sinusoidal encoding: entry 2i = sin(t / 10000^(2i/dim)), entry 2i+1 = cos(same).
Vector timestep_embedding(int t, int dim);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 5e-4;
};

struct AdamState {
  AdamState() = default;
  AdamState(Index size, AdamConfig cfg)
      : m(Vector::Zero(size)), v(Vector::Zero(size)), config(cfg) {}

  Vector m;
  Vector v;
  std::int64_t step = 0;
  AdamConfig config;
};

/// One bias-corrected Adam step with decoupled weight decay
/// (params -= lr * weight_decay * params first). Throws NumericalError and
/// leaves params and state untouched if any gradient entry is non-finite.
void adam_update(Vector& params, const Vector& grads, AdamState& state);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& params,
                                  double h);

}  // namespace diffopt
