#include "diffopt/dense.hpp"

#include <cmath>
#include <string>

namespace diffopt {

DenseLayer DenseLayer::glorot(Index in_dim, Index out_dim, Rng& rng) {
  if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("dense layer dims must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  DenseLayer layer = zeros(in_dim, out_dim);
  for (Index r = 0; r < out_dim; ++r) {
    for (Index c = 0; c < in_dim; ++c) layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return layer;
}

DenseLayer DenseLayer::zeros(Index in_dim, Index out_dim) {
  if (in_dim <= 0 || out_dim <= 0) throw std::invalid_argument("dense layer dims must be positive");
  return DenseLayer{Matrix::Zero(out_dim, in_dim), Vector::Zero(out_dim)};
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
  if (x.rows() != layer.in_dim()) {
    throw std::invalid_argument("dense_forward: input has " + std::to_string(x.rows()) +
                                " rows, layer expects " + std::to_string(layer.in_dim()));
  }
  Matrix y = layer.weight * x;
  y.colwise() += layer.bias;
  return y;
}

DenseGrads dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& grad_out) {
  if (x.rows() != layer.in_dim() || grad_out.rows() != layer.out_dim() || x.cols() != grad_out.cols()) {
    throw std::invalid_argument("dense_backward: shape mismatch");
  }
  DenseGrads g;
  g.weight = grad_out * x.transpose();
  g.bias = grad_out.rowwise().sum();
  g.input = layer.weight.transpose() * grad_out;
  return g;
}

Matrix relu_forward(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  if (x.rows() != grad_out.rows() || x.cols() != grad_out.cols()) {
    throw std::invalid_argument("relu_backward: shape mismatch");
  }
  return (x.array() > 0.0).select(grad_out, 0.0);
}

Vector timestep_embedding(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("timestep_embedding: dim must be positive and even");
  if (t < 1) throw std::out_of_range("timestep_embedding: t must be >= 1");
  Vector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / static_cast<double>(dim));
    const double angle = static_cast<double>(t) / freq;
    e(2 * i) = std::sin(angle);
    e(2 * i + 1) = std::cos(angle);
  }
  return e;
}

void adam_update(Vector& params, const Vector& grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_update: shape mismatch");
  }
  for (Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads(i))) {
      throw NumericalError("adam_update: non-finite gradient at index " + std::to_string(i));
    }
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double k = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, k);
  const double bc2 = 1.0 - std::pow(c.beta2, k);

  params -= c.lr * c.weight_decay * params;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  params.array() -= c.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.epsilon);
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& params,
                                  double h) {
  Vector grad(params.size());
  Vector probe = params;
  for (Index i = 0; i < params.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + h;
    const double up = f(probe);
    probe(i) = orig - h;
    const double down = f(probe);
    probe(i) = orig;
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace diffopt
