#include "diffopt/baselines.hpp"

#include <cmath>
#include <string>

namespace diffopt {

ClassifierWeights initial_weights(const TaskEpisode& episode, ClassifierKind kind, double temperature, InitMode init,
                                  Rng& rng) {
  Matrix w = init == InitMode::zeros ? Matrix(Matrix::Zero(episode.ways, episode.dim))
                                     : rng.normal_matrix(episode.ways, episode.dim);
  return ClassifierWeights{std::move(w), kind, temperature};
}

ClassifierWeights gda_adapt(const TaskEpisode& episode, int steps, double lr, ClassifierWeights init) {
  if (steps < 0) throw std::invalid_argument("gda: steps must be >= 0");
  ClassifierWeights w = std::move(init);
  const CrossEntropyObjective objective(episode.support, w.kind);
  for (int s = 0; s < steps; ++s) {
    LossAndGrad lg = objective(w, true);
    if (!std::isfinite(lg.loss)) {
      throw NumericalError("gda: non-finite support loss at step " + std::to_string(s));
    }
    w.w -= lr * lg.grad;
  }
  return w;
}

ClassifierWeights momentum_gda_adapt(const TaskEpisode& episode, int steps, double lr, double momentum,
                                     ClassifierWeights init) {
  if (steps < 0) throw std::invalid_argument("gda: steps must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("gda: momentum must lie in [0, 1)");
  ClassifierWeights w = std::move(init);
  Matrix velocity = Matrix::Zero(w.ways(), w.dim());
  const CrossEntropyObjective objective(episode.support, w.kind);
  for (int s = 0; s < steps; ++s) {
    LossAndGrad lg = objective(w, true);
    if (!std::isfinite(lg.loss)) {
      throw NumericalError("gda: non-finite support loss at step " + std::to_string(s));
    }
    velocity = momentum * velocity + lg.grad;
    w.w -= lr * velocity;
  }
  return w;
}

}  // namespace diffopt
