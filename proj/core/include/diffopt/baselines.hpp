#pragma once

#include "diffopt/base_learner.hpp"
#include "diffopt/config.hpp"
#include "diffopt/rng.hpp"

namespace diffopt {

/// Starting weights for the GDA baselines: zeros or N(0, I) drawn from rng.
ClassifierWeights initial_weights(const TaskEpisode& episode, ClassifierKind kind, double temperature, InitMode init,
                                  Rng& rng);

/// Plain gradient descent on the support loss: w <- w - lr * grad.
/// Throws NumericalError on a non-finite loss.
ClassifierWeights gda_adapt(const TaskEpisode& episode, int steps, double lr, ClassifierWeights init);

/// Heavy-ball GDA: v <- momentum * v + grad, w <- w - lr * v, v starts at 0.
ClassifierWeights momentum_gda_adapt(const TaskEpisode& episode, int steps, double lr, double momentum,
                                     ClassifierWeights init);

}  // namespace diffopt
