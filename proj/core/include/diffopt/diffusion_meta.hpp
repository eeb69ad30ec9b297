#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffopt/config.hpp"
#include "diffopt/dense.hpp"
#include "diffopt/rng.hpp"
#include "diffopt/schedule.hpp"
#include "diffopt/task_world.hpp"
#include "diffopt/tcunet.hpp"

namespace diffopt {

struct TrainStepRecord {
  std::int64_t step = 0;
  int t = 0;
  double mse_loss = 0.0;
  double grad_norm = 0.0;

  bool operator==(const TrainStepRecord&) const = default;
};

/// A trained (or untrained) denoiser together with the classifier head it
/// produces weights for.
struct MetaOptimizer {
  NoisePredictorParams params;
  TcunetOptions options;
  ClassifierKind kind = ClassifierKind::cosine;
  double temperature = 10.0;
};

/// One diffusion training step: draws t ~ U{1..T}, then eps ~ N(0, I)
/// (N x d, in that order from rng), and applies one Adam update to params.
TrainStepRecord train_step(NoisePredictorParams& params, const TcunetOptions& opts, AdamState& adam,
                           const TaskEpisode& episode, const ClassifierWeights& w0_target,
                           const DiffusionSchedule& sched, Rng& rng);

/// Everything that evolves during training. Together with the RunConfig
/// this is what a checkpoint stores.
struct TrainerState {
  NoisePredictorParams params;
  AdamState adam;
  std::int64_t step = 0;
  Rng rng;
};

/// Fresh state for a config: parameters seeded from config.seed, zeroed
/// Adam moments, training stream at its origin.
TrainerState initial_state(const RunConfig& config);

MetaOptimizer meta_optimizer(const RunConfig& config, const NoisePredictorParams& params);

/// Draws one training task from the base split and its diffusion target.
/// Stream order: episode, auxiliary set.
struct TrainingTask {
  TaskEpisode episode;
  ClassifierWeights target;
};
TrainingTask sample_training_task(const RunConfig& config, const ClassWorld& world, Rng& rng);

struct TrainHooks {
  std::function<void(const TrainStepRecord&)> on_record;
  // Called after every checkpoint_interval-th step and after the last step.
  std::function<void(const TrainerState&)> on_checkpoint;
  // Called after every eval_interval-th step.
  std::function<void(const TrainerState&)> on_eval;
};

/// Meta-training loop: per step, a training task then train_step, all from
/// state.rng. Runs until state.step == config.train.steps, so a state
/// restored from a checkpoint resumes exactly where it stopped.
void train(const RunConfig& config, const ClassWorld& world, TrainerState& state, const TrainHooks& hooks = {});

/// Deterministic denoising from w_T ~ N(0, I) (drawn from rng) down to w_0.
/// Throws NumericalError naming t if any entry becomes non-finite or
/// exceeds 1e6 in magnitude.
ClassifierWeights sample_weights(const MetaOptimizer& model, const TaskEpisode& support,
                                 const DiffusionSchedule& sched, Rng& rng);

struct DenoiseTrajectory {
  // weights[k] is w_{T-k}: weights.front() is w_T, weights.back() is w_0.
  std::vector<ClassifierWeights> weights;
  // Query accuracy and loss for each entry of weights (empty without queries).
  std::vector<double> query_accuracy;
  std::vector<double> query_loss;
};

/// Same draws and steps as sample_weights, keeping every intermediate.
DenoiseTrajectory sample_trajectory(const MetaOptimizer& model, const TaskEpisode& episode,
                                    const DiffusionSchedule& sched, Rng& rng);

}  // namespace diffopt
