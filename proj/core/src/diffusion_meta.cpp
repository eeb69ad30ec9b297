#include "diffopt/diffusion_meta.hpp"

#include <cmath>
#include <string>

namespace diffopt {

namespace {

constexpr double kDivergenceBound = 1e6;
constexpr std::uint64_t kTrainStream = 0x747261696e;  // "train"

void check_weights(const Matrix& w, int t) {
  for (Index i = 0; i < w.size(); ++i) {
    const double v = w.data()[i];
    if (!std::isfinite(v) || std::abs(v) > kDivergenceBound) {
      throw NumericalError("denoising diverged at t=" + std::to_string(t) + " (|w| entry " + std::to_string(v) + ")");
    }
  }
}

template <class OnStep>
ClassifierWeights denoise(const MetaOptimizer& model, const TaskEpisode& support, const DiffusionSchedule& sched,
                          Rng& rng, OnStep on_step) {
  ClassifierWeights w{rng.normal_matrix(support.ways, support.dim), model.kind, model.temperature};
  on_step(w);
  for (int t = sched.steps(); t >= 1; --t) {
    const Matrix eps_hat = predict_noise(model.params, model.options, w, support, t, sched);
    w.w = denoise_step(w.w, eps_hat, t, sched);
    check_weights(w.w, t);
    on_step(w);
  }
  return w;
}

}  // namespace

TrainStepRecord train_step(NoisePredictorParams& params, const TcunetOptions& opts, AdamState& adam,
                           const TaskEpisode& episode, const ClassifierWeights& w0_target,
                           const DiffusionSchedule& sched, Rng& rng) {
  if (w0_target.ways() != episode.ways || w0_target.dim() != episode.dim) {
    throw std::invalid_argument("train_step: target weights must be ways x dim");
  }
  const int t = rng.uniform_int(1, sched.steps());
  const Matrix eps = rng.normal_matrix(episode.ways, episode.dim);

  NoiseLoss nl = loss_and_param_grads(params, opts, w0_target, episode, t, eps, sched);
  const Vector grads = nl.grads.flatten();
  Vector flat = params.flatten();
  adam_update(flat, grads, adam);
  params.assign(flat);
  return TrainStepRecord{adam.step, t, nl.loss, grads.norm()};
}

TrainerState initial_state(const RunConfig& config) {
  TrainerState state;
  state.params = NoisePredictorParams::init(config.world.dim, config.seed);
  state.adam = AdamState(state.params.parameter_count(),
                         AdamConfig{.lr = config.train.lr, .weight_decay = config.train.weight_decay});
  state.rng = Rng::derive(config.seed, kTrainStream);
  return state;
}

MetaOptimizer meta_optimizer(const RunConfig& config, const NoisePredictorParams& params) {
  return MetaOptimizer{params, TcunetOptions{config.model.skips, config.model.grad_normalize},
                       config.model.classifier, config.model.temperature};
}

TrainingTask sample_training_task(const RunConfig& config, const ClassWorld& world, Rng& rng) {
  const auto& tc = config.train;
  TrainingTask task;
  task.episode = sample_episode(world, Split::base, tc.ways, tc.shots, 0, rng);
  const AuxiliaryDataset aux = auxiliary_dataset(world, task.episode, tc.aux_per_class, rng);
  task.target = target_weights(task.episode, aux, config.model.classifier, config.model.temperature,
                               tc.target_steps, tc.target_lr);
  if (tc.target_norm > 0.0) {
    task.target.w.rowwise().normalize();
    task.target.w *= tc.target_norm;
  }
  return task;
}

void train(const RunConfig& config, const ClassWorld& world, TrainerState& state, const TrainHooks& hooks) {
  const auto sched =
      DiffusionSchedule::linear(config.schedule.steps, config.schedule.beta_start, config.schedule.beta_end);
  const TcunetOptions opts{config.model.skips, config.model.grad_normalize};
  const auto& tc = config.train;

  while (state.step < tc.steps) {
    const TrainingTask task = sample_training_task(config, world, state.rng);
    TrainStepRecord rec = train_step(state.params, opts, state.adam, task.episode, task.target, sched, state.rng);
    state.step += 1;
    rec.step = state.step;
    if (hooks.on_record) hooks.on_record(rec);

    const bool last = state.step == tc.steps;
    if (hooks.on_checkpoint && (last || (tc.checkpoint_interval > 0 && state.step % tc.checkpoint_interval == 0))) {
      hooks.on_checkpoint(state);
    }
    if (hooks.on_eval && tc.eval_interval > 0 && state.step % tc.eval_interval == 0) hooks.on_eval(state);
  }
}

ClassifierWeights sample_weights(const MetaOptimizer& model, const TaskEpisode& support,
                                 const DiffusionSchedule& sched, Rng& rng) {
  return denoise(model, support, sched, rng, [](const ClassifierWeights&) {});
}

DenoiseTrajectory sample_trajectory(const MetaOptimizer& model, const TaskEpisode& episode,
                                    const DiffusionSchedule& sched, Rng& rng) {
  DenoiseTrajectory traj;
  traj.weights.reserve(static_cast<std::size_t>(sched.steps()) + 1);
  const bool scored = episode.query.size() > 0;
  denoise(model, episode, sched, rng, [&](const ClassifierWeights& w) {
    traj.weights.push_back(w);
    if (scored) {
      traj.query_accuracy.push_back(accuracy(w, episode.query));
      traj.query_loss.push_back(cross_entropy(w, episode.query, false).loss);
    }
  });
  return traj;
}

}  // namespace diffopt
