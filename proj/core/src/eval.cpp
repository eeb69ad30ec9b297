#include "diffopt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "diffopt/baselines.hpp"

namespace diffopt {

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616c;  // "eval"

}  // namespace

EvalSettings eval_settings(const RunConfig& config) {
  return EvalSettings{config.eval.num_tasks, config.eval.ways, config.eval.shots, config.eval.queries_per_class,
                      config.eval.strict, config.eval.threads};
}

Interval confidence_interval(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("confidence_interval: no values");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

std::pair<TaskEpisode, Rng> eval_task(const ClassWorld& world, const EvalSettings& settings,
                                      std::uint64_t master_seed, int index) {
  Rng rng = Rng::derive(master_seed, kEvalStream, static_cast<std::uint64_t>(index));
  TaskEpisode ep =
      sample_episode(world, Split::novel, settings.ways, settings.shots, settings.queries_per_class, rng);
  return {std::move(ep), std::move(rng)};
}

EvalReport evaluate(const Adaptor& adaptor, const ClassWorld& world, const EvalSettings& settings,
                    std::uint64_t master_seed) {
  if (settings.num_tasks < 1) throw std::invalid_argument("evaluate: num_tasks must be >= 1");
  if (settings.threads < 1) throw std::invalid_argument("evaluate: threads must be >= 1");
  const auto n = static_cast<std::size_t>(settings.num_tasks);
  // One slot per task; workers stride over the indices so the result does
  // not depend on scheduling.
  std::vector<double> acc(n, 0.0);
  std::vector<std::string> error(n);
  std::vector<char> failed(n, 0);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      auto [episode, rng] = eval_task(world, settings, master_seed, static_cast<int>(i));
      try {
        const ClassifierWeights w = adaptor(episode.support_only(), rng);
        acc[i] = accuracy(w, episode.query);
      } catch (const std::exception& e) {
        failed[i] = 1;
        error[i] = e.what();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(settings.threads), n);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  EvalReport report;
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) {
      ++report.excluded;
      report.failures.push_back("task " + std::to_string(i) + ": " + error[i]);
    } else {
      report.per_task_acc.push_back(acc[i]);
    }
  }
  report.num_tasks = static_cast<int>(report.per_task_acc.size());
  if (report.num_tasks == 0) {
    report.valid = false;
    return report;
  }
  const Interval ci = confidence_interval(report.per_task_acc);
  report.mean_acc = ci.mean;
  report.ci95_half_width = ci.half_width;
  report.valid = !(settings.strict && report.excluded > 0);
  return report;
}

ConvergenceReport convergence_report(const MetaOptimizer& model, const ClassWorld& world,
                                     const EvalSettings& settings, const DiffusionSchedule& sched,
                                     std::uint64_t master_seed, int draws) {
  if (draws < 1) throw std::invalid_argument("convergence_report: draws must be >= 1");
  const auto length = static_cast<std::size_t>(sched.steps()) + 1;
  ConvergenceReport out;
  out.accuracy.assign(length, 0.0);
  out.loss.assign(length, 0.0);
  for (std::size_t k = 0; k < length; ++k) out.t.push_back(sched.steps() - static_cast<int>(k));

  for (int i = 0; i < settings.num_tasks; ++i) {
    auto [episode, rng] = eval_task(world, settings, master_seed, i);
    TaskEpisode support = episode.support_only();
    if (draws == 1) {
      const DenoiseTrajectory traj = sample_trajectory(model, support, sched, rng);
      for (std::size_t k = 0; k < length; ++k) {
        out.accuracy[k] += accuracy(traj.weights[k], episode.query);
        out.loss[k] += cross_entropy(traj.weights[k], episode.query, false).loss;
      }
      continue;
    }
    // Same averaging as the metadiff adaptor, applied at every step.
    std::vector<Matrix> sums(length, Matrix::Zero(support.ways, support.dim));
    for (int d = 0; d < draws; ++d) {
      DenoiseTrajectory traj = sample_trajectory(model, support, sched, rng);
      for (std::size_t k = 0; k < length; ++k) {
        if (model.kind == ClassifierKind::cosine) traj.weights[k].w.rowwise().normalize();
        sums[k] += traj.weights[k].w;
      }
    }
    for (std::size_t k = 0; k < length; ++k) {
      const ClassifierWeights avg{sums[k] / draws, model.kind, model.temperature};
      out.accuracy[k] += accuracy(avg, episode.query);
      out.loss[k] += cross_entropy(avg, episode.query, false).loss;
    }
  }
  for (std::size_t k = 0; k < length; ++k) {
    out.accuracy[k] /= settings.num_tasks;
    out.loss[k] /= settings.num_tasks;
  }
  out.num_tasks = settings.num_tasks;
  return out;
}

Adaptor make_adaptor(const RunConfig& config, const MetaOptimizer* model, const DiffusionSchedule* sched) {
  const auto kind = config.model.classifier;
  const double temperature = config.model.temperature;
  const BaselineConfig bc = config.baseline;
  switch (config.adaptor) {
    case AdaptorKind::gda:
      return [=](const TaskEpisode& ep, Rng& rng) {
        return gda_adapt(ep, bc.steps, bc.lr, initial_weights(ep, kind, temperature, bc.init, rng));
      };
    case AdaptorKind::momentum_gda:
      return [=](const TaskEpisode& ep, Rng& rng) {
        return momentum_gda_adapt(ep, bc.steps, bc.lr, bc.momentum,
                                  initial_weights(ep, kind, temperature, bc.init, rng));
      };
    case AdaptorKind::metadiff:
      break;
  }
  if (model == nullptr || sched == nullptr) {
    throw std::invalid_argument("metadiff adaptor needs a trained model and its schedule");
  }
  const int draws = config.eval.draws;
  return [model, sched, draws](const TaskEpisode& ep, Rng& rng) {
    if (draws == 1) return sample_weights(*model, ep, *sched, rng);
    ClassifierWeights sum{Matrix::Zero(ep.ways, ep.dim), model->kind, model->temperature};
    for (int k = 0; k < draws; ++k) {
      ClassifierWeights w = sample_weights(*model, ep, *sched, rng);
      if (model->kind == ClassifierKind::cosine) w.w.rowwise().normalize();
      sum.w += w.w;
    }
    sum.w /= draws;
    return sum;
  };
}

}  // namespace diffopt
