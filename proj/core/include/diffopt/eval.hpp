#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diffopt/diffusion_meta.hpp"
#include "diffopt/task_world.hpp"

namespace diffopt {

/// Maps a support-only episode to classifier weights. rng is the task's own
/// stream, already advanced past the episode draw.
using Adaptor = std::function<ClassifierWeights(const TaskEpisode& support, Rng& rng)>;

struct EvalSettings {
  int num_tasks = 600;
  int ways = 5;
  int shots = 1;
  int queries_per_class = 15;
  bool strict = false;
  // Worker threads; reports are identical for any value.
  int threads = 1;
};

EvalSettings eval_settings(const RunConfig& config);

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
};

/// Normal-approximation 95% interval: mean +- 1.96 s / sqrt(n) with the
/// n - 1 sample standard deviation. A single value gives half width 0.
Interval confidence_interval(std::span<const double> values);

struct EvalReport {
  int num_tasks = 0;
  double mean_acc = 0.0;
  double ci95_half_width = 0.0;
  std::vector<double> per_task_acc;
  // Tasks whose adaptor threw; excluded from the statistics.
  int excluded = 0;
  std::vector<std::string> failures;
  // False when strict and excluded > 0, or when every task failed.
  bool valid = true;
};

/// Episode i and everything the adaptor draws for it come from
/// Rng::derive(master_seed, eval stream, i), so reports do not depend on
/// evaluation order.
EvalReport evaluate(const Adaptor& adaptor, const ClassWorld& world, const EvalSettings& settings,
                    std::uint64_t master_seed);

/// Novel-split episode for task i under master_seed, plus the task stream
/// positioned just after it.
std::pair<TaskEpisode, Rng> eval_task(const ClassWorld& world, const EvalSettings& settings,
                                      std::uint64_t master_seed, int index);

struct ConvergenceReport {
  std::vector<int> t;  // T, T-1, ..., 0
  std::vector<double> accuracy;
  std::vector<double> loss;
  int num_tasks = 0;
};

/// Query accuracy and loss along the denoising path, averaged over tasks.
/// With draws > 1 each step scores the average of that many trajectories,
/// as the metadiff adaptor does, so the last entry equals evaluate().
ConvergenceReport convergence_report(const MetaOptimizer& model, const ClassWorld& world,
                                     const EvalSettings& settings, const DiffusionSchedule& sched,
                                     std::uint64_t master_seed, int draws = 1);

/// Adaptor for config.adaptor. The metadiff adaptor needs model and sched
/// (they must outlive the adaptor); the baselines ignore them.
Adaptor make_adaptor(const RunConfig& config, const MetaOptimizer* model, const DiffusionSchedule* sched);

}  // namespace diffopt
