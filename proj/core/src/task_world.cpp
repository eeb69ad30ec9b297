#include "diffopt/task_world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace diffopt {

ClassWorld make_world(int num_classes, int dim, double noise_scale, double base_fraction, std::uint64_t seed) {
  if (num_classes < 2 || dim < 1) throw std::invalid_argument("world: need >= 2 classes and dim >= 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw std::invalid_argument("world: noise_scale must be finite and >= 0");
  }
  if (!(base_fraction > 0.0 && base_fraction < 1.0)) {
    throw std::invalid_argument("world: base_fraction must lie in (0, 1)");
  }
  const int num_base = static_cast<int>(std::lround(base_fraction * num_classes));
  if (num_base < 1 || num_base >= num_classes) {
    throw std::invalid_argument("world: base_fraction leaves an empty split");
  }

  Rng rng = Rng::derive(seed, 0x776f726c64);  // "world"
  ClassWorld world;
  world.seed = seed;
  world.noise_scale = noise_scale;
  world.prototypes = rng.normal_matrix(num_classes, dim);
  for (Index k = 0; k < world.prototypes.rows(); ++k) world.prototypes.row(k).normalize();

  std::vector<int> order(static_cast<std::size_t>(num_classes));
  std::iota(order.begin(), order.end(), 0);
  for (int i = num_classes - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  }
  world.base_classes.assign(order.begin(), order.begin() + num_base);
  world.novel_classes.assign(order.begin() + num_base, order.end());
  std::sort(world.base_classes.begin(), world.base_classes.end());
  std::sort(world.novel_classes.begin(), world.novel_classes.end());
  return world;
}

Matrix sample_class(const ClassWorld& world, int class_id, int count, Rng& rng) {
  if (class_id < 0 || class_id >= world.num_classes()) throw std::out_of_range("sample_class: bad class id");
  Matrix x = world.noise_scale * rng.normal_matrix(count, world.dim());
  x.rowwise() += world.prototypes.row(class_id);
  return x;
}

namespace {

LabeledSet draw_set(const ClassWorld& world, const std::vector<int>& classes, int per_class, Rng& rng) {
  LabeledSet set{Matrix(static_cast<Index>(classes.size()) * per_class, world.dim()), {}};
  set.labels.reserve(static_cast<std::size_t>(set.features.rows()));
  for (std::size_t k = 0; k < classes.size(); ++k) {
    set.features.middleRows(static_cast<Index>(k) * per_class, per_class) =
        sample_class(world, classes[k], per_class, rng);
    set.labels.insert(set.labels.end(), static_cast<std::size_t>(per_class), static_cast<int>(k));
  }
  return set;
}

}  // namespace

TaskEpisode sample_episode(const ClassWorld& world, Split split, int ways, int shots, int queries_per_class,
                           Rng& rng) {
  const auto& pool = world.classes(split);
  if (ways < 2 || static_cast<std::size_t>(ways) > pool.size()) {
    throw std::invalid_argument("sample_episode: split has " + std::to_string(pool.size()) +
                                " classes, cannot draw " + std::to_string(ways));
  }
  if (shots < 1 || queries_per_class < 0) throw std::invalid_argument("sample_episode: bad shot/query counts");

  // Partial Fisher-Yates over a copy of the split.
  std::vector<int> candidates = pool;
  const int n = static_cast<int>(candidates.size());
  for (int i = 0; i < ways; ++i) {
    std::swap(candidates[static_cast<std::size_t>(i)], candidates[static_cast<std::size_t>(rng.uniform_int(i, n - 1))]);
  }

  TaskEpisode ep;
  ep.ways = ways;
  ep.shots = shots;
  ep.dim = static_cast<int>(world.dim());
  ep.class_ids.assign(candidates.begin(), candidates.begin() + ways);
  ep.support = draw_set(world, ep.class_ids, shots, rng);
  ep.query = draw_set(world, ep.class_ids, queries_per_class, rng);
  return ep;
}

AuxiliaryDataset auxiliary_dataset(const ClassWorld& world, const TaskEpisode& episode, int per_class, Rng& rng) {
  if (per_class < 1) throw std::invalid_argument("auxiliary_dataset: per_class must be >= 1");
  return AuxiliaryDataset{draw_set(world, episode.class_ids, per_class, rng), per_class};
}

ClassifierWeights target_weights(const TaskEpisode& episode, const AuxiliaryDataset& aux, ClassifierKind kind,
                                 double temperature, int steps, double lr) {
  if (steps < 0) throw std::invalid_argument("target_weights: steps must be >= 0");
  if (aux.data.size() != static_cast<Index>(episode.ways) * aux.per_class ||
      aux.data.features.cols() != episode.dim) {
    throw std::invalid_argument("target_weights: auxiliary set does not match the episode");
  }
  ClassifierWeights wts{Matrix::Zero(episode.ways, episode.dim), kind, temperature};
  if (kind == ClassifierKind::cosine) {
    for (int k = 0; k < episode.ways; ++k) {
      wts.w.row(k) = aux.data.features.middleRows(static_cast<Index>(k) * aux.per_class, aux.per_class)
                         .colwise()
                         .mean();
    }
  }
  const CrossEntropyObjective objective(aux.data, kind);
  for (int s = 0; s < steps; ++s) {
    LossAndGrad lg = objective(wts, true);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      throw NumericalError("target_weights: non-finite loss at GDA step " + std::to_string(s) +
                           " (learning rate " + std::to_string(lr) + " too high?)");
    }
    wts.w -= lr * lg.grad;
  }
  return wts;
}

}  // namespace diffopt
