#pragma once

#include <cstdint>
#include <vector>

#include "diffopt/base_learner.hpp"
#include "diffopt/rng.hpp"

namespace diffopt {

enum class Split { base, novel };

/// Synthetic feature space standing in for a frozen embedding network:
/// class k emits prototype_k + noise_scale * N(0, I). Prototypes are unit
/// norm. Immutable once built.
struct ClassWorld {
  Matrix prototypes;  // C x d
  double noise_scale = 0.0;
  std::vector<int> base_classes;
  std::vector<int> novel_classes;
  std::uint64_t seed = 0;

  Index num_classes() const { return prototypes.rows(); }
  Index dim() const { return prototypes.cols(); }
  const std::vector<int>& classes(Split split) const {
    return split == Split::base ? base_classes : novel_classes;
  }
};

/// Deterministic in seed. base_fraction of the classes (rounded) go to the
/// base split, the rest to the novel split; both must be non-empty.
ClassWorld make_world(int num_classes, int dim, double noise_scale, double base_fraction, std::uint64_t seed);

/// count fresh samples of one world class, one per row.
Matrix sample_class(const ClassWorld& world, int class_id, int count, Rng& rng);

/// N distinct classes from the split without replacement, then for each
/// class (in sampled order) K support and queries_per_class query samples.
/// Throws std::invalid_argument if the split has fewer than N classes.
TaskEpisode sample_episode(const ClassWorld& world, Split split, int ways, int shots, int queries_per_class,
                           Rng& rng);

/// Plentiful labeled data for the classes of one episode.
struct AuxiliaryDataset {
  LabeledSet data;
  int per_class = 0;
};

AuxiliaryDataset auxiliary_dataset(const ClassWorld& world, const TaskEpisode& episode, int per_class, Rng& rng);

/// Full-batch gradient descent on the auxiliary cross-entropy, giving the
/// target weights w0 used for diffusion training.
///
/// Linear heads start from zero. Cosine heads cannot (a zero row has no
/// direction), so they start from the per-class auxiliary means.
ClassifierWeights target_weights(const TaskEpisode& episode, const AuxiliaryDataset& aux, ClassifierKind kind,
                                 double temperature, int steps, double lr);

}  // namespace diffopt
