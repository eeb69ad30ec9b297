#pragma once

#include <string_view>
#include <vector>

#include "diffopt/types.hpp"

namespace diffopt {

enum class ClassifierKind { linear, cosine };

std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view text);

/// Task-specific classifier head over feature vectors. Row i of w scores
/// class i. This matrix is also the variable being denoised.
struct ClassifierWeights {
  Matrix w;  // N x d
  ClassifierKind kind = ClassifierKind::cosine;
  double temperature = 10.0;  // cosine only

  Index ways() const { return w.rows(); }
  Index dim() const { return w.cols(); }
};

/// Feature vectors stored one per row, with matching class labels.
struct LabeledSet {
  Matrix features;  // n x d
  std::vector<int> labels;

  Index size() const { return features.rows(); }
};

/// One N-way K-shot task. Labels are episode-local in [0, ways); class_ids
/// maps them back to world classes.
struct TaskEpisode {
  LabeledSet support;
  LabeledSet query;
  int ways = 0;
  int shots = 0;
  int dim = 0;
  std::vector<int> class_ids;

  /// Copy with the query set removed, handed to adaptors.
  TaskEpisode support_only() const;
};

/// Throws std::invalid_argument unless the support set holds exactly
/// ways * shots items with shots per class and every label and dim is valid.
void validate_episode(const TaskEpisode& episode);

/// Per-sample class scores, n x N.
Matrix logits(const ClassifierWeights& wts, const Matrix& features);
Vector logits(const ClassifierWeights& wts, const Vector& x);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // N x d, empty when not requested
};

/// Mean softmax cross-entropy (natural log) of a fixed labeled set and,
/// optionally, its exact gradient with respect to w. Caches the (normalised,
/// for cosine heads) features so repeated evaluations along a descent path
/// do not redo that work.
class CrossEntropyObjective {
 public:
  CrossEntropyObjective(const LabeledSet& data, ClassifierKind kind);

  LossAndGrad operator()(const ClassifierWeights& wts, bool with_grad) const;

 private:
  Matrix inputs_;  // d x n, one column per sample
  std::vector<int> labels_;
  ClassifierKind kind_;
};

LossAndGrad cross_entropy(const ClassifierWeights& wts, const LabeledSet& data, bool with_grad);

double support_loss(const ClassifierWeights& wts, const TaskEpisode& episode);
Matrix support_loss_grad(const ClassifierWeights& wts, const TaskEpisode& episode);

/// Argmax class per feature row; ties go to the lowest index.
std::vector<int> predict(const ClassifierWeights& wts, const Matrix& features);
double accuracy(const ClassifierWeights& wts, const LabeledSet& data);

}  // namespace diffopt
