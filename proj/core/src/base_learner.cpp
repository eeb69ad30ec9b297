#include "diffopt/base_learner.hpp"

#include <cmath>
#include <string>

namespace diffopt {

std::string_view to_string(ClassifierKind kind) {
  return kind == ClassifierKind::linear ? "linear" : "cosine";
}

ClassifierKind parse_classifier_kind(std::string_view text) {
  if (text == "linear") return ClassifierKind::linear;
  if (text == "cosine") return ClassifierKind::cosine;
  throw std::invalid_argument("unknown classifier kind '" + std::string(text) + "'");
}

TaskEpisode TaskEpisode::support_only() const {
  TaskEpisode out = *this;
  out.query = LabeledSet{Matrix(0, dim), {}};
  return out;
}

void validate_episode(const TaskEpisode& episode) {
  const auto& s = episode.support;
  if (episode.ways < 2) throw std::invalid_argument("episode: ways must be >= 2");
  if (episode.shots < 1) throw std::invalid_argument("episode: shots must be >= 1");
  if (s.features.rows() != static_cast<Index>(s.labels.size()) ||
      episode.query.features.rows() != static_cast<Index>(episode.query.labels.size())) {
    throw std::invalid_argument("episode: feature/label count mismatch");
  }
  if (s.features.cols() != episode.dim ||
      (episode.query.size() > 0 && episode.query.features.cols() != episode.dim)) {
    throw std::invalid_argument("episode: feature dim mismatch");
  }
  if (s.size() != static_cast<Index>(episode.ways) * episode.shots) {
    throw std::invalid_argument("episode: support size != ways * shots");
  }
  std::vector<int> counts(static_cast<std::size_t>(episode.ways), 0);
  for (int y : s.labels) {
    if (y < 0 || y >= episode.ways) throw std::invalid_argument("episode: support label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c : counts) {
    if (c != episode.shots) throw std::invalid_argument("episode: unbalanced support set");
  }
  for (int y : episode.query.labels) {
    if (y < 0 || y >= episode.ways) throw std::invalid_argument("episode: query label out of range");
  }
}

namespace {

Vector row_norms(const Matrix& m) { return m.rowwise().norm(); }

void check_dims(const ClassifierWeights& wts, Index feature_dim) {
  if (feature_dim != wts.dim()) {
    throw std::invalid_argument("classifier expects dim " + std::to_string(wts.dim()) + ", got " +
                                std::to_string(feature_dim));
  }
}

void check_weight_rows(const Vector& norms) {
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > 0.0)) {
      throw std::invalid_argument("cosine classifier: weight row " + std::to_string(i) + " has zero norm");
    }
  }
}

// Rows scaled to unit norm; zero rows stay zero.
Matrix normalize_rows(const Matrix& m, const Vector& norms) {
  Matrix out = m;
  for (Index i = 0; i < m.rows(); ++i) {
    if (norms(i) > 0.0) out.row(i) /= norms(i);
  }
  return out;
}

}  // namespace

Matrix logits(const ClassifierWeights& wts, const Matrix& features) {
  check_dims(wts, features.cols());
  if (wts.kind == ClassifierKind::linear) return features * wts.w.transpose();
  const Vector w_norms = row_norms(wts.w);
  check_weight_rows(w_norms);
  const Matrix w_hat = normalize_rows(wts.w, w_norms);
  const Matrix x_hat = normalize_rows(features, row_norms(features));
  return wts.temperature * (x_hat * w_hat.transpose());
}

Vector logits(const ClassifierWeights& wts, const Vector& x) {
  return logits(wts, Matrix(x.transpose())).row(0).transpose();
}

CrossEntropyObjective::CrossEntropyObjective(const LabeledSet& data, ClassifierKind kind)
    : labels_(data.labels), kind_(kind) {
  if (data.size() == 0) throw std::invalid_argument("cross_entropy: empty data set");
  if (static_cast<Index>(labels_.size()) != data.size()) {
    throw std::invalid_argument("cross_entropy: feature/label count mismatch");
  }
  if (kind == ClassifierKind::cosine) {
    inputs_ = normalize_rows(data.features, row_norms(data.features)).transpose();
  } else {
    inputs_ = data.features.transpose();
  }
}

LossAndGrad CrossEntropyObjective::operator()(const ClassifierWeights& wts, bool with_grad) const {
  check_dims(wts, inputs_.rows());
  if (wts.kind != kind_) throw std::invalid_argument("cross_entropy: classifier kind differs from objective");
  const Index n = inputs_.cols();
  const bool cosine = kind_ == ClassifierKind::cosine;

  Vector w_norms;
  Matrix w_hat;
  if (cosine) {
    w_norms = row_norms(wts.w);
    check_weight_rows(w_norms);
    w_hat = normalize_rows(wts.w, w_norms);
  }
  // N x n, one column per sample so the softmax runs over contiguous memory.
  Matrix scores = cosine ? Matrix(wts.temperature * (w_hat * inputs_)) : Matrix(wts.w * inputs_);

  const Eigen::RowVectorXd max = scores.colwise().maxCoeff();
  scores.rowwise() -= max;
  Eigen::ArrayXXd probs = scores.array().exp();
  const Eigen::RowVectorXd log_z = probs.colwise().sum().log().matrix();

  LossAndGrad out;
  double total = 0.0;
  for (Index s = 0; s < n; ++s) total += log_z(s) - scores(labels_[static_cast<std::size_t>(s)], s);
  out.loss = total / static_cast<double>(n);
  if (!with_grad) return out;

  // dL/dscores = (softmax - onehot) / n
  probs.rowwise() /= log_z.array().exp();
  for (Index s = 0; s < n; ++s) probs(labels_[static_cast<std::size_t>(s)], s) -= 1.0;
  probs /= static_cast<double>(n);

  if (!cosine) {
    out.grad = probs.matrix() * inputs_.transpose();
    return out;
  }
  // d/dw_i of w_i / |w_i| is (I - w_hat_i w_hat_i^T) / |w_i|.
  const Matrix grad_hat = wts.temperature * (probs.matrix() * inputs_.transpose());
  out.grad.resize(wts.w.rows(), wts.w.cols());
  for (Index i = 0; i < wts.w.rows(); ++i) {
    const double radial = grad_hat.row(i).dot(w_hat.row(i));
    out.grad.row(i) = (grad_hat.row(i) - radial * w_hat.row(i)) / w_norms(i);
  }
  return out;
}

LossAndGrad cross_entropy(const ClassifierWeights& wts, const LabeledSet& data, bool with_grad) {
  check_dims(wts, data.features.cols());
  return CrossEntropyObjective(data, wts.kind)(wts, with_grad);
}

double support_loss(const ClassifierWeights& wts, const TaskEpisode& episode) {
  return cross_entropy(wts, episode.support, false).loss;
}

Matrix support_loss_grad(const ClassifierWeights& wts, const TaskEpisode& episode) {
  return cross_entropy(wts, episode.support, true).grad;
}

std::vector<int> predict(const ClassifierWeights& wts, const Matrix& features) {
  const Matrix scores = logits(wts, features);
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index s = 0; s < scores.rows(); ++s) {
    Index best = 0;
    for (Index i = 1; i < scores.cols(); ++i) {
      if (scores(s, i) > scores(s, best)) best = i;
    }
    out[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const ClassifierWeights& wts, const LabeledSet& data) {
  if (data.size() == 0) throw std::invalid_argument("accuracy: empty data set");
  const auto pred = predict(wts, data.features);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) hits += pred[s] == data.labels[s] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace diffopt
