#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "diffopt/base_learner.hpp"
#include "diffopt/dense.hpp"
#include "diffopt/schedule.hpp"

namespace diffopt {

inline constexpr int kTimeEmbeddingDim = 32;

enum class SkipMode { none, additive };

std::string_view to_string(SkipMode mode);
SkipMode parse_skip_mode(std::string_view text);

struct TcunetOptions {
  // additive: EB1 output joins the DB1 output, the input gradient joins the
  // DB2 output. none: plain chain of five blocks.
  SkipMode skips = SkipMode::additive;
  // Scale every class row of the support gradient to unit L2 norm before it
  // enters the network (zero rows stay zero).
  bool normalize_gradient = false;
};

/// One block: out = feature(x) .* time(embed(t)), then ReLU except in the
/// last decoder block.
struct UnetBlock {
  DenseLayer feature;
  DenseLayer time;
};

enum BlockIndex : std::size_t { kEncoder1 = 0, kEncoder2, kBottleneck, kDecoder1, kDecoder2, kNumBlocks };

/// Meta-parameters of the noise predictor. For feature dim d the feature
/// widths run d -> d/2 -> d/4 -> d/4 -> d/2 -> d, and each block's time
/// layer maps the 32-dim embedding to that block's output width.
struct NoisePredictorParams {
  std::array<UnetBlock, kNumBlocks> blocks;

  /// Glorot-initialised parameters, deterministic in seed. d must be a
  /// multiple of 4 and at least 8.
  static NoisePredictorParams init(int dim, std::uint64_t seed);
  static NoisePredictorParams zeros(int dim);

  int feature_dim() const { return static_cast<int>(blocks[kEncoder1].feature.in_dim()); }
  Index parameter_count() const;

  Vector flatten() const;
  void assign(const Vector& flat);

  /// Visits every tensor as (name, Matrix& / Vector&) in a fixed order;
  /// that order also defines flatten() and the checkpoint layout.
  template <class F>
  void for_each_tensor(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    static constexpr std::array<const char*, kNumBlocks> kNames = {"eb1", "eb2", "bb", "db1", "db2"};
    for (std::size_t b = 0; b < kNumBlocks; ++b) {
      const std::string prefix = kNames[b];
      f(prefix + ".feature.weight", self.blocks[b].feature.weight);
      f(prefix + ".feature.bias", self.blocks[b].feature.bias);
      f(prefix + ".time.weight", self.blocks[b].time.weight);
      f(prefix + ".time.bias", self.blocks[b].time.bias);
    }
  }
};

/// Call counts of the expensive pieces, per thread. Tests use them to show
/// that one training step costs the same whatever the number of diffusion
/// steps.
struct OpCounters {
  std::int64_t support_gradient = 0;
  std::int64_t unet_forward = 0;
  std::int64_t unet_backward = 0;

  bool operator==(const OpCounters&) const = default;
};

OpCounters& op_counters();
void reset_op_counters();

/// Runs an N x d gradient through the UNet, one class row at a time, and
/// returns the N x d noise estimate. Exposed so tests can inject gradients
/// directly.
Matrix refine_gradient(const NoisePredictorParams& params, const TcunetOptions& opts, const Matrix& grad, int t);

/// eps_theta(w_t, S, t): the support-set gradient at w_t refined by the UNet.
Matrix predict_noise(const NoisePredictorParams& params, const TcunetOptions& opts, const ClassifierWeights& wt,
                     const TaskEpisode& episode, int t, const DiffusionSchedule& sched);

struct NoiseLoss {
  double loss = 0.0;
  NoisePredictorParams grads;
};

/// Mean squared error between eps and predict_noise(q_sample(w0, t, eps)),
/// with exact gradients w.r.t. the UNet parameters only. The support
/// gradient enters as a constant; nothing is differentiated through it.
/// Throws NumericalError on a non-finite loss.
NoiseLoss loss_and_param_grads(const NoisePredictorParams& params, const TcunetOptions& opts,
                               const ClassifierWeights& w0, const TaskEpisode& episode, int t, const Matrix& eps,
                               const DiffusionSchedule& sched);

}  // namespace diffopt
