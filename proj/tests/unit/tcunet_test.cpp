#include <cmath>

#include <gtest/gtest.h>

#include "checks.hpp"
#include "diffopt/tcunet.hpp"

namespace diffopt {
namespace {

using testing::random_episode;
using testing::random_params;

// Straight-line replay of the block pipeline for a single gradient row,
// written with explicit loops.
Vector scripted_row(const NoisePredictorParams& p, const TcunetOptions& opts, Vector g, int t) {
  if (opts.normalize_gradient && g.norm() > 0.0) g /= g.norm();
  const Vector e = timestep_embedding(t, kTimeEmbeddingDim);
  auto block = [&](std::size_t b, const Vector& in, bool relu) {
    const UnetBlock& blk = p.blocks[b];
    Vector out(blk.feature.out_dim());
    for (Index i = 0; i < out.size(); ++i) {
      double f = blk.feature.bias(i);
      for (Index j = 0; j < in.size(); ++j) f += blk.feature.weight(i, j) * in(j);
      double tm = blk.time.bias(i);
      for (Index j = 0; j < e.size(); ++j) tm += blk.time.weight(i, j) * e(j);
      out(i) = relu ? std::max(0.0, f * tm) : f * tm;
    }
    return out;
  };
  const bool add = opts.skips == SkipMode::additive;
  const Vector e1 = block(kEncoder1, g, true);
  const Vector e2 = block(kEncoder2, e1, true);
  const Vector bb = block(kBottleneck, e2, true);
  Vector d1 = block(kDecoder1, bb, true);
  if (add) d1 += e1;
  Vector d2 = block(kDecoder2, d1, false);
  if (add) d2 += g;
  return d2;
}

TEST(Tcunet, WideLadder) {
  const NoisePredictorParams p = NoisePredictorParams::init(512, 1);
  const Index expect_in[] = {512, 256, 128, 128, 256};
  const Index expect_out[] = {256, 128, 128, 256, 512};
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    EXPECT_EQ(p.blocks[b].feature.in_dim(), expect_in[b]);
    EXPECT_EQ(p.blocks[b].feature.out_dim(), expect_out[b]);
    EXPECT_EQ(p.blocks[b].time.in_dim(), 32);
    EXPECT_EQ(p.blocks[b].time.out_dim(), expect_out[b]);
  }
}

TEST(Tcunet, DeskScaleLadder) {
  const NoisePredictorParams p = NoisePredictorParams::init(32, 1);
  const Index widths[] = {32, 16, 8, 8, 16, 32};
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    EXPECT_EQ(p.blocks[b].feature.in_dim(), widths[b]);
    EXPECT_EQ(p.blocks[b].feature.out_dim(), widths[b + 1]);
  }
  EXPECT_EQ(p.feature_dim(), 32);
}

TEST(Tcunet, RejectsBadDims) {
  EXPECT_THROW(NoisePredictorParams::init(30, 1), std::invalid_argument);
  EXPECT_THROW(NoisePredictorParams::init(4, 1), std::invalid_argument);
  EXPECT_NO_THROW(NoisePredictorParams::init(8, 1));
}

TEST(Tcunet, InitDeterministicInSeed) {
  EXPECT_EQ(NoisePredictorParams::init(32, 9).flatten(), NoisePredictorParams::init(32, 9).flatten());
  EXPECT_NE(NoisePredictorParams::init(32, 9).flatten(), NoisePredictorParams::init(32, 10).flatten());
}

TEST(Tcunet, FlattenAssignRoundTrip) {
  Rng rng(40);
  const NoisePredictorParams p = random_params(rng, 16);
  NoisePredictorParams q = NoisePredictorParams::zeros(16);
  q.assign(p.flatten());
  EXPECT_EQ(q.flatten(), p.flatten());
  EXPECT_EQ(p.parameter_count(), p.flatten().size());
  EXPECT_THROW(q.assign(Vector::Zero(3)), std::invalid_argument);
}

TEST(Tcunet, ZeroWeightsPassGradientThroughSkips) {
  Rng rng(41);
  const auto sched = DiffusionSchedule::linear(200, 1e-4, 0.02);
  const TaskEpisode ep = random_episode(rng, 5, 1, 32);
  const ClassifierWeights wt = testing::random_weights(rng, 5, 32, ClassifierKind::cosine);
  const NoisePredictorParams zero = NoisePredictorParams::zeros(32);
  const Matrix g = support_loss_grad(wt, ep);
  EXPECT_EQ(predict_noise(zero, TcunetOptions{}, wt, ep, 7, sched), g);
  EXPECT_TRUE(predict_noise(zero, TcunetOptions{SkipMode::none, false}, wt, ep, 7, sched).isZero());
}

TEST(Tcunet, MatchesScriptedPipeline) {
  Rng rng(42);
  for (auto skips : {SkipMode::additive, SkipMode::none}) {
    for (bool norm : {false, true}) {
      const TcunetOptions opts{skips, norm};
      for (int rep = 0; rep < 10; ++rep) {
        const NoisePredictorParams p = random_params(rng, 32);
        const Matrix g = rng.normal_matrix(5, 32);
        const int t = rng.uniform_int(1, 1000);
        const Matrix out = refine_gradient(p, opts, g, t);
        for (Index r = 0; r < 5; ++r) {
          const Vector ref = scripted_row(p, opts, g.row(r).transpose(), t);
          EXPECT_LE((out.row(r).transpose() - ref).cwiseAbs().maxCoeff(), 1e-12);
        }
      }
    }
  }
}

TEST(Tcunet, RowsAreIndependent) {
  Rng rng(43);
  const NoisePredictorParams p = random_params(rng, 32);
  const Matrix g = rng.normal_matrix(5, 32);
  const Matrix base = refine_gradient(p, TcunetOptions{}, g, 50);
  for (Index j = 0; j < 5; ++j) {
    Matrix ablated = g;
    ablated.row(j).setZero();
    const Matrix out = refine_gradient(p, TcunetOptions{}, ablated, 50);
    for (Index r = 0; r < 5; ++r) {
      if (r == j) {
        EXPECT_NE(out.row(r), base.row(r));
      } else {
        EXPECT_EQ(out.row(r), base.row(r));
      }
    }
  }
}

TEST(Tcunet, TimeSensitive) {
  Rng rng(44);
  const auto sched = DiffusionSchedule::linear(200, 1e-4, 0.02);
  const NoisePredictorParams p = random_params(rng, 32);
  const TaskEpisode ep = random_episode(rng, 5, 1, 32);
  const ClassifierWeights wt = testing::random_weights(rng, 5, 32, ClassifierKind::cosine);
  const Matrix a = predict_noise(p, TcunetOptions{}, wt, ep, 1, sched);
  const Matrix b = predict_noise(p, TcunetOptions{}, wt, ep, 200, sched);
  EXPECT_GT(testing::max_abs_diff(a, b), 0.0);
  EXPECT_THROW(predict_noise(p, TcunetOptions{}, wt, ep, 201, sched), std::out_of_range);
  EXPECT_THROW(predict_noise(p, TcunetOptions{}, wt, ep, 0, sched), std::out_of_range);
}

TEST(Tcunet, DimMismatch) {
  const NoisePredictorParams p = NoisePredictorParams::init(32, 1);
  EXPECT_THROW(refine_gradient(p, TcunetOptions{}, Matrix::Zero(5, 16), 1), std::invalid_argument);
}

TEST(Tcunet, NormalizedInputIsScaleFree) {
  Rng rng(45);
  const NoisePredictorParams p = random_params(rng, 16);
  const TcunetOptions opts{SkipMode::none, true};
  const Matrix g = rng.normal_matrix(3, 16);
  EXPECT_LE(testing::max_abs_diff(refine_gradient(p, opts, g, 3), refine_gradient(p, opts, Matrix(1e-6 * g), 3)),
            1e-12);
}

TEST(NoiseLoss, ZeroWhenPredictionIsExact) {
  Rng rng(46);
  const auto sched = DiffusionSchedule::linear(200, 1e-4, 0.02);
  const TaskEpisode ep = random_episode(rng, 5, 1, 32);
  const NoisePredictorParams p = random_params(rng, 32);
  const ClassifierWeights w0 = testing::random_weights(rng, 5, 32, ClassifierKind::cosine);
  const int t = 80;
  // The prediction depends on eps only through w_t, so solve for the fixed
  // point eps = predict(q_sample(w0, t, eps)) by construction: pick w_t,
  // read off the prediction, then back out the w0 consistent with it.
  const Matrix wt = rng.normal_matrix(5, 32);
  ClassifierWeights wt_c = w0;
  wt_c.w = wt;
  const Matrix eps = predict_noise(p, TcunetOptions{}, wt_c, ep, t, sched);
  ClassifierWeights w0_c = w0;
  w0_c.w = (wt - std::sqrt(1.0 - sched.alpha_bar(t)) * eps) / std::sqrt(sched.alpha_bar(t));
  const NoiseLoss nl = loss_and_param_grads(p, TcunetOptions{}, w0_c, ep, t, eps, sched);
  EXPECT_LE(nl.loss, 1e-24);
  EXPECT_LE(nl.grads.flatten().cwiseAbs().maxCoeff(), 1e-10);
}

TEST(NoiseLoss, GradientsMatchFiniteDifferences) {
  Rng rng(47);
  for (auto skips : {SkipMode::additive, SkipMode::none}) {
    for (bool norm : {false, true}) {
      for (int rep = 0; rep < 5; ++rep) {
        EXPECT_LE(testing::unet_grad_fd_error(rng, TcunetOptions{skips, norm}, 16), 1e-3)
            << to_string(skips) << " normalize=" << norm;
      }
    }
  }
}

TEST(NoiseLoss, InvariantUnderLabelPermutation) {
  Rng rng(48);
  const auto sched = DiffusionSchedule::linear(200, 1e-4, 0.02);
  for (int rep = 0; rep < 10; ++rep) {
    const TaskEpisode ep = random_episode(rng, 5, 2, 32);
    const NoisePredictorParams p = random_params(rng, 32);
    const ClassifierWeights w0 = testing::random_weights(rng, 5, 32, ClassifierKind::cosine);
    const Matrix eps = rng.normal_matrix(5, 32);
    const auto perm = testing::random_permutation(rng, 5);
    ClassifierWeights w0_p = w0;
    w0_p.w = testing::permute_rows(w0.w, perm);
    const double a = loss_and_param_grads(p, TcunetOptions{}, w0, ep, 33, eps, sched).loss;
    const double b = loss_and_param_grads(p, TcunetOptions{}, w0_p, testing::relabel(ep, perm), 33,
                                          testing::permute_rows(eps, perm), sched)
                         .loss;
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(NoiseLoss, OneSupportGradientPerCall) {
  Rng rng(49);
  const auto sched = DiffusionSchedule::linear(1000, 1e-4, 0.02);
  const TaskEpisode ep = random_episode(rng, 5, 1, 32);
  const NoisePredictorParams p = random_params(rng, 32);
  const ClassifierWeights w0 = testing::random_weights(rng, 5, 32, ClassifierKind::cosine);
  reset_op_counters();
  loss_and_param_grads(p, TcunetOptions{}, w0, ep, 999, rng.normal_matrix(5, 32), sched);
  EXPECT_EQ(op_counters(), (OpCounters{1, 1, 1}));
}

TEST(NoiseLoss, NonFiniteLossAborts) {
  Rng rng(50);
  const auto sched = DiffusionSchedule::linear(200, 1e-4, 0.02);
  const TaskEpisode ep = random_episode(rng, 5, 1, 32);
  NoisePredictorParams p = random_params(rng, 32);
  p.blocks[kDecoder2].feature.bias.setConstant(1e300);
  p.blocks[kDecoder2].time.bias.setConstant(1e300);
  const ClassifierWeights w0 = testing::random_weights(rng, 5, 32, ClassifierKind::cosine);
  EXPECT_THROW(loss_and_param_grads(p, TcunetOptions{}, w0, ep, 10, rng.normal_matrix(5, 32), sched), NumericalError);
}

}  // namespace
}  // namespace diffopt
