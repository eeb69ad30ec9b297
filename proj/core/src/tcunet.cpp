#include "diffopt/tcunet.hpp"

#include <cmath>

namespace diffopt {

std::string_view to_string(SkipMode mode) { return mode == SkipMode::none ? "none" : "additive"; }

SkipMode parse_skip_mode(std::string_view text) {
  if (text == "none") return SkipMode::none;
  if (text == "additive") return SkipMode::additive;
  throw std::invalid_argument("unknown skip mode '" + std::string(text) + "'");
}

namespace {

std::array<Index, kNumBlocks + 1> ladder(int dim) {
  if (dim < 8 || dim % 4 != 0) {
    throw std::invalid_argument("noise predictor: feature dim must be a multiple of 4 and >= 8, got " +
                                std::to_string(dim));
  }
  const Index d = dim;
  return {d, d / 2, d / 4, d / 4, d / 2, d};
}

struct BlockTrace {
  Matrix input;  // in x N
  Matrix feat;   // out x N
  Vector gate;   // out
  Matrix pre;    // feat .* gate
  Matrix out;
};

struct Trace {
  Vector embed;
  Matrix input;  // d x N, one column per class
  std::array<BlockTrace, kNumBlocks> blocks;
  Matrix output;  // N x d
};

Trace forward(const NoisePredictorParams& params, const TcunetOptions& opts, const Matrix& grad, int t) {
  const int d = params.feature_dim();
  if (grad.cols() != d) {
    throw std::invalid_argument("noise predictor: gradient has " + std::to_string(grad.cols()) +
                                " columns, expected " + std::to_string(d));
  }
  ++op_counters().unet_forward;

  Trace tr;
  tr.embed = timestep_embedding(t, kTimeEmbeddingDim);
  tr.input = grad.transpose();
  if (opts.normalize_gradient) {
    for (Index c = 0; c < tr.input.cols(); ++c) {
      const double n = tr.input.col(c).norm();
      if (n > 0.0) tr.input.col(c) /= n;
    }
  }

  const bool additive = opts.skips == SkipMode::additive;
  const Matrix* h = &tr.input;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const UnetBlock& blk = params.blocks[b];
    BlockTrace& bt = tr.blocks[b];
    bt.input = *h;
    bt.feat = dense_forward(blk.feature, bt.input);
    bt.gate = blk.time.weight * tr.embed + blk.time.bias;
    bt.pre = bt.feat.array().colwise() * bt.gate.array();
    bt.out = b == kDecoder2 ? bt.pre : relu_forward(bt.pre);
    if (additive && b == kDecoder1) bt.out += tr.blocks[kEncoder1].out;
    if (additive && b == kDecoder2) bt.out += tr.input;
    h = &bt.out;
  }
  tr.output = h->transpose();
  return tr;
}

// Accumulates parameter gradients for d(loss)/d(output) = grad_output.
void backward(const NoisePredictorParams& params, const TcunetOptions& opts, const Trace& tr,
              const Matrix& grad_output, NoisePredictorParams& grads) {
  ++op_counters().unet_backward;
  const bool additive = opts.skips == SkipMode::additive;
  Matrix dh = grad_output.transpose();
  Matrix d_skip;
  for (std::size_t b = kNumBlocks; b-- > 0;) {
    const UnetBlock& blk = params.blocks[b];
    const BlockTrace& bt = tr.blocks[b];
    if (additive && b == kDecoder1) d_skip = dh;

    const Matrix dpre = b == kDecoder2 ? dh : relu_backward(bt.pre, dh);
    const Matrix dfeat = dpre.array().colwise() * bt.gate.array();
    const Vector dgate = (dpre.array() * bt.feat.array()).rowwise().sum();

    DenseGrads fg = dense_backward(blk.feature, bt.input, dfeat);
    grads.blocks[b].feature.weight += fg.weight;
    grads.blocks[b].feature.bias += fg.bias;
    grads.blocks[b].time.weight += dgate * tr.embed.transpose();
    grads.blocks[b].time.bias += dgate;

    dh = std::move(fg.input);
    if (additive && b == kEncoder2) dh += d_skip;
  }
}

}  // namespace

NoisePredictorParams NoisePredictorParams::init(int dim, std::uint64_t seed) {
  const auto dims = ladder(dim);
  Rng rng = Rng::derive(seed, 0x74636e6574);  // "tcnet"
  NoisePredictorParams p;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    p.blocks[b].feature = DenseLayer::glorot(dims[b], dims[b + 1], rng);
    p.blocks[b].time = DenseLayer::glorot(kTimeEmbeddingDim, dims[b + 1], rng);
  }
  return p;
}

NoisePredictorParams NoisePredictorParams::zeros(int dim) {
  const auto dims = ladder(dim);
  NoisePredictorParams p;
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    p.blocks[b].feature = DenseLayer::zeros(dims[b], dims[b + 1]);
    p.blocks[b].time = DenseLayer::zeros(kTimeEmbeddingDim, dims[b + 1]);
  }
  return p;
}

Index NoisePredictorParams::parameter_count() const {
  Index n = 0;
  for_each_tensor([&](const std::string&, const auto& tensor) { n += tensor.size(); });
  return n;
}

Vector NoisePredictorParams::flatten() const {
  Vector flat(parameter_count());
  Index pos = 0;
  for_each_tensor([&](const std::string&, const auto& tensor) {
    flat.segment(pos, tensor.size()) = tensor.reshaped();
    pos += tensor.size();
  });
  return flat;
}

void NoisePredictorParams::assign(const Vector& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("assign: parameter count mismatch");
  Index pos = 0;
  for_each_tensor([&](const std::string&, auto& tensor) {
    tensor.reshaped() = flat.segment(pos, tensor.size());
    pos += tensor.size();
  });
}

OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

void reset_op_counters() { op_counters() = OpCounters{}; }

Matrix refine_gradient(const NoisePredictorParams& params, const TcunetOptions& opts, const Matrix& grad, int t) {
  return forward(params, opts, grad, t).output;
}

Matrix predict_noise(const NoisePredictorParams& params, const TcunetOptions& opts, const ClassifierWeights& wt,
                     const TaskEpisode& episode, int t, const DiffusionSchedule& sched) {
  sched.check_timestep(t);
  ++op_counters().support_gradient;
  return refine_gradient(params, opts, support_loss_grad(wt, episode), t);
}

NoiseLoss loss_and_param_grads(const NoisePredictorParams& params, const TcunetOptions& opts,
                               const ClassifierWeights& w0, const TaskEpisode& episode, int t, const Matrix& eps,
                               const DiffusionSchedule& sched) {
  ClassifierWeights wt = w0;
  wt.w = q_sample(w0.w, t, eps, sched);

  ++op_counters().support_gradient;
  const Trace tr = forward(params, opts, support_loss_grad(wt, episode), t);
  const Matrix residual = tr.output - eps;
  const double count = static_cast<double>(residual.size());

  NoiseLoss out;
  out.loss = residual.squaredNorm() / count;
  if (!std::isfinite(out.loss)) {
    throw NumericalError("noise predictor: non-finite loss at t=" + std::to_string(t));
  }
  out.grads = NoisePredictorParams::zeros(params.feature_dim());
  backward(params, opts, tr, (2.0 / count) * residual, out.grads);
  return out;
}

}  // namespace diffopt
