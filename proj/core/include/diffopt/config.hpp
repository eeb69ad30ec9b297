#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "diffopt/base_learner.hpp"
#include "diffopt/tcunet.hpp"

namespace diffopt {

struct WorldConfig {
  int classes = 50;
  int dim = 32;
  double noise_scale = 0.3;
  double base_fraction = 0.8;
};

struct ScheduleConfig {
  int steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct ModelConfig {
  SkipMode skips = SkipMode::additive;
  bool grad_normalize = false;
  ClassifierKind classifier = ClassifierKind::cosine;
  double temperature = 10.0;
};

struct TrainConfig {
  std::int64_t steps = 20000;
  double lr = 1e-4;
  double weight_decay = 5e-4;
  std::int64_t checkpoint_interval = 1000;
  std::int64_t eval_interval = 1000;
  int eval_tasks = 100;
  int ways = 5;
  int shots = 1;
  int aux_per_class = 200;
  int target_steps = 200;
  double target_lr = 0.5;
  // Cosine targets are scale free; rows are rescaled to this norm before
  // diffusion. 0 keeps the GDA output as is.
  double target_norm = 0.0;
};

struct EvalConfig {
  int num_tasks = 600;
  int ways = 5;
  int shots = 1;
  int queries_per_class = 15;
  // Independent w_T draws per task. Linear heads average the sampled
  // weights, cosine heads average their unit-norm rows.
  int draws = 1;
  bool strict = false;
  // Evaluation worker threads; results do not depend on it.
  int threads = 1;
};

enum class AdaptorKind { metadiff, gda, momentum_gda };

std::string_view to_string(AdaptorKind kind);
AdaptorKind parse_adaptor_kind(std::string_view text);

enum class InitMode { zeros, normal };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view text);

struct BaselineConfig {
  int steps = 100;
  double lr = 0.1;
  double momentum = 0.9;
  InitMode init = InitMode::normal;
};

/// Everything needed to reproduce an experiment. Serialised as flat
/// `key = value` lines (see config_keys()); unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  ScheduleConfig schedule;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  AdaptorKind adaptor = AdaptorKind::metadiff;
  BaselineConfig baseline;

  /// Throws ConfigError listing every offending field.
  void validate() const;
};

/// All accepted keys, in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Throws ConfigError on an unknown
/// key or unparsable value. Does not validate cross-field constraints.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Parses `key = value` lines over the defaults; '#' starts a comment.
/// Validates the result.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_text(c)) reproduces c exactly.
std::string to_text(const RunConfig& config);

}  // namespace diffopt
