// diffopt command-line driver: train, eval, trace, inspect-schedule.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/os.h>
#include <nlohmann/json.hpp>

#include "diffopt/checkpoint.hpp"
#include "diffopt/config.hpp"
#include "diffopt/diffusion_meta.hpp"
#include "diffopt/eval.hpp"
#include "diffopt/schedule.hpp"

namespace fs = std::filesystem;
using namespace diffopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// Errors that are the user's to fix: bad paths, unwritable directories,
// corrupt checkpoints. Reported with exit status 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path output_root() {
  const char* env = std::getenv("DIFFOPT_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

fs::path make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));
  return dir;
}

// <root>/<kind>-YYYYmmdd-HHMMSS, with a numeric suffix if that exists already.
fs::path fresh_run_dir(std::string_view kind) {
  const fs::path root = make_dir(output_root());
  const std::time_t now = std::time(nullptr);
  const std::string stamp = fmt::format("{}-{:%Y%m%d-%H%M%S}", kind, fmt::localtime(now));
  for (int n = 0;; ++n) {
    const fs::path dir = root / (n == 0 ? stamp : fmt::format("{}-{}", stamp, n));
    std::error_code ec;
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw UsageError(fmt::format("cannot create run directory {}: {}", dir.string(), ec.message()));
  }
}

// Append-only CSV: the header goes in once, when the file is new or empty.
class CsvAppender {
 public:
  CsvAppender(const fs::path& path, std::string_view header) : out_(path, std::ios::app) {
    if (!out_) throw UsageError("cannot open " + path.string() + " for writing");
    std::error_code ec;
    if (fs::file_size(path, ec) == 0) out_ << header << '\n';
  }
  void row(const std::string& line) {
    out_ << line << '\n';
    if (!out_) throw UsageError("write failed");
  }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw UsageError("cannot write " + path.string());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    set_config_value(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

RunConfig build_config(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig config = path.empty() ? RunConfig{} : load_config(path);
  apply_overrides(config, sets);
  config.validate();
  return config;
}

ClassWorld world_for(const RunConfig& c) {
  return make_world(c.world.classes, c.world.dim, c.world.noise_scale, c.world.base_fraction, c.seed);
}

DiffusionSchedule schedule_for(const RunConfig& c) {
  return DiffusionSchedule::linear(c.schedule.steps, c.schedule.beta_start, c.schedule.beta_end);
}

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    throw UsageError(e.what());
  }
}

std::string percent(double v) { return fmt::format("{:.2f}", 100.0 * v); }

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string resume;
  std::string out;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& args) {
  RunConfig config;
  TrainerState state;
  if (args.resume.empty()) {
    config = build_config(args.config, args.sets);
    state = initial_state(config);
  } else {
    if (!args.config.empty()) throw ConfigError("--resume takes its config from the checkpoint; use --set to extend it");
    Checkpoint ck = read_checkpoint(args.resume);
    config = ck.config;
    apply_overrides(config, args.sets);
    config.validate();
    // Only the run length and the reporting cadence may change on resume.
    RunConfig probe = ck.config;
    probe.train.steps = config.train.steps;
    probe.train.checkpoint_interval = config.train.checkpoint_interval;
    probe.train.eval_interval = config.train.eval_interval;
    probe.train.eval_tasks = config.train.eval_tasks;
    if (to_text(probe) != to_text(config)) {
      throw ConfigError("on resume only train.steps, train.checkpoint_interval, train.eval_interval and "
                        "train.eval_tasks may be overridden");
    }
    if (config.train.steps < ck.state.step) {
      throw ConfigError(fmt::format("train.steps: {} is below the checkpoint step {}", config.train.steps,
                                    ck.state.step));
    }
    state = std::move(ck.state);
  }

  const fs::path dir = args.out.empty() ? fresh_run_dir("train") : make_dir(args.out);
  write_text(dir / "config.txt", to_text(config));
  const ClassWorld world = world_for(config);
  const DiffusionSchedule sched = schedule_for(config);

  CsvAppender records(dir / "train.csv", "step,t,mse_loss,grad_norm");
  CsvAppender evals(dir / "eval.csv", "step,mean_acc,ci95");
  EvalSettings settings = eval_settings(config);
  settings.num_tasks = config.train.eval_tasks;

  const auto start = std::chrono::steady_clock::now();
  double window_loss = 0.0;
  int window = 0;
  TrainHooks hooks;
  hooks.on_record = [&](const TrainStepRecord& r) {
    records.row(fmt::format("{},{},{},{}", r.step, r.t, r.mse_loss, r.grad_norm));
    window_loss += r.mse_loss;
    ++window;
  };
  hooks.on_checkpoint = [&](const TrainerState& s) {
    records.flush();
    save_checkpoint(Checkpoint{config, s}, dir / fmt::format("checkpoint-{:07d}.ckpt", s.step));
    if (s.step == config.train.steps) save_checkpoint(Checkpoint{config, s}, dir / "final.ckpt");
  };
  hooks.on_eval = [&](const TrainerState& s) {
    const MetaOptimizer model = meta_optimizer(config, s.params);
    const EvalReport rep = evaluate(make_adaptor(config, &model, &sched), world, settings, config.seed);
    evals.row(fmt::format("{},{},{}", s.step, rep.mean_acc, rep.ci95_half_width));
    evals.flush();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print(stderr, "step {:>7}  mse {:.4f}  novel acc {} ± {} %  ({:.0f}s)\n", s.step,
               window > 0 ? window_loss / window : 0.0, percent(rep.mean_acc), percent(rep.ci95_half_width), secs);
    window_loss = 0.0;
    window = 0;
  };

  if (state.step == config.train.steps) {
    save_checkpoint(Checkpoint{config, state}, dir / "final.ckpt");
  } else {
    train(config, world, state, hooks);
  }
  fmt::print("trained {} steps -> {}\n", state.step, (dir / "final.ckpt").string());
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string adaptor;
  std::string config;
  std::string results;
  std::vector<std::string> sets;
};

int cmd_eval(const EvalArgs& args) {
  RunConfig config;
  std::optional<MetaOptimizer> model;
  if (!args.checkpoint.empty()) {
    if (!args.config.empty()) throw ConfigError("--checkpoint carries its own config; use --set to adjust it");
    const Checkpoint ck = read_checkpoint(args.checkpoint);
    config = ck.config;
    apply_overrides(config, args.sets);
    config.validate();
    model = meta_optimizer(config, ck.state.params);
    if (model->params.feature_dim() != config.world.dim) throw ConfigError("world.dim differs from the checkpoint");
  } else {
    config = build_config(args.config, args.sets);
  }
  if (!args.adaptor.empty()) config.adaptor = parse_adaptor_kind(args.adaptor);
  if (config.adaptor == AdaptorKind::metadiff && !model) {
    throw ConfigError("the metadiff adaptor needs --checkpoint");
  }

  const ClassWorld world = world_for(config);
  const DiffusionSchedule sched = schedule_for(config);
  const EvalSettings settings = eval_settings(config);
  const EvalReport rep =
      evaluate(make_adaptor(config, model ? &*model : nullptr, &sched), world, settings, config.seed);

  const std::string name(to_string(config.adaptor));
  const fs::path dir = fresh_run_dir("eval");
  nlohmann::json record = {
      {"adaptor", name},
      {"ways", settings.ways},
      {"shots", settings.shots},
      {"queries_per_class", settings.queries_per_class},
      {"num_tasks", rep.num_tasks},
      {"mean_acc", rep.mean_acc},
      {"ci95", rep.ci95_half_width},
      {"excluded", rep.excluded},
      {"failures", rep.failures},
      {"valid", rep.valid},
      {"seed", config.seed},
      {"checkpoint", args.checkpoint},
      {"per_task_acc", rep.per_task_acc},
  };
  write_text(dir / "report.json", record.dump(2) + "\n");
  write_text(dir / "config.txt", to_text(config));

  const fs::path results = args.results.empty() ? output_root() / "results.csv" : fs::path(args.results);
  if (results.has_parent_path()) make_dir(results.parent_path());
  CsvAppender csv(results, "adaptor,N,K,num_tasks,mean_acc,ci95");
  csv.row(fmt::format("{},{},{},{},{},{}", name, settings.ways, settings.shots, rep.num_tasks, rep.mean_acc,
                      rep.ci95_half_width));

  for (const auto& f : rep.failures) fmt::print(stderr, "excluded {}\n", f);
  if (rep.num_tasks == 0) {
    fmt::print(stderr, "every task failed\n");
    return kExitNumerical;
  }
  fmt::print("{} {}-way {}-shot: {} ± {} % over {} tasks\n", name, settings.ways, settings.shots,
             percent(rep.mean_acc), percent(rep.ci95_half_width), rep.num_tasks);
  if (!rep.valid) {
    fmt::print(stderr, "strict mode: {} task(s) excluded, report invalid\n", rep.excluded);
    return kExitNumerical;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- trace

struct TraceArgs {
  std::string checkpoint;
  int tasks = 100;
  std::string out;
  std::vector<std::string> sets;
};

int cmd_trace(const TraceArgs& args) {
  const Checkpoint ck = read_checkpoint(args.checkpoint);
  RunConfig config = ck.config;
  apply_overrides(config, args.sets);
  config.validate();
  if (args.tasks < 1) throw ConfigError("--tasks must be >= 1");

  const ClassWorld world = world_for(config);
  const DiffusionSchedule sched = schedule_for(config);
  EvalSettings settings = eval_settings(config);
  settings.num_tasks = args.tasks;
  const ConvergenceReport rep =
      convergence_report(meta_optimizer(config, ck.state.params), world, settings, sched, config.seed,
                         config.eval.draws);

  const fs::path path = args.out.empty() ? fresh_run_dir("trace") / "trace.csv" : fs::path(args.out);
  std::string text = "t,acc,loss\n";
  for (std::size_t k = 0; k < rep.t.size(); ++k) {
    text += fmt::format("{},{},{}\n", rep.t[k], rep.accuracy[k], rep.loss[k]);
  }
  write_text(path, text);
  fmt::print("acc at t={}: {} %, at t=0: {} %  -> {}\n", rep.t.front(), percent(rep.accuracy.front()),
             percent(rep.accuracy.back()), path.string());
  return kExitOk;
}

// ---------------------------------------------------------------- inspect-schedule

struct ScheduleArgs {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::string out;
};

int cmd_inspect_schedule(const ScheduleArgs& args) {
  DiffusionSchedule sched = [&] {
    try {
      return DiffusionSchedule::linear(args.steps, args.beta_start, args.beta_end);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  std::string text = "t,beta,alpha_bar,gamma,eta,xi\n";
  for (int t = 1; t <= sched.steps(); ++t) {
    text += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", t, sched.beta(t), sched.alpha_bar(t),
                        sched.gamma(t), sched.eta(t), sched.xi(t));
  }
  if (args.out.empty()) {
    std::cout << text;
  } else {
    write_text(args.out, text);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-based meta-optimizer for few-shot classifier heads"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "diffopt 0.1.0");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Meta-train the noise predictor");
  train_cmd->add_option("--config,-c", train_args.config, "Config file (key = value)")->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train_args.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--out,-o", train_args.out, "Run directory (default: timestamped under the output root)");
  train_cmd->add_option("--set", train_args.sets, "Override a config key, key=value (repeatable)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate an adaptor on novel-split episodes");
  auto* ckpt_opt =
      eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);
  auto* adaptor_opt = eval_cmd->add_option("--adaptor", eval_args.adaptor, "metadiff, gda or momentum-gda")
                          ->check(CLI::IsMember({"metadiff", "gda", "momentum-gda"}));
  eval_cmd->add_option("--config,-c", eval_args.config, "Config file for baseline runs")->check(CLI::ExistingFile);
  eval_cmd->add_option("--results", eval_args.results, "Results CSV (default: <output root>/results.csv)");
  eval_cmd->add_option("--set", eval_args.sets, "Override a config key, key=value (repeatable)");
  eval_cmd->callback([&] {
    if (ckpt_opt->count() == 0 && adaptor_opt->count() == 0) {
      throw CLI::ValidationError("eval", "pass --checkpoint or --adaptor");
    }
  });

  TraceArgs trace_args;
  auto* trace_cmd = app.add_subcommand("trace", "Accuracy and loss along the denoising path");
  trace_cmd->add_option("--checkpoint", trace_args.checkpoint, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  trace_cmd->add_option("--tasks", trace_args.tasks, "Number of novel-split tasks")->capture_default_str();
  trace_cmd->add_option("--out,-o", trace_args.out, "Output CSV");
  trace_cmd->add_option("--set", trace_args.sets, "Override a config key, key=value (repeatable)");

  const RunConfig defaults;
  ScheduleArgs sched_args{defaults.schedule.steps, defaults.schedule.beta_start, defaults.schedule.beta_end, ""};
  auto* sched_cmd = app.add_subcommand("inspect-schedule", "Dump per-step schedule coefficients as CSV");
  sched_cmd->add_option("--steps,-T", sched_args.steps, "Number of diffusion steps")->capture_default_str();
  sched_cmd->add_option("--beta-start", sched_args.beta_start, "First beta")->capture_default_str();
  sched_cmd->add_option("--beta-end", sched_args.beta_end, "Last beta")->capture_default_str();
  sched_cmd->add_option("--out,-o", sched_args.out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*trace_cmd) return cmd_trace(trace_args);
    if (*sched_cmd) return cmd_inspect_schedule(sched_args);
  } catch (const NumericalError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitNumerical;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const CheckpointError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
