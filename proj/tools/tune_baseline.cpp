// Grid search for the gradient-descent baselines on base-split episodes.
//
// Novel classes are never touched, so the chosen settings can be frozen into
// a config and then evaluated on the novel split without leakage.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "diffopt/baselines.hpp"
#include "diffopt/config.hpp"
#include "diffopt/eval.hpp"
#include "diffopt/task_world.hpp"

using namespace diffopt;

namespace {

constexpr std::uint64_t kTuneStream = 0x74756e65;  // "tune"

struct Candidate {
  double lr = 0.0;
  int steps = 0;
  double momentum = 0.0;
  double mean = 0.0;
  double ci = 0.0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tune GDA baseline step count and learning rate on base-split episodes"};
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<double> lrs{0.01, 0.03, 0.1, 0.3, 1.0, 3.0};
  std::vector<int> steps{25, 50, 100, 200, 400};
  std::vector<double> momenta{0.0, 0.5, 0.9};
  int tasks = 300;
  app.add_option("--config,-c", config_path, "Config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "Override a config key, key=value (repeatable)");
  app.add_option("--lr", lrs, "Learning rates to try")->capture_default_str();
  app.add_option("--steps", steps, "Step counts to try")->capture_default_str();
  app.add_option("--momentum", momenta, "Momentum values to try; 0 is plain GDA")->capture_default_str();
  app.add_option("--tasks", tasks, "Validation episodes per setting")->capture_default_str()->check(
      CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    config.validate();

    const ClassWorld world = make_world(config.world.classes, config.world.dim, config.world.noise_scale,
                                        config.world.base_fraction, config.seed);
    const EvalSettings settings = eval_settings(config);
    const ClassifierKind kind = config.model.classifier;

    std::vector<TaskEpisode> episodes;
    std::vector<Rng> init_rngs;
    for (int i = 0; i < tasks; ++i) {
      Rng rng = Rng::derive(config.seed, kTuneStream, static_cast<std::uint64_t>(i));
      episodes.push_back(sample_episode(world, Split::base, settings.ways, settings.shots,
                                        settings.queries_per_class, rng));
      init_rngs.push_back(rng);
    }

    std::vector<Candidate> results;
    fmt::print("momentum,lr,steps,mean_acc,ci95\n");
    for (double mom : momenta) {
      for (double lr : lrs) {
        for (int n : steps) {
          std::vector<double> accs;
          accs.reserve(episodes.size());
          for (std::size_t i = 0; i < episodes.size(); ++i) {
            Rng rng = init_rngs[i];
            const TaskEpisode support = episodes[i].support_only();
            ClassifierWeights init = initial_weights(support, kind, config.model.temperature, config.baseline.init, rng);
            try {
              const ClassifierWeights w = mom == 0.0 ? gda_adapt(support, n, lr, std::move(init))
                                                     : momentum_gda_adapt(support, n, lr, mom, std::move(init));
              accs.push_back(accuracy(w, episodes[i].query));
            } catch (const NumericalError&) {
              accs.push_back(0.0);
            }
          }
          const Interval ci = confidence_interval(accs);
          results.push_back({lr, n, mom, ci.mean, ci.half_width});
          fmt::print("{},{},{},{:.4f},{:.4f}\n", mom, lr, n, ci.mean, ci.half_width);
        }
      }
    }

    auto best_for = [&](bool with_momentum) {
      const Candidate* best = nullptr;
      for (const auto& c : results) {
        if ((c.momentum > 0.0) != with_momentum) continue;
        if (best == nullptr || c.mean > best->mean) best = &c;
      }
      return best;
    };
    if (const Candidate* g = best_for(false)) {
      fmt::print(stderr, "gda:          baseline.lr = {}  baseline.steps = {}  ({:.2f} %)\n", g->lr, g->steps,
                 100.0 * g->mean);
    }
    if (const Candidate* m = best_for(true)) {
      fmt::print(stderr, "momentum-gda: baseline.lr = {}  baseline.steps = {}  baseline.momentum = {}  ({:.2f} %)\n",
                 m->lr, m->steps, m->momentum, 100.0 * m->mean);
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
