#include "diffopt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include <fmt/format.h>

namespace diffopt {

std::string_view to_string(AdaptorKind kind) {
  switch (kind) {
    case AdaptorKind::metadiff: return "metadiff";
    case AdaptorKind::gda: return "gda";
    case AdaptorKind::momentum_gda: return "momentum-gda";
  }
  return "?";
}

AdaptorKind parse_adaptor_kind(std::string_view text) {
  if (text == "metadiff") return AdaptorKind::metadiff;
  if (text == "gda") return AdaptorKind::gda;
  if (text == "momentum-gda") return AdaptorKind::momentum_gda;
  throw ConfigError("unknown adaptor '" + std::string(text) + "' (expected metadiff, gda or momentum-gda)");
}

std::string_view to_string(InitMode mode) { return mode == InitMode::zeros ? "zeros" : "normal"; }

InitMode parse_init_mode(std::string_view text) {
  if (text == "zeros") return InitMode::zeros;
  if (text == "normal") return InitMode::normal;
  throw ConfigError("unknown init mode '" + std::string(text) + "' (expected zeros or normal)");
}

namespace {

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as a number", key, text));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

template <class E, class Parse>
E parse_enum(std::string_view key, std::string_view text, Parse parse) {
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DIFFOPT_NUMBER_FIELD(member)                                                                  \
  Field {                                                                                             \
    [](RunConfig& c, std::string_view k, std::string_view v) {                                        \
      c.member = parse_number<std::remove_reference_t<decltype(c.member)>>(k, v);                     \
    },                                                                                                \
        [](const RunConfig& c) { return fmt::format("{}", c.member); }                                \
  }

#define DIFFOPT_BOOL_FIELD(member)                                                                           \
  Field {                                                                                                    \
    [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_bool(k, v); },               \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                          \
  }

#define DIFFOPT_ENUM_FIELD(member, parse)                                                                    \
  Field {                                                                                                    \
    [](RunConfig& c, std::string_view k, std::string_view v) {                                               \
      c.member = parse_enum<std::remove_reference_t<decltype(c.member)>>(                                    \
          k, v, [](std::string_view t) { return parse(t); });                                                \
    },                                                                                                       \
        [](const RunConfig& c) { return std::string(to_string(c.member)); }                                  \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", DIFFOPT_NUMBER_FIELD(seed)},
      {"world.classes", DIFFOPT_NUMBER_FIELD(world.classes)},
      {"world.dim", DIFFOPT_NUMBER_FIELD(world.dim)},
      {"world.noise_scale", DIFFOPT_NUMBER_FIELD(world.noise_scale)},
      {"world.base_fraction", DIFFOPT_NUMBER_FIELD(world.base_fraction)},
      {"schedule.steps", DIFFOPT_NUMBER_FIELD(schedule.steps)},
      {"schedule.beta_start", DIFFOPT_NUMBER_FIELD(schedule.beta_start)},
      {"schedule.beta_end", DIFFOPT_NUMBER_FIELD(schedule.beta_end)},
      {"model.skips", DIFFOPT_ENUM_FIELD(model.skips, parse_skip_mode)},
      {"model.grad_normalize", DIFFOPT_BOOL_FIELD(model.grad_normalize)},
      {"model.classifier", DIFFOPT_ENUM_FIELD(model.classifier, parse_classifier_kind)},
      {"model.temperature", DIFFOPT_NUMBER_FIELD(model.temperature)},
      {"train.steps", DIFFOPT_NUMBER_FIELD(train.steps)},
      {"train.lr", DIFFOPT_NUMBER_FIELD(train.lr)},
      {"train.weight_decay", DIFFOPT_NUMBER_FIELD(train.weight_decay)},
      {"train.checkpoint_interval", DIFFOPT_NUMBER_FIELD(train.checkpoint_interval)},
      {"train.eval_interval", DIFFOPT_NUMBER_FIELD(train.eval_interval)},
      {"train.eval_tasks", DIFFOPT_NUMBER_FIELD(train.eval_tasks)},
      {"train.ways", DIFFOPT_NUMBER_FIELD(train.ways)},
      {"train.shots", DIFFOPT_NUMBER_FIELD(train.shots)},
      {"train.aux_per_class", DIFFOPT_NUMBER_FIELD(train.aux_per_class)},
      {"train.target_steps", DIFFOPT_NUMBER_FIELD(train.target_steps)},
      {"train.target_lr", DIFFOPT_NUMBER_FIELD(train.target_lr)},
      {"train.target_norm", DIFFOPT_NUMBER_FIELD(train.target_norm)},
      {"eval.num_tasks", DIFFOPT_NUMBER_FIELD(eval.num_tasks)},
      {"eval.ways", DIFFOPT_NUMBER_FIELD(eval.ways)},
      {"eval.shots", DIFFOPT_NUMBER_FIELD(eval.shots)},
      {"eval.queries_per_class", DIFFOPT_NUMBER_FIELD(eval.queries_per_class)},
      {"eval.draws", DIFFOPT_NUMBER_FIELD(eval.draws)},
      {"eval.strict", DIFFOPT_BOOL_FIELD(eval.strict)},
      {"eval.threads", DIFFOPT_NUMBER_FIELD(eval.threads)},
      {"adaptor", DIFFOPT_ENUM_FIELD(adaptor, parse_adaptor_kind)},
      {"baseline.steps", DIFFOPT_NUMBER_FIELD(baseline.steps)},
      {"baseline.lr", DIFFOPT_NUMBER_FIELD(baseline.lr)},
      {"baseline.momentum", DIFFOPT_NUMBER_FIELD(baseline.momentum)},
      {"baseline.init", DIFFOPT_ENUM_FIELD(baseline.init, parse_init_mode)},
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, field] : fields()) out.push_back(key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

void RunConfig::validate() const {
  std::vector<std::string> errors;
  auto require = [&](bool ok, std::string_view key, std::string_view what) {
    if (!ok) errors.push_back(fmt::format("{}: {}", key, what));
  };
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };

  require(world.classes >= 2, "world.classes", "must be >= 2");
  require(world.dim >= 8 && world.dim % 4 == 0, "world.dim", "must be a multiple of 4 and >= 8");
  require(std::isfinite(world.noise_scale) && world.noise_scale >= 0.0, "world.noise_scale", "must be >= 0");
  require(world.base_fraction > 0.0 && world.base_fraction < 1.0, "world.base_fraction", "must lie in (0, 1)");
  const long num_base = std::lround(world.base_fraction * world.classes);
  const long num_novel = world.classes - num_base;
  require(num_base >= train.ways, "world.base_fraction", "base split has fewer classes than train.ways");
  require(num_novel >= eval.ways, "world.base_fraction", "novel split has fewer classes than eval.ways");

  require(schedule.steps >= 1, "schedule.steps", "must be >= 1");
  require(schedule.beta_start > 0.0 && schedule.beta_start < 1.0, "schedule.beta_start", "must lie in (0, 1)");
  require(schedule.beta_end > 0.0 && schedule.beta_end < 1.0, "schedule.beta_end", "must lie in (0, 1)");
  require(schedule.beta_start <= schedule.beta_end, "schedule.beta_start", "must be <= schedule.beta_end");

  require(finite_pos(model.temperature), "model.temperature", "must be > 0");

  require(train.steps >= 0, "train.steps", "must be >= 0");
  require(finite_pos(train.lr), "train.lr", "must be > 0");
  require(std::isfinite(train.weight_decay) && train.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
  require(train.checkpoint_interval >= 0, "train.checkpoint_interval", "must be >= 0 (0 disables)");
  require(train.eval_interval >= 0, "train.eval_interval", "must be >= 0 (0 disables)");
  require(train.eval_tasks >= 1, "train.eval_tasks", "must be >= 1");
  require(train.ways >= 2, "train.ways", "must be >= 2");
  require(train.shots >= 1, "train.shots", "must be >= 1");
  require(train.aux_per_class >= 1, "train.aux_per_class", "must be >= 1");
  require(train.target_steps >= 0, "train.target_steps", "must be >= 0");
  require(finite_pos(train.target_lr), "train.target_lr", "must be > 0");
  require(std::isfinite(train.target_norm) && train.target_norm >= 0.0, "train.target_norm", "must be >= 0");
  require(model.classifier == ClassifierKind::cosine || train.target_norm == 0.0, "train.target_norm",
          "only applies to cosine classifiers");

  require(eval.num_tasks >= 1, "eval.num_tasks", "must be >= 1");
  require(eval.ways >= 2, "eval.ways", "must be >= 2");
  require(eval.shots >= 1, "eval.shots", "must be >= 1");
  require(eval.queries_per_class >= 1, "eval.queries_per_class", "must be >= 1");
  require(eval.draws >= 1, "eval.draws", "must be >= 1");
  require(eval.threads >= 1 && eval.threads <= 256, "eval.threads", "must lie in [1, 256]");

  require(baseline.steps >= 0, "baseline.steps", "must be >= 0");
  require(finite_pos(baseline.lr), "baseline.lr", "must be > 0");
  require(baseline.momentum >= 0.0 && baseline.momentum < 1.0, "baseline.momentum", "must lie in [0, 1)");
  require(!(model.classifier == ClassifierKind::cosine && baseline.init == InitMode::zeros), "baseline.init",
          "zeros is invalid for a cosine classifier");

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::map<std::string, int, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}' (first set on line {})", line_no, key, it->second));
    }
    seen.emplace(std::string(key), line_no);
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += fmt::format("{} = {}\n", key, field.get(config));
  return out;
}

}  // namespace diffopt
