#include "afflab/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "afflab/error.hpp"
#include "afflab/keyvalue.hpp"
#include "afflab/pipeline.hpp"

namespace afflab {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config values for one command: flags beat the config file, which beats the
// built-in defaults. Every value read is recorded for the resolved snapshot.
class Settings {
 public:
  Settings(KeyValueFile file, std::string command) : file_(std::move(file)), command_(std::move(command)) {}

  void override_value(const std::string& section, const std::string& key, const std::string& value) {
    file_.section(section).set(key, value);
  }

  std::string text(const std::string& key, const std::string& fallback, const std::string& section = "") {
    const std::string& name = section.empty() ? command_ : section;
    std::string value = fallback;
    if (const auto* s = file_.find(name))
      if (auto v = s->get(key)) value = *v;
    resolved_.section(name).set(key, value);
    return value;
  }

  std::optional<std::string> optional_text(const std::string& key) {
    if (const auto* s = file_.find(command_))
      if (auto v = s->get(key)) {
        resolved_.section(command_).set(key, *v);
        return v;
      }
    return std::nullopt;
  }

  long long integer(const std::string& key, long long fallback, const std::string& section = "") {
    return parse_int(text(key, std::to_string(fallback), section), key);
  }

  double real(const std::string& key, double fallback) {
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, fallback).ptr;
    return parse_double(text(key, std::string(buf, end)), key);
  }

  bool flag(const std::string& key, bool fallback) {
    const std::string v = text(key, fallback ? "true" : "false");
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError(key + ": expected true or false, got '" + v + "'");
  }

  const KeyValueFile& resolved() const { return resolved_; }

 private:
  KeyValueFile file_;
  KeyValueFile resolved_;
  std::string command_;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    for (std::istringstream words(item); words >> item;) items.push_back(item);
  return items;
}

int positive(long long v, const char* what) {
  if (v < 1) throw UsageError(std::string(what) + " must be at least 1");
  return static_cast<int>(v);
}

AffordanceTask affordance_task(const std::string& token) {
  const auto t = parse_affordance_task(token);
  if (!t) throw UsageError("unknown affordance task '" + token + "' (suction, grasp)");
  return *t;
}

VisionTask vision_task(const std::string& token) {
  const auto t = parse_vision_task(token);
  if (!t) throw UsageError("unknown vision task '" + token + "'");
  return *t;
}

std::string object_set(Settings& s) {
  const std::string set = s.text("objects", "train");
  if (set != "train" && set != "test") throw UsageError("objects must be train or test");
  return set;
}

Resampling resampling(Settings& s) {
  const std::string r = s.text("resampling", "bilinear");
  if (r == "bilinear") return Resampling::kBilinear;
  if (r == "nearest") return Resampling::kNearest;
  throw UsageError("resampling must be bilinear or nearest");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

void write_curve(const fs::path& path, const Curve& curve) {
  std::ostringstream s;
  write_curve_csv(s, curve);
  write_text(path, s.str());
}

// Stats lookup order: explicit key, norm_stats.txt beside the given weights,
// norm_stats.txt in the output directory, freshly rendered statistics.
NormStats resolve_stats(Settings& s, const fs::path& out, const std::optional<std::string>& weights,
                        const Environment& env, std::uint64_t seed) {
  if (auto path = s.optional_text("stats")) return load_norm_stats(*path);
  std::vector<fs::path> candidates;
  if (weights) candidates.push_back(fs::path(*weights).parent_path() / "norm_stats.txt");
  candidates.push_back(out / "norm_stats.txt");
  for (const auto& c : candidates)
    if (fs::exists(c)) return load_norm_stats(c);
  return render_stats(env, 50, derive_seed(seed, 0x57a7));
}

struct Context {
  Settings settings;
  fs::path out;
  std::uint64_t seed = 0;
  std::ostream& log;
};

void cmd_dataset(Context& c) {
  auto& s = c.settings;
  const long long scenes = s.integer("scenes", 200);
  if (scenes < 1) throw UsageError("--scenes must be at least 1");
  const std::string set = object_set(s);
  const fs::path dir = s.text("dir", (c.out / "dataset").string());
  const auto spec = sim::load_scene_spec(sim::catalog_path(set));
  const auto dataset = build_dataset(spec.shapes, static_cast<int>(scenes), c.seed, {}, spec.instances, spec.config);
  save_dataset(dataset, dir);
  c.log << "wrote " << dataset.entries.size() << " scenes to " << dir.string() << '\n';
}

void cmd_pretrain(Context& c) {
  auto& s = c.settings;
  const VisionTask task = vision_task(s.text("task", "foreground"));
  PretrainConfig cfg;
  cfg.steps = static_cast<int>(s.integer("steps", cfg.steps));
  if (cfg.steps < 0) throw UsageError("--steps must be non-negative");
  cfg.batch = positive(s.integer("batch", cfg.batch), "--batch");
  cfg.lr = s.real("lr", cfg.lr);
  cfg.momentum = s.real("momentum", cfg.momentum);
  cfg.seed = c.seed;
  const fs::path dataset_dir = s.text("dataset", (c.out / "dataset").string());
  const fs::path weights = s.text("weights_out", (c.out / (std::string(to_string(task)) + ".anp1")).string());

  const auto dataset = load_dataset(dataset_dir);
  const auto result = pretrain_vision(task, dataset, cfg);
  if (!weights.parent_path().empty()) fs::create_directories(weights.parent_path());
  nn::save_params(result.params, weights);
  save_norm_stats(dataset.stats, weights.parent_path() / "norm_stats.txt");
  std::ostringstream curve;
  curve << "step,loss\n";
  for (std::size_t i = 0; i < result.losses.size(); ++i) curve << i << ',' << std::fixed << std::setprecision(6)
                                                               << result.losses[i] << '\n';
  write_text(fs::path(weights).replace_extension(".loss.csv"), curve.str());
  c.log << "pretrained " << to_string(task) << " for " << cfg.steps << " steps -> " << weights.string() << '\n';
}

void cmd_train(Context& c) {
  auto& s = c.settings;
  RunConfig cfg;
  cfg.task = affordance_task(s.text("task", "grasp"));
  const std::string init = s.text("init", "random");
  const auto strategy = parse_strategy(init);
  if (!strategy) throw UsageError("--init must be random, backbone_only or full");
  const auto source = s.optional_text("from");
  if (*strategy != Strategy::kRandom && !source) throw UsageError("--init " + init + " needs --from");
  cfg.attempts = static_cast<int>(s.integer("attempts", default_attempts(cfg.task)));
  if (cfg.attempts < 0) throw UsageError("--attempts must be non-negative");
  cfg.reset_every = positive(s.integer("reset_every", cfg.reset_every), "reset_every");
  cfg.batch = positive(s.integer("batch", cfg.batch), "--batch");
  cfg.lr = s.real("lr", cfg.lr);
  cfg.momentum = s.real("momentum", cfg.momentum);
  cfg.replay_capacity = static_cast<std::size_t>(positive(s.integer("replay_capacity", 2000), "replay_capacity"));
  cfg.replay_alpha = s.real("replay_alpha", cfg.replay_alpha);
  const std::string exploration = s.text("exploration", "boltzmann");
  if (exploration == "greedy") {
    cfg.exploration = Exploration::greedy();
  } else if (exploration == "boltzmann") {
    cfg.exploration = Exploration::boltzmann(s.real("temperature", cfg.exploration.temperature));
  } else {
    throw UsageError("--exploration must be greedy or boltzmann");
  }
  cfg.resampling = resampling(s);
  cfg.curve_window = positive(s.integer("window", cfg.curve_window), "window");
  cfg.seed = c.seed;
  const std::string set = object_set(s);
  const std::string name = std::string(to_string(cfg.task)) + "_" + init;
  const fs::path weights = s.text("weights_out", (c.out / (name + ".anp1")).string());

  auto params = init_affordance(*strategy, source ? std::optional<fs::path>(*source) : std::nullopt,
                                derive_seed(c.seed, 21));
  Environment env = make_environment(set, {});
  env.stats = resolve_stats(s, c.out, source, env, c.seed);
  const auto result = train_affordance(env, std::move(params), cfg);

  if (!weights.parent_path().empty()) fs::create_directories(weights.parent_path());
  nn::save_params(result.params, weights);
  save_norm_stats(env.stats, weights.parent_path() / "norm_stats.txt");
  write_curve(fs::path(weights).replace_extension(".curve.csv"), result.curve);
  c.log << "trained " << name << " for " << cfg.attempts << " attempts, final rate "
        << final_rate(result.curve, cfg.curve_window) << " -> " << weights.string() << '\n';
}

void cmd_eval(Context& c, std::ostream& out) {
  auto& s = c.settings;
  EvalConfig cfg;
  cfg.task = affordance_task(s.text("task", "grasp"));
  const std::string set = object_set(s);
  cfg.oracle = s.flag("oracle", false);
  cfg.max_attempts = static_cast<int>(s.integer("attempts", evaluation_cap(set)));
  if (cfg.max_attempts < 1) throw UsageError("--attempts must be at least 1");
  cfg.scene_seed = static_cast<std::uint64_t>(s.integer("scene_seed", static_cast<long long>(kCanonicalSeed)));
  cfg.resampling = resampling(s);
  cfg.seed = c.seed;
  const auto weights = s.optional_text("weights");
  if (!weights && !cfg.oracle) throw UsageError("eval needs --weights (or --oracle)");

  Environment env = make_environment(set, {});
  const nn::NetParams params = weights ? nn::load_params(*weights) : nn::init_params(c.seed);
  if (!cfg.oracle) env.stats = resolve_stats(s, c.out, weights, env, c.seed);
  const auto result = evaluate(env, params, cfg);

  nlohmann::ordered_json record;
  record["task"] = to_string(cfg.task);
  record["objects"] = set;
  record["policy"] = cfg.oracle ? "oracle" : "model";
  record["successes"] = result.successes;
  record["attempts"] = result.attempts;
  record["success_rate"] = result.success_rate;
  record["remaining_objects"] = result.remaining;
  const std::string text = record.dump() + "\n";
  out << text;
  write_text(c.out / ("eval_" + std::string(to_string(cfg.task)) + "_" + set + ".json"), text);
}

void cmd_bench(Context& c) {
  auto& s = c.settings;
  BenchConfig cfg = default_bench_config();
  const int n_seeds = positive(s.integer("seeds", 5), "--seeds");
  cfg.seeds.clear();
  for (int i = 0; i < n_seeds; ++i) cfg.seeds.push_back(derive_seed(c.seed, static_cast<std::uint64_t>(i)));
  const auto strategy = parse_strategy(s.text("strategy", "full"));
  if (!strategy || *strategy == Strategy::kRandom) throw UsageError("--strategy must be full or backbone_only");
  std::vector<AffordanceTask> tasks;
  for (const auto& t : split_list(s.text("tasks", "suction,grasp"))) tasks.push_back(affordance_task(t));
  cfg.jobs.clear();
  for (const auto& v : split_list(s.text("vision_tasks", "random,center,corner,edge,foreground,flat_surface"))) {
    if (v != "random") vision_task(v);
    for (const auto t : tasks) cfg.jobs.push_back({v, v == "random" ? Strategy::kRandom : *strategy, t});
  }
  if (cfg.jobs.empty()) throw UsageError("bench needs at least one configuration");
  cfg.dataset_scenes = positive(s.integer("dataset_scenes", cfg.dataset_scenes), "dataset_scenes");
  cfg.pretrain.steps = static_cast<int>(s.integer("pretrain_steps", cfg.pretrain.steps));
  cfg.suction_attempts = positive(s.integer("suction_attempts", cfg.suction_attempts), "suction_attempts");
  cfg.grasp_attempts = positive(s.integer("grasp_attempts", cfg.grasp_attempts), "grasp_attempts");
  cfg.threads = static_cast<unsigned>(s.integer("threads", 0));
  cfg.run.resampling = resampling(s);

  const auto report = run_benchmark(cfg, [&](const std::string& msg) { c.log << msg << '\n'; });
  std::ostringstream csv, table;
  write_report_csv(csv, report);
  write_report_table(table, report);
  write_text(c.out / "report.csv", csv.str());
  write_text(c.out / "report.txt", table.str());
  fs::create_directories(c.out / "curves");
  for (const auto& run : report.runs)
    write_curve(c.out / "curves" /
                    (run.job.vision_task + "_" + std::string(to_string(run.job.strategy)) + "_" +
                     std::string(to_string(run.job.task)) + "_seed" + std::to_string(run.seed) + ".csv"),
                run.curve);
}

void cmd_render(Context& c) {
  auto& s = c.settings;
  const AffordanceTask task = affordance_task(s.text("task", "suction"));
  const std::string set = object_set(s);
  const auto scene_seed = static_cast<std::uint64_t>(s.integer("scene_seed", static_cast<long long>(kCanonicalSeed)));
  std::optional<int> plane;
  if (auto p = s.optional_text("plane")) {
    plane = static_cast<int>(parse_int(*p, "plane"));
    const int planes = task == AffordanceTask::kGrasp ? kGraspAngles : 1;
    if (*plane < 0 || *plane >= planes) throw UsageError("--plane out of range for " + std::string(to_string(task)));
  }
  const Resampling mode = resampling(s);
  const auto weights = s.optional_text("weights");
  const fs::path dir = s.text("dir", (c.out / "render").string());

  Environment env = make_environment(set, {});
  const nn::NetParams params = weights ? nn::load_params(*weights) : nn::init_params(c.seed);
  env.stats = resolve_stats(s, c.out, weights, env, c.seed);
  const sim::Scene scene = sim::reset(env.shapes, env.n_instances, scene_seed, env.config);
  const Heightmap map = sim::render(scene);
  const auto aff = predict(task, params, normalize(map, env.stats), mode);
  for (const auto& f : render_affordance(aff, map, dir, plane)) c.log << "wrote " << f.string() << '\n';
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kCacheMismatch:
    case ErrorCode::kDivergedGradient:
    case ErrorCode::kIncompatibleArchitecture:
      return kExitModel;
    default:
      return kExitData;
  }
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vision-pretrained affordance learning for bin picking in a simulated bin", "afflab"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "key-value config file; flags override it");
  app.add_option("--seed", seed, "global seed");
  app.add_option("--out", out_dir, "output directory (default: $AFFLAB_OUT or ./out)");

  auto* dataset = app.add_subcommand("dataset", "render scenes and write vision labels");
  dataset->add_option("--scenes", "number of scenes");
  dataset->add_option("--objects", "object set: train or test");
  dataset->add_option("--dir", "dataset directory (default <out>/dataset)");

  auto* pretrain = app.add_subcommand("pretrain", "train a vision model on a dataset");
  pretrain->add_option("--task", "edge, corner, center, foreground or flat_surface");
  pretrain->add_option("--steps", "SGD steps");
  pretrain->add_option("--batch", "scenes per step");
  pretrain->add_option("--lr", "learning rate");
  pretrain->add_option("--momentum", "momentum");
  pretrain->add_option("--dataset", "dataset directory (default <out>/dataset)");
  pretrain->add_option("--weights-out", "weights file (default <out>/<task>.anp1)");

  auto* train = app.add_subcommand("train", "fine-tune an affordance model by trial and error");
  train->add_option("--task", "suction or grasp");
  train->add_option("--init", "random, backbone_only or full");
  train->add_option("--from", "vision weights used by backbone_only/full");
  train->add_option("--attempts", "picking attempts");
  train->add_option("--objects", "object set: train or test");
  train->add_option("--batch", "replay batch size");
  train->add_option("--lr", "learning rate");
  train->add_option("--momentum", "momentum");
  train->add_option("--exploration", "boltzmann or greedy");
  train->add_option("--temperature", "Boltzmann temperature");
  train->add_option("--resampling", "bilinear or nearest");
  train->add_option("--stats", "normalization statistics file");
  train->add_option("--weights-out", "weights file (default <out>/<task>_<init>.anp1)");

  auto* eval = app.add_subcommand("eval", "greedy test run on the canonical arrangement");
  eval->add_option("--task", "suction or grasp");
  eval->add_option("--objects", "object set: train (25 attempts) or test (15 attempts)");
  eval->add_option("--weights", "affordance weights");
  eval->add_option("--attempts", "attempt cap override");
  eval->add_option("--scene-seed", "arrangement seed (default 999)");
  eval->add_option("--resampling", "bilinear or nearest");
  eval->add_option("--stats", "normalization statistics file");
  eval->add_flag("--oracle", "pick actions from simulator ground truth");

  auto* bench = app.add_subcommand("bench", "pretrain, transfer, train and evaluate over a grid and seeds");
  bench->add_option("--seeds", "number of seeds");
  bench->add_option("--vision-tasks", "comma list of random and vision tasks");
  bench->add_option("--tasks", "comma list of affordance tasks");
  bench->add_option("--strategy", "transfer for pretrained rows: full or backbone_only");
  bench->add_option("--dataset-scenes", "scenes per pretraining dataset");
  bench->add_option("--pretrain-steps", "pretraining steps");
  bench->add_option("--suction-attempts", "suction training attempts");
  bench->add_option("--grasp-attempts", "grasp training attempts");
  bench->add_option("--threads", "worker threads (0: all cores)");
  bench->add_option("--resampling", "bilinear or nearest");

  auto* render = app.add_subcommand("render", "write affordance heatmaps as PNG");
  render->add_option("--task", "suction or grasp");
  render->add_option("--weights", "affordance weights (random init when absent)");
  render->add_option("--plane", "grasp rotation plane to write");
  render->add_option("--objects", "object set: train or test");
  render->add_option("--scene-seed", "arrangement seed (default 999)");
  render->add_option("--resampling", "bilinear or nearest");
  render->add_option("--stats", "normalization statistics file");
  render->add_option("--dir", "image directory (default <out>/render)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  try {
    KeyValueFile file;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
      file = load_key_value(config_path);
    }
    Settings settings(std::move(file), command);
    if (seed) settings.override_value("global", "seed", std::to_string(*seed));
    if (!out_dir.empty()) settings.override_value("global", "out", out_dir);
    for (const CLI::Option* opt : sub->get_options()) {
      if (opt->count() == 0 || opt->get_lnames().empty()) continue;
      std::string key = opt->get_lnames().front();
      std::replace(key.begin(), key.end(), '-', '_');
      if (key == "help") continue;
      std::string value;
      if (opt->get_expected_min() == 0) {
        value = "true";
      } else {
        for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
      }
      settings.override_value(command, key, value);
    }

    const char* env_out = std::getenv("AFFLAB_OUT");
    const fs::path out_path = settings.text("out", env_out && *env_out ? env_out : "out", "global");
    const auto global_seed = static_cast<std::uint64_t>(settings.integer("seed", 0, "global"));
    fs::create_directories(out_path);
    std::ofstream sidecar(out_path / (command + ".log"), std::ios::app);
    sidecar << "[" << timestamp() << "] start " << command << '\n';

    Context ctx{std::move(settings), out_path, global_seed, err};
    if (command == "dataset") cmd_dataset(ctx);
    else if (command == "pretrain") cmd_pretrain(ctx);
    else if (command == "train") cmd_train(ctx);
    else if (command == "eval") cmd_eval(ctx, out);
    else if (command == "bench") cmd_bench(ctx);
    else if (command == "render") cmd_render(ctx);

    std::ostringstream snapshot;
    write_key_value(snapshot, ctx.settings.resolved());
    write_text(out_path / ("resolved_config_" + command + ".txt"), snapshot.str());
    sidecar << "[" << timestamp() << "] done " << command << '\n';
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace afflab
