#include "afflab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "afflab/error.hpp"

namespace afflab {

namespace {

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

void add_scaled(nn::NetParams& acc, const nn::NetParams& g, float scale) {
  for (std::size_t t = 0; t < acc.tensors.size(); ++t) {
    auto& a = acc.tensors[t].values;
    const auto& b = g.tensors[t].values;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  }
}

std::uint64_t task_stream(std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

// Next arrangement of a seed stream. A seed whose placement fails (about one
// in a few thousand) is skipped; a long run of failures is a real overfull bin.
sim::Scene stream_scene(const Environment& env, std::uint64_t stream, std::uint64_t& next) {
  for (int skipped = 0;; ++skipped) {
    try {
      return sim::reset(env.shapes, env.n_instances, derive_seed(stream, next++), env.config);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBinOverfull || skipped >= 20) throw;
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string_view to_string(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::kRandom: return "random";
    case Strategy::kBackboneOnly: return "backbone_only";
    case Strategy::kFull: return "full";
  }
  return "random";
}

std::optional<Strategy> parse_strategy(std::string_view token) noexcept {
  if (token == "random") return Strategy::kRandom;
  if (token == "backbone_only") return Strategy::kBackboneOnly;
  if (token == "full") return Strategy::kFull;
  return std::nullopt;
}

int evaluation_cap(std::string_view object_set) noexcept { return object_set == "test" ? 15 : 25; }

int default_attempts(AffordanceTask task) noexcept { return task == AffordanceTask::kSuction ? 600 : 1500; }

Environment make_environment(std::string_view object_set, const NormStats& stats) {
  return make_environment(sim::load_scene_spec(sim::catalog_path(object_set)), std::string(object_set), stats);
}

Environment make_environment(const sim::SceneSpec& spec, std::string object_set, const NormStats& stats) {
  Environment env;
  env.object_set = std::move(object_set);
  env.config = spec.config;
  env.shapes = std::make_shared<const std::vector<sim::ObjectShape>>(spec.shapes);
  env.n_instances = spec.instances;
  env.stats = stats;
  return env;
}

NormStats render_stats(const Environment& env, int n_scenes, std::uint64_t seed) {
  std::vector<Heightmap> maps;
  std::uint64_t next = 0;
  for (int i = 0; i < n_scenes; ++i) maps.push_back(sim::render(stream_scene(env, seed, next)));
  return compute_norm_stats(maps);
}

PretrainResult pretrain_vision(VisionTask task, const VisionDataset& dataset, const PretrainConfig& cfg,
                               const nn::NetParams* init) {
  if (dataset.entries.empty()) throw Error(ErrorCode::kEmptyDataset, "pretraining needs a non-empty dataset");
  if (cfg.steps < 0 || cfg.batch < 1) throw Error(ErrorCode::kInvalidArgument, "bad pretraining schedule");
  PretrainResult result{init ? *init : nn::init_params(cfg.seed), {}};
  if (cfg.steps == 0) return result;

  const std::size_t t = static_cast<std::size_t>(task);
  std::vector<NormalizedInput> inputs;
  inputs.reserve(dataset.entries.size());
  for (const auto& e : dataset.entries) inputs.push_back(normalize(e.map, dataset.stats));

  Rng rng(derive_seed(cfg.seed, 0x9e7));
  nn::NetParams velocity;
  nn::ForwardCache<float> cache;
  for (int step = 0; step < cfg.steps; ++step) {
    auto grads = nn::NetParams::zeros();
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t i = uniform_index(rng, inputs.size());
      const auto& entry = dataset.entries[i];
      const auto logits = nn::forward(result.params, inputs[i], &cache);
      const auto report = nn::bce_loss_masked<float>(logits, entry.labels[t].labels, entry.map.valid);
      add_scaled(grads, nn::backward(result.params, cache, std::span<const float>(report.grad_logits)),
                 1.0f / static_cast<float>(cfg.batch));
      loss += report.loss / cfg.batch;
    }
    nn::sgd_step(result.params, grads, cfg.lr, cfg.momentum, velocity);
    result.losses.push_back(loss);
  }
  return result;
}

double label_accuracy(const nn::NetParams& params, VisionTask task, const VisionDataset& dataset) {
  const std::size_t t = static_cast<std::size_t>(task);
  std::size_t correct = 0, total = 0;
  for (const auto& e : dataset.entries) {
    const auto logits = nn::forward(params, normalize(e.map, dataset.stats));
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (!e.map.valid[i]) continue;
      ++total;
      correct += (logits[i] > 0.0f) == (e.labels[t].labels[i] != 0);
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

nn::NetParams init_affordance(Strategy strategy, const nn::NetParams* source, std::uint64_t seed) {
  if (strategy == Strategy::kRandom) return nn::init_params(seed);
  if (!source) throw Error(ErrorCode::kInvalidArgument, "transfer strategy needs source weights");
  nn::check_layout(*source);
  if (strategy == Strategy::kFull) return *source;
  nn::NetParams params = nn::init_params(seed);
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    if (params.tensors[i].group == nn::Group::kBackbone) params.tensors[i] = source->tensors[i];
  return params;
}

nn::NetParams init_affordance(Strategy strategy, const std::optional<std::filesystem::path>& source,
                              std::uint64_t seed) {
  if (strategy == Strategy::kRandom) return nn::init_params(seed);
  if (!source) throw Error(ErrorCode::kInvalidArgument, "transfer strategy needs a source weights file");
  if (strategy == Strategy::kFull) return nn::load_params(*source);
  nn::NetParams params = nn::init_params(seed);
  nn::load_params_group(*source, nn::Group::kBackbone, params);
  return params;
}

void write_curve_csv(std::ostream& out, const Curve& curve) {
  out << "attempt,success,running_rate,loss\n";
  for (const auto& p : curve)
    out << p.attempt << ',' << p.success << ',' << format_double(p.running_rate) << ',' << format_double(p.loss)
        << '\n';
}

double final_rate(const Curve& curve, int window) {
  if (curve.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(curve.size(), static_cast<std::size_t>(std::max(1, window)));
  int hits = 0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) hits += curve[i].success;
  return static_cast<double>(hits) / n;
}

PixelGradient pixel_gradient(const nn::NetParams& params, const NormalizedInput& input, AffordanceTask task,
                             int angle_index, int row, int col, int label, Resampling mode) {
  // The logit at (row, col) only sees inputs within the receptive radius, so
  // a window of that radius (clipped to the frame, where the zero padding is
  // the same as for the full image) yields the same logit and gradients.
  constexpr int R = nn::receptive_radius();
  const int H = input.height, W = input.width;
  if (row < 0 || col < 0 || row >= H || col >= W) throw Error(ErrorCode::kInvalidTarget, "pixel outside the input");
  const int r0 = std::max(0, row - R), r1 = std::min(H, row + R + 1);
  const int c0 = std::max(0, col - R), c1 = std::min(W, col + R + 1);
  const int k = task == AffordanceTask::kGrasp ? angle_index : 0;
  const Planes<float> window = rotate_window(input, k, mode, r0, c0, r1 - r0, c1 - c0);

  nn::ForwardCache<float> cache;
  const auto logits = nn::forward(params, window, &cache);
  const std::size_t at = static_cast<std::size_t>(row - r0) * (c1 - c0) + (col - c0);
  std::vector<std::uint8_t> target(logits.size(), 0), mask(logits.size(), 0);
  target[at] = static_cast<std::uint8_t>(label);
  mask[at] = 1;
  const auto report = nn::bce_loss_masked<float>(logits, target, mask);
  return {logits[at], report.loss, nn::backward(params, cache, std::span<const float>(report.grad_logits))};
}

double replay_update(nn::NetParams& params, nn::NetParams& velocity, ReplayBuffer& buffer, const NormStats& stats,
                     const RunConfig& cfg, Rng& rng) {
  const auto ids = buffer.sample(static_cast<std::size_t>(cfg.batch), rng);
  auto grads = nn::NetParams::zeros();
  double loss = 0.0;
  std::vector<std::pair<std::uint64_t, double>> errors;
  for (const auto id : ids) {
    const Transition& t = buffer.at(id);
    const auto input = normalize(*t.map, stats);
    const auto pg = pixel_gradient(params, input, cfg.task, t.action.angle_index, t.action.frame_pixel[0],
                                   t.action.frame_pixel[1], t.label, cfg.resampling);
    add_scaled(grads, pg.grads, 1.0f / static_cast<float>(ids.size()));
    loss += pg.loss / ids.size();
    errors.emplace_back(id, nn::sigmoid(static_cast<double>(pg.logit)) - t.label);
  }
  nn::sgd_step(params, grads, cfg.lr, cfg.momentum, velocity);
  for (const auto& [id, err] : errors) buffer.update_priority(id, err);
  return loss;
}

TrainResult train_affordance(const Environment& env, nn::NetParams params, const RunConfig& cfg,
                             const AttemptHook& hook) {
  if (cfg.attempts < 0 || cfg.batch < 1 || cfg.reset_every < 1 || cfg.curve_window < 1)
    throw Error(ErrorCode::kInvalidArgument, "bad training configuration");
  nn::check_layout(params);
  TrainResult result;
  if (cfg.attempts == 0) {
    result.params = std::move(params);
    return result;
  }

  const std::uint64_t scene_stream = derive_seed(cfg.seed, 1);
  Rng action_rng(derive_seed(cfg.seed, 2));
  Rng replay_rng(derive_seed(cfg.seed, 3));
  ReplayBuffer buffer(cfg.replay_capacity, cfg.replay_alpha);
  nn::NetParams velocity;

  sim::Scene scene;
  int since_reset = 0;
  auto new_scene = [&] {
    std::uint64_t next = result.scenes_used;
    scene = stream_scene(env, scene_stream, next);
    result.scenes_used = next;
    since_reset = 0;
  };
  new_scene();

  int hits_in_window = 0;
  for (int attempt = 0; attempt < cfg.attempts; ++attempt) {
    if (sim::remaining_objects(scene) == 0 || since_reset >= cfg.reset_every) new_scene();
    auto map = std::make_shared<const Heightmap>(sim::render(scene));
    const auto aff = predict(cfg.task, params, normalize(*map, env.stats), cfg.resampling);
    const Action action = select_action(aff, cfg.exploration, action_rng);
    const auto outcome = execute(scene, action_to_command(action, *map, cfg.task));
    ++since_reset;
    if (hook) hook(attempt, action, outcome);

    buffer.push({map, action, outcome.label, 1.0});
    const double loss = replay_update(params, velocity, buffer, env.stats, cfg, replay_rng);

    hits_in_window += outcome.label;
    if (attempt >= cfg.curve_window) hits_in_window -= result.curve[attempt - cfg.curve_window].success;
    const int span = std::min(attempt + 1, cfg.curve_window);
    result.curve.push_back({attempt, outcome.label, static_cast<double>(hits_in_window) / span, loss});
  }
  result.params = std::move(params);
  return result;
}

std::optional<Action> oracle_action(const sim::Scene& scene, const Heightmap& map, AffordanceTask task) {
  const int H = map.height, W = map.width;
  const int planes = task == AffordanceTask::kGrasp ? kGraspAngles : 1;
  for (int k = 0; k < planes; ++k)
    for (int u = 0; u < H; ++u)
      for (int v = 0; v < W; ++v) {
        if (scene.owner[map.index(u, v)] < 0) continue;
        Action a;
        a.pixel = {u, v};
        a.angle_index = k;
        a.value = 1.0;
        const auto [fr, fc] = frame_to_image(-k, u, v, H, W);
        a.frame_pixel = nearest_pixel(fr, fc, H, W);
        const Command cmd = action_to_command(a, map, task);
        const bool ok = std::holds_alternative<sim::SuctionCommand>(cmd)
                            ? sim::assess_suction(scene, std::get<sim::SuctionCommand>(cmd)).outcome.label == 1
                            : sim::assess_grasp(scene, std::get<sim::GraspCommand>(cmd)).outcome.label == 1;
        if (ok) return a;
      }
  return std::nullopt;
}

EvalResult evaluate(const Environment& env, const nn::NetParams& params, const EvalConfig& cfg) {
  sim::Scene scene = sim::reset(env.shapes, env.n_instances, cfg.scene_seed, env.config);
  if (sim::remaining_objects(scene) == 0) throw Error(ErrorCode::kEmptyScene, "canonical arrangement is empty");
  const int cap = cfg.max_attempts > 0 ? cfg.max_attempts : evaluation_cap(env.object_set);
  const int H = scene.height(), W = scene.width();
  const int planes = cfg.task == AffordanceTask::kGrasp ? kGraspAngles : 1;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<std::uint8_t> open(plane * planes, 1);
  auto block = [&](int k, int row, int col) {
    for (int du = -2; du <= 2; ++du)
      for (int dv = -2; dv <= 2; ++dv) {
        const int r = row + du, c = col + dv;
        if (r >= 0 && c >= 0 && r < H && c < W) open[k * plane + static_cast<std::size_t>(r) * W + c] = 0;
      }
  };

  Rng rng(derive_seed(cfg.seed, 7));
  EvalResult result;
  for (int attempt = 0; attempt < cap && sim::remaining_objects(scene) > 0; ++attempt) {
    const Heightmap map = sim::render(scene);
    Action action;
    if (cfg.oracle) {
      const auto a = oracle_action(scene, map, cfg.task);
      action = a ? *a : Action{};
    } else {
      const auto aff = predict(cfg.task, params, normalize(map, env.stats), cfg.resampling);
      if (std::none_of(open.begin(), open.end(), [](std::uint8_t o) { return o != 0; }))
        std::fill(open.begin(), open.end(), 1);
      try {
        action = select_action(aff, Exploration::greedy(), rng, &open);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNoValidAction) throw;
        std::fill(open.begin(), open.end(), 1);
        action = select_action(aff, Exploration::greedy(), rng, &open);
      }
    }
    const auto outcome = execute(scene, action_to_command(action, map, cfg.task));
    result.successes += outcome.label;
    result.log.push_back({attempt, action, outcome});
    if (outcome.label == 1) {
      std::fill(open.begin(), open.end(), 1);
    } else if (!cfg.oracle) {
      block(action.angle_index, action.frame_pixel[0], action.frame_pixel[1]);
      if (planes > 1) {
        const int twin = (action.angle_index + kGraspAngles / 2) % kGraspAngles;
        const auto [fr, fc] = frame_to_image(-twin, action.pixel[0], action.pixel[1], H, W);
        const auto [tr, tc] = nearest_pixel(fr, fc, H, W);
        block(twin, tr, tc);
      }
    }
  }
  result.attempts = static_cast<int>(result.log.size());
  result.success_rate = result.attempts == 0 ? 0.0 : static_cast<double>(result.successes) / result.attempts;
  result.remaining = sim::remaining_objects(scene);
  return result;
}

int first_attempt_successes(const Environment& env, const nn::NetParams& params, AffordanceTask task, int n,
                            std::uint64_t seed, Resampling mode) {
  int hits = 0;
  std::uint64_t next = 0;
  for (int i = 0; i < n; ++i) {
    sim::Scene scene = stream_scene(env, seed, next);
    const Heightmap map = sim::render(scene);
    Rng rng(derive_seed(seed ^ 0xa5a5a5a5ull, i));
    const auto aff = predict(task, params, normalize(map, env.stats), mode);
    const Action action = select_action(aff, Exploration::greedy(), rng);
    hits += execute(scene, action_to_command(action, map, task)).label;
  }
  return hits;
}

// Benchmark ---------------------------------------------------------------

std::vector<BenchJob> default_bench_grid(Strategy pretrained_strategy) {
  std::vector<BenchJob> jobs;
  for (const auto task : {AffordanceTask::kSuction, AffordanceTask::kGrasp})
    jobs.push_back({"random", Strategy::kRandom, task});
  for (const VisionTask v : {VisionTask::kCenter, VisionTask::kCorner, VisionTask::kEdge, VisionTask::kForeground,
                             VisionTask::kFlatSurface})
    for (const auto task : {AffordanceTask::kSuction, AffordanceTask::kGrasp})
      jobs.push_back({std::string(to_string(v)), pretrained_strategy, task});
  return jobs;
}

BenchConfig default_bench_config() {
  BenchConfig cfg;
  cfg.jobs = default_bench_grid();
  cfg.train_spec = sim::load_scene_spec(sim::catalog_path("train"));
  cfg.test_spec = sim::load_scene_spec(sim::catalog_path("test"));
  return cfg;
}

std::uint64_t dataset_seed(std::uint64_t run_seed) { return derive_seed(run_seed, 11); }

std::uint64_t pretrain_seed(std::uint64_t run_seed, VisionTask task) {
  return derive_seed(run_seed, task_stream(to_string(task)));
}

double t_quantile_975(int dof) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                     2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                     2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return 0.0;
  if (dof <= 30) return table[dof - 1];
  return 1.959964;
}

MeanCI mean_ci95(const std::vector<double>& values) {
  MeanCI out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  out.low = out.high = out.mean;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double half = t_quantile_975(static_cast<int>(values.size()) - 1) * std::sqrt(ss / (n - 1.0) / n);
  out.low = out.mean - half;
  out.high = out.mean + half;
  return out;
}

BenchReport run_benchmark(const BenchConfig& cfg, const ProgressHook& progress) {
  if (cfg.jobs.empty()) throw Error(ErrorCode::kInvalidArgument, "benchmark needs at least one configuration");
  if (cfg.seeds.empty()) throw Error(ErrorCode::kInvalidArgument, "benchmark needs at least one seed");
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };
  for (const auto& job : cfg.jobs)
    if (job.vision_task != "random" && !parse_vision_task(job.vision_task))
      throw Error(ErrorCode::kInvalidArgument, "unknown vision task '" + job.vision_task + "'");

  // Datasets (one per seed) provide pretraining data and the normalization
  // statistics shared by every run of that seed.
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<VisionDataset> datasets(n_seeds);
  parallel_for(n_seeds, cfg.threads, [&](std::size_t s) {
    datasets[s] = build_dataset(cfg.train_spec.shapes, cfg.dataset_scenes, dataset_seed(cfg.seeds[s]), {},
                                cfg.train_spec.instances, cfg.train_spec.config);
    say("dataset seed " + std::to_string(cfg.seeds[s]) + " ready");
  });

  std::vector<std::pair<VisionTask, std::size_t>> pretrain_keys;
  for (const auto& job : cfg.jobs) {
    if (job.strategy == Strategy::kRandom) continue;
    const VisionTask v = *parse_vision_task(job.vision_task);
    for (std::size_t s = 0; s < n_seeds; ++s)
      if (std::find(pretrain_keys.begin(), pretrain_keys.end(), std::pair{v, s}) == pretrain_keys.end())
        pretrain_keys.emplace_back(v, s);
  }
  std::vector<nn::NetParams> pretrained(pretrain_keys.size());
  parallel_for(pretrain_keys.size(), cfg.threads, [&](std::size_t i) {
    const auto [v, s] = pretrain_keys[i];
    PretrainConfig pc = cfg.pretrain;
    pc.seed = pretrain_seed(cfg.seeds[s], v);
    pretrained[i] = pretrain_vision(v, datasets[s], pc).params;
    say("pretrained " + std::string(to_string(v)) + " seed " + std::to_string(cfg.seeds[s]));
  });
  auto source_for = [&](const BenchJob& job, std::size_t s) -> const nn::NetParams* {
    if (job.strategy == Strategy::kRandom) return nullptr;
    const auto key = std::pair{*parse_vision_task(job.vision_task), s};
    const auto it = std::find(pretrain_keys.begin(), pretrain_keys.end(), key);
    return &pretrained[static_cast<std::size_t>(it - pretrain_keys.begin())];
  };

  BenchReport report;
  report.runs.resize(cfg.jobs.size() * n_seeds);
  parallel_for(report.runs.size(), cfg.threads, [&](std::size_t r) {
    const std::size_t j = r / n_seeds, s = r % n_seeds;
    const BenchJob& job = cfg.jobs[j];
    const std::uint64_t seed = cfg.seeds[s];
    const Environment train_env = make_environment(cfg.train_spec, "train", datasets[s].stats);

    RunConfig rc = cfg.run;
    rc.task = job.task;
    rc.attempts = job.task == AffordanceTask::kSuction ? cfg.suction_attempts : cfg.grasp_attempts;
    rc.seed = derive_seed(seed, 31);
    auto trained = train_affordance(train_env, init_affordance(job.strategy, source_for(job, s), derive_seed(seed, 21)),
                                    rc);

    BenchRun& run = report.runs[r];
    run.job = job;
    run.seed = seed;
    run.final_rate = final_rate(trained.curve, rc.curve_window);
    run.curve = std::move(trained.curve);
    for (const auto& set : cfg.eval_sets) {
      const Environment env = set == "test" ? make_environment(cfg.test_spec, "test", datasets[s].stats)
                                            : make_environment(cfg.train_spec, set, datasets[s].stats);
      EvalConfig ec;
      ec.task = job.task;
      ec.resampling = rc.resampling;
      ec.seed = derive_seed(seed, 41);
      run.evals.push_back(evaluate(env, trained.params, ec));
    }
    run.params = std::move(trained.params);
    say(job.vision_task + "/" + std::string(to_string(job.strategy)) + "/" + std::string(to_string(job.task)) +
        " seed " + std::to_string(seed) + ": final " + format_double(run.final_rate));
  });

  for (std::size_t j = 0; j < cfg.jobs.size(); ++j) {
    const BenchJob& job = cfg.jobs[j];
    auto row_for = [&](const std::string& set, const std::function<double(const BenchRun&)>& metric) {
      std::vector<double> values;
      for (std::size_t s = 0; s < n_seeds; ++s) values.push_back(metric(report.runs[j * n_seeds + s]));
      const MeanCI ci = mean_ci95(values);
      report.rows.push_back({job.vision_task, std::string(to_string(job.strategy)), std::string(to_string(job.task)),
                             set, ci.mean, ci.low, ci.high, static_cast<int>(n_seeds)});
    };
    for (std::size_t e = 0; e < cfg.eval_sets.size(); ++e)
      row_for(cfg.eval_sets[e], [e](const BenchRun& run) { return run.evals[e].success_rate; });
    row_for("final_window", [](const BenchRun& run) { return run.final_rate; });
  }
  return report;
}

void write_report_csv(std::ostream& out, const BenchReport& report) {
  out << "vision_task,strategy,affordance_task,object_set,mean,ci95_low,ci95_high,n_seeds\n";
  for (const auto& r : report.rows)
    out << r.vision_task << ',' << r.strategy << ',' << r.affordance_task << ',' << r.object_set << ','
        << format_double(r.mean) << ',' << format_double(r.ci95_low) << ',' << format_double(r.ci95_high) << ','
        << r.n_seeds << '\n';
}

void write_report_table(std::ostream& out, const BenchReport& report) {
  std::vector<std::string> sets, tasks;
  std::vector<std::pair<std::string, std::string>> models;
  for (const auto& r : report.rows) {
    if (std::find(sets.begin(), sets.end(), r.object_set) == sets.end()) sets.push_back(r.object_set);
    if (std::find(tasks.begin(), tasks.end(), r.affordance_task) == tasks.end()) tasks.push_back(r.affordance_task);
    const auto m = std::pair{r.vision_task, r.strategy};
    if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
  }
  auto cell = [](const ReportRow& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f [%.2f, %.2f]", r.mean, r.ci95_low, r.ci95_high);
    return std::string(buf);
  };
  for (const auto& set : sets) {
    const int n = report.rows.empty() ? 0 : report.rows.front().n_seeds;
    const char* title = set == "test"           ? "held-out objects"
                        : set == "train"        ? "training objects"
                        : set == "final_window" ? "end of training (trailing window)"
                                                : set.c_str();
    char head[160];
    std::snprintf(head, sizeof head, "Success rate, %s (mean [95%% CI], %d seeds)\n", title, n);
    out << head;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %-14s", "vision task", "strategy");
    out << line;
    for (const auto& t : tasks) {
      std::snprintf(line, sizeof line, " %-22s", t.c_str());
      out << line;
    }
    out << '\n';
    for (const auto& [vision, strategy] : models) {
      std::snprintf(line, sizeof line, "%-14s %-14s", vision.c_str(), strategy.c_str());
      out << line;
      for (const auto& t : tasks) {
        std::string text = "-";
        for (const auto& r : report.rows)
          if (r.object_set == set && r.affordance_task == t && r.vision_task == vision && r.strategy == strategy)
            text = cell(r);
        std::snprintf(line, sizeof line, " %-22s", text.c_str());
        out << line;
      }
      out << '\n';
    }
    out << '\n';
  }
}

}  // namespace afflab
