#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "afflab/affordance.hpp"
#include "afflab/binsim.hpp"
#include "afflab/convnet.hpp"
#include "afflab/replay.hpp"
#include "afflab/vision_labels.hpp"

namespace afflab {

/// Scene seed of the canonical evaluation arrangement; training scenes use
/// hashed seeds and never hit it.
inline constexpr std::uint64_t kCanonicalSeed = 999;

enum class Strategy { kRandom, kBackboneOnly, kFull };

std::string_view to_string(Strategy strategy) noexcept;
std::optional<Strategy> parse_strategy(std::string_view token) noexcept;

/// Maximum attempts per evaluation run: 25 for the training objects, 15 for
/// held-out ones.
int evaluation_cap(std::string_view object_set) noexcept;

struct Environment {
  std::string object_set = "train";
  sim::SimConfig config;
  std::shared_ptr<const std::vector<sim::ObjectShape>> shapes;
  int n_instances = 10;
  NormStats stats;
};

/// Environment over the shipped catalog for `object_set`.
Environment make_environment(std::string_view object_set, const NormStats& stats);
Environment make_environment(const sim::SceneSpec& spec, std::string object_set, const NormStats& stats);

/// Normalization statistics from `n_scenes` renders of the environment's
/// catalog (used when no vision dataset is at hand).
NormStats render_stats(const Environment& env, int n_scenes, std::uint64_t seed);

struct PretrainConfig {
  int steps = 600;
  int batch = 2;
  double lr = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  nn::NetParams params;
  std::vector<double> losses;  // mean batch loss per step
};

/// SGD on the masked BCE over every valid pixel of the task's labels.
/// Starts from init_params(seed) unless `init` is given.
PretrainResult pretrain_vision(VisionTask task, const VisionDataset& dataset, const PretrainConfig& cfg,
                               const nn::NetParams* init = nullptr);

/// Pixelwise accuracy of thresholded predictions (p > 0.5) against labels.
double label_accuracy(const nn::NetParams& params, VisionTask task, const VisionDataset& dataset);

/// random: init_params(seed); backbone_only: backbone tensors from source,
/// head from init_params(seed); full: bitwise copy of source.
nn::NetParams init_affordance(Strategy strategy, const nn::NetParams* source, std::uint64_t seed);
nn::NetParams init_affordance(Strategy strategy, const std::optional<std::filesystem::path>& source,
                              std::uint64_t seed);

struct RunConfig {
  AffordanceTask task = AffordanceTask::kGrasp;
  int attempts = 1500;
  int reset_every = 30;
  int batch = 8;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t replay_capacity = 2000;
  double replay_alpha = 0.6;
  Exploration exploration = Exploration::boltzmann(0.05);
  Resampling resampling = Resampling::kBilinear;
  int curve_window = 50;
  std::uint64_t seed = 0;
};

/// Default attempt budget for a task (suction 600, grasp 1500).
int default_attempts(AffordanceTask task) noexcept;

struct CurvePoint {
  int attempt = 0;
  int success = 0;
  double running_rate = 0.0;
  double loss = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

using Curve = std::vector<CurvePoint>;

void write_curve_csv(std::ostream& out, const Curve& curve);

/// Trailing-window success rate at the end of the curve (0 when empty).
double final_rate(const Curve& curve, int window);

struct TrainResult {
  nn::NetParams params;
  Curve curve;
  std::size_t scenes_used = 0;
};

using AttemptHook = std::function<void(int attempt, const Action&, const sim::Outcome&)>;

TrainResult train_affordance(const Environment& env, nn::NetParams params, const RunConfig& cfg,
                             const AttemptHook& hook = {});

/// One replay update: samples cfg.batch transitions, takes a single SGD step
/// on the BCE at each executed (angle, pixel) and refreshes their priorities.
/// Returns the mean batch loss.
double replay_update(nn::NetParams& params, nn::NetParams& velocity, ReplayBuffer& buffer, const NormStats& stats,
                     const RunConfig& cfg, Rng& rng);

/// Logit of the affordance network at one frame pixel and the gradient of the
/// BCE against `label` there, evaluated on the receptive-field window only.
struct PixelGradient {
  float logit = 0.0f;
  double loss = 0.0;
  nn::NetParams grads;
};

PixelGradient pixel_gradient(const nn::NetParams& params, const NormalizedInput& input, AffordanceTask task,
                             int angle_index, int row, int col, int label, Resampling mode);

struct EvalConfig {
  AffordanceTask task = AffordanceTask::kGrasp;
  int max_attempts = 0;  // 0: evaluation_cap(object set)
  std::uint64_t scene_seed = kCanonicalSeed;
  Resampling resampling = Resampling::kBilinear;
  bool oracle = false;  // pick actions from simulator ground truth
  std::uint64_t seed = 0;
};

struct EvalAttempt {
  int attempt = 0;
  Action action;
  sim::Outcome outcome;
};

struct EvalResult {
  int successes = 0;
  int attempts = 0;
  double success_rate = 0.0;
  std::size_t remaining = 0;
  std::vector<EvalAttempt> log;
};

/// Greedy test run on the canonical arrangement: stops at the attempt cap or
/// when the bin is empty. After a failed attempt the entries within two
/// pixels of it (same orientation) are skipped until the next success, since
/// the quasi-static scene is unchanged by a failure.
EvalResult evaluate(const Environment& env, const nn::NetParams& params, const EvalConfig& cfg);

/// Greedy single attempts on `n` fresh scenes (identical scene sequence for
/// any params with the same seed). Returns the number of successes.
int first_attempt_successes(const Environment& env, const nn::NetParams& params, AffordanceTask task, int n,
                            std::uint64_t seed, Resampling mode = Resampling::kBilinear);

/// Ground-truth action: the first entry (orientation-major, row-major) whose
/// simulated outcome is a success, if any.
std::optional<Action> oracle_action(const sim::Scene& scene, const Heightmap& map, AffordanceTask task);

// Benchmark ---------------------------------------------------------------

struct BenchJob {
  std::string vision_task;  // "random" or a VisionTask token
  Strategy strategy = Strategy::kRandom;
  AffordanceTask task = AffordanceTask::kGrasp;
};

struct BenchConfig {
  std::vector<BenchJob> jobs;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int dataset_scenes = 200;
  PretrainConfig pretrain;
  RunConfig run;  // task, attempts and seed are set per job
  int suction_attempts = 600;
  int grasp_attempts = 1500;
  std::vector<std::string> eval_sets{"train", "test"};
  unsigned threads = 0;  // 0: hardware concurrency
  sim::SceneSpec train_spec;
  sim::SceneSpec test_spec;
};

/// {random, center, corner, edge, foreground, flat_surface} × {suction, grasp};
/// pretrained rows use the given strategy.
std::vector<BenchJob> default_bench_grid(Strategy pretrained_strategy = Strategy::kFull);

BenchConfig default_bench_config();

/// Seeds the benchmark derives from a run seed for its vision dataset and
/// for pretraining on `task`.
std::uint64_t dataset_seed(std::uint64_t run_seed);
std::uint64_t pretrain_seed(std::uint64_t run_seed, VisionTask task);

struct BenchRun {
  BenchJob job;
  std::uint64_t seed = 0;
  Curve curve;
  double final_rate = 0.0;
  std::vector<EvalResult> evals;  // parallel to BenchConfig::eval_sets
  nn::NetParams params;
};

struct ReportRow {
  std::string vision_task;
  std::string strategy;
  std::string affordance_task;
  std::string object_set;  // an eval set, or "final_window" for the training curve
  double mean = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  int n_seeds = 0;
};

struct BenchReport {
  std::vector<ReportRow> rows;
  std::vector<BenchRun> runs;  // job-major, seed-minor
};

struct MeanCI {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// Two-sided 95% Student-t quantile for `dof` degrees of freedom.
double t_quantile_975(int dof);
MeanCI mean_ci95(const std::vector<double>& values);

using ProgressHook = std::function<void(const std::string& message)>;

/// Pretrained models and datasets are computed once per (vision task, seed)
/// and shared between jobs. Jobs run in parallel; the report is assembled in
/// job order so it does not depend on scheduling.
BenchReport run_benchmark(const BenchConfig& cfg, const ProgressHook& progress = {});

void write_report_csv(std::ostream& out, const BenchReport& report);
/// Rows = vision task (and strategy), columns = affordance task, one block
/// per object set.
void write_report_table(std::ostream& out, const BenchReport& report);

}  // namespace afflab
