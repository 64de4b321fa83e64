#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slad/checkpoint.hpp"
#include "slad/config.hpp"
#include "slad/metrics.hpp"

namespace slad {

/// A checkpoint together with the objects needed to run it. Not movable:
/// model adapters hold references into it.
struct ModelBundle {
  explicit ModelBundle(Checkpoint checkpoint);
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  Checkpoint ckpt;
  NoiseSchedule sched;
  Denoiser net;
  Dataset data;
};

std::unique_ptr<ModelBundle> load_bundle(const std::string& path);

/// Student parameters before distillation: the teacher's weights with the
/// gamma input weights zeroed, so the fresh student ignores gamma.
ParamStore student_init(const Denoiser& net, const ParamStore& teacher);

struct SampleEval {
  int n_steps = 0;
  double energy_distance = 0.0;
  std::optional<Coverage> coverage;  // mixture datasets only
};

/// Held-out comparison of few-step samples against fresh data. Sample i gets
/// label i mod num_labels; each step count uses its own randomness stream.
std::vector<SampleEval> evaluate_generator(const GeneratorModel& model, const Dataset& data,
                                           const NoiseSchedule& sched, const EvalConfig& eval, std::uint64_t seed);

/// Same comparison for a teacher sampled with guided DDIM.
SampleEval evaluate_teacher(const EpsModel& teacher, const Dataset& data, const NoiseSchedule& sched,
                            const EvalConfig& eval, std::uint64_t seed);

/// Fresh held-out data (disjoint from training batch indices).
LabeledBatch held_out_data(const Dataset& data, std::size_t count);

/// Cycling labels 0, 1, ..., num_labels - 1, 0, ...
std::vector<int> cycling_labels(std::size_t count, int num_labels);

// Command entry points. Configuration problems raise ConfigError; anything
// else is a runtime failure. Output directories are created if missing and
// existing files are never overwritten.

/// Teacher training; writes config.json, train_log.csv, teacher.ckpt.
void run_train_teacher(const RunConfig& config, const std::string& out_dir, const std::string& resume = "");

/// Distillation; `teacher` overrides distill.teacher_checkpoint when non-empty.
/// Writes config.json, distill_log.csv, student.ckpt (+ eval_log.csv).
void run_distill(const RunConfig& config, const std::string& out_dir, const std::string& teacher = "",
                 const std::string& resume = "");

struct SampleOptions {
  std::string checkpoint;
  std::string out_dir;
  int steps = 1;
  std::size_t count = 1000;
  std::optional<int> label;  // default: cycle over all labels
  std::uint64_t seed = 0;
  double guidance = 1.0;     // teacher checkpoints only
  bool online = false;       // use theta instead of the EMA weights
};

/// Writes samples.csv and samples.svg.
void run_sample(const SampleOptions& options);

/// Writes metrics.json (and delta.csv for students); returns the metrics.
nlohmann::json run_eval(const RunConfig& config, const std::string& checkpoint, const std::string& out_dir);

/// `which` is step-size, error-surface, guidance-scale or sl-vs-dl.
void run_ablate(const std::string& which, const RunConfig& config, const std::string& out_dir,
                const std::string& teacher = "");

}  // namespace slad
