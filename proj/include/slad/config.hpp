#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "slad/data.hpp"
#include "slad/denoiser.hpp"
#include "slad/distill.hpp"
#include "slad/noise_schedule.hpp"
#include "slad/teacher.hpp"

namespace slad {

/// Invalid or unknown configuration; `what()` starts with the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScheduleConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return NoiseSchedule::linear(T, beta_start, beta_end); }
};

struct TeacherRunConfig {
  TeacherConfig train;
  int log_every = 100;
  int checkpoint_every = 0;  // 0: final checkpoint only
};

struct DistillRunConfig {
  DistillConfig train;
  /// Path of a teacher checkpoint, or "analytic" for the closed-form
  /// single-Gaussian teacher (requires a one-mode mixture dataset).
  std::string teacher_checkpoint;
  /// Teacher checkpoint whose weights initialize the student. Empty: the
  /// teacher's own weights, or a random init for the analytic teacher.
  std::string init_checkpoint;
  int log_every = 100;
  int eval_every = 0;  // 0: no intermediate evaluation
  int checkpoint_every = 0;
};

struct EvalConfig {
  std::size_t n_samples = 2000;
  std::vector<int> steps{1, 2, 4};
  /// Explicit sampling grid for the few-step sampler; empty = even grid.
  std::vector<int> sample_grid;
  double coverage_threshold = 0.02;
  int teacher_ddim_steps = 50;
  double teacher_guidance = 1.0;
  int delta_k = 20;
  int delta_t_min = 100;
  std::size_t delta_samples = 1000;
  bool delta_chained = false;
};

struct AblateConfig {
  std::vector<int> step_sizes{20, 50, 100, 200};
  int me_k_phi = kReferenceSolverSkip;
  std::vector<double> guidance_scales{3.0, 5.0, 8.0, 12.0};
  std::vector<int> surface_t{200, 500, 800, 1000};
  std::vector<int> surface_k{20, 50, 100, 200};
  int surface_gamma_points = 101;
  int iterations = 0;  // 0: use distill.iterations
};

struct RunConfig {
  std::uint64_t seed = 0;
  ScheduleConfig schedule;
  DatasetSpec dataset;
  DenoiserConfig model;
  TeacherRunConfig teacher;
  DistillRunConfig distill;
  EvalConfig eval;
  AblateConfig ablate;

  /// Model config with dim and label count taken from the dataset.
  DenoiserConfig resolved_model() const;
};

/// Parses and validates; unknown keys and bad values raise ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

/// Stable FNV-1a digest of the canonical JSON form, excluding run-length keys
/// (teacher.steps, distill.iterations) so a finished run can be extended.
std::string config_hash(const RunConfig& config);
std::uint64_t fnv1a64(std::string_view bytes);

nlohmann::json to_json(const DenoiserConfig& model);
nlohmann::json to_json(const DatasetSpec& spec);
nlohmann::json to_json(const ScheduleConfig& schedule);
DenoiserConfig denoiser_from_json(const nlohmann::json& j);
DatasetSpec dataset_from_json(const nlohmann::json& j);
ScheduleConfig schedule_from_json(const nlohmann::json& j);

}  // namespace slad
