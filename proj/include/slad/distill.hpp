#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slad/data.hpp"
#include "slad/denoiser.hpp"
#include "slad/noise_schedule.hpp"
#include "slad/optimizer.hpp"
#include "slad/solver.hpp"
#include "slad/teacher.hpp"

namespace slad {

enum class DistillMode { SL, DL, ConsistencyBaseline };
enum class Metric { L2, PseudoHuber };

std::string to_string(DistillMode mode);
std::string to_string(Metric metric);
DistillMode distill_mode_from_string(const std::string& name);
Metric metric_from_string(const std::string& name);

struct DistillConfig {
  int k = 100;
  int k_phi = kReferenceSolverSkip;
  double w = 1.0;
  double mu = kReferenceEmaDecay;
  Metric metric = Metric::L2;
  DistillMode mode = DistillMode::SL;
  int iterations = 2000;
  int batch_size = 256;
  double lr = 1e-3;
  double clip_norm = kReferenceClipNorm;
  bool exact_sigma = false;
  /// Pins every gamma draw to this value (the draw still consumes randomness).
  std::optional<double> gamma_override;
  std::uint64_t seed = 0;

  void validate(int T) const;
};

/// Times t in {k, k + k_phi, ..., <= T} from which the solver lands on exact steps.
std::vector<int> distill_time_grid(int T, int k, int k_phi);

/// Everything drawn for one distillation step before the student is evaluated.
struct DistillSample {
  Tensor z_t;        // perturbed data at t
  Tensor z_hat_tmk;  // teacher estimate of z_{t-k}
  std::vector<int> t;
  std::vector<double> gamma;
  std::vector<int> labels;
};

DistillSample draw_distill_sample(const LabeledBatch& batch, const EpsModel& teacher, const DistillConfig& config,
                                  const NoiseSchedule& sched, Rng& rng);

/// Mean over the batch of the per-sample distance; L2 averages over dimensions too.
Var metric_loss(Tape& tape, Var a, Var b, Metric metric);
double metric_eval(const Tensor& a, const Tensor& b, Metric metric);
double pseudo_huber_c(std::size_t dim);

/// The online input point for the configured path mode.
Tensor online_input(const DistillSample& sample, const DistillConfig& config, const NoiseSchedule& sched);

/// d(F_theta(online, c, gamma, t), F_theta_minus(z_hat_{t-k}, c, 1, t - k)). Student
/// parameters are bound trainable under "theta", the EMA target frozen under "ema".
Var distill_loss(Tape& tape, const Denoiser& net, const ParamStore& theta, const ParamStore& theta_minus,
                 const DistillSample& sample, const DistillConfig& config, const NoiseSchedule& sched);

struct DistillState {
  ParamStore theta;
  ParamStore theta_minus;
  AdamW optimizer;
  long step = 0;
};

/// theta_minus <- theta and a fresh optimizer configured from `config`.
DistillState make_distill_state(const ParamStore& init, const DistillConfig& config);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// One optimization step on `batch`: draw, loss, AdamW on theta, EMA on theta_minus.
StepResult slad_step(DistillState& state, const Denoiser& net, const EpsModel& teacher, const LabeledBatch& batch,
                     const DistillConfig& config, const NoiseSchedule& sched, Rng& rng);

struct DistillLogRow {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

using DistillObserver = std::function<void(const DistillLogRow&, const DistillState&)>;

/// Runs steps until state.step == config.iterations. Step s draws its batch and
/// randomness from (seeds, s) only.
void distill(DistillState& state, const Denoiser& net, const EpsModel& teacher, const Dataset& data,
             const DistillConfig& config, const NoiseSchedule& sched, const DistillObserver& observer = {});

/// N(mean, scale^2 I) data with mean = (offset, 0, ...) and every label 0;
/// the batch source matching an AnalyticTeacher.
Dataset single_gaussian_dataset(int dim, double offset, double scale, std::uint64_t seed);

}  // namespace slad
