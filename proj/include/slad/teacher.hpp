#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "slad/data.hpp"
#include "slad/denoiser.hpp"
#include "slad/noise_schedule.hpp"
#include "slad/optimizer.hpp"

namespace slad {

/// Training diverged (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TeacherConfig {
  int steps = 4000;
  int batch_size = 256;
  double lr = 1e-3;
  double clip_norm = kReferenceClipNorm;
  double null_label_prob = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainLogRow {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// One epsilon-matching loss evaluation on a batch (used by training and tests).
/// Draws t ~ U{1..T}, eps ~ N(0, I) and applies null-label dropout from `rng`.
Var teacher_loss(Tape& tape, const Denoiser& net, const ParamStore& params, const LabeledBatch& batch,
                 const NoiseSchedule& sched, double null_label_prob, Rng& rng);

using TrainObserver = std::function<void(const TrainLogRow&)>;

/// Minimizes E || eps - eps_theta(alpha x0 + sigma eps, c, 1, t) ||^2 starting
/// from `init`. Steps [first_step, config.steps) run; batch s and its noise are
/// pure functions of (seeds, s), so a resumed run matches an uninterrupted one
/// when the optimizer state is carried over.
ParamStore train_teacher(const Denoiser& net, const Dataset& data, const NoiseSchedule& sched,
                         const TeacherConfig& config, ParamStore init, AdamW& optimizer,
                         const TrainObserver& observer = {}, long first_step = 0);

}  // namespace slad
