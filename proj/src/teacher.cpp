#include "slad/teacher.hpp"

#include <cmath>
#include <sstream>

#include "slad/rng.hpp"

namespace slad {

void TeacherConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("teacher steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("teacher batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("teacher lr must be positive");
  if (!(null_label_prob >= 0.0 && null_label_prob <= 1.0)) throw std::invalid_argument("null_label_prob must be in [0, 1]");
}

Var teacher_loss(Tape& tape, const Denoiser& net, const ParamStore& params, const LabeledBatch& batch,
                 const NoiseSchedule& sched, double null_label_prob, Rng& rng) {
  const std::size_t n = batch.size();
  Conditioning cond{batch.labels, std::vector<double>(n, 1.0), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    cond.t[i] = rng.uniform_int(1, sched.steps());
    if (rng.uniform() < null_label_prob) cond.labels[i] = kNullLabel;
  }
  const Tensor eps = rng.normal_tensor(n, batch.points.cols());
  const Tensor x_t = perturb(batch.points, cond.t, eps, sched);
  Var pred = net.eps(tape, params, Binding{"theta", true}, tape.constant(x_t), cond, sched);
  return tape.mean(tape.square(pred - tape.constant(eps)));
}

ParamStore train_teacher(const Denoiser& net, const Dataset& data, const NoiseSchedule& sched,
                         const TeacherConfig& config, ParamStore init, AdamW& optimizer,
                         const TrainObserver& observer, long first_step) {
  config.validate();
  ParamStore params = std::move(init);
  const Rng root = Rng(config.seed).split("teacher");
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (long step = first_step; step < config.steps; ++step) {
    Rng rng = root.split(static_cast<std::uint64_t>(step));
    const LabeledBatch batch = data.sample(static_cast<std::uint64_t>(step) * bs, bs);
    TrainLogRow row{step, 0.0, 0.0};
    try {
      Tape tape;
      Var loss = teacher_loss(tape, net, params, batch, sched, config.null_label_prob, rng);
      row.loss = loss.value().item();
      row.grad_norm = optimizer.step(params, grads_for(tape.backward(loss), "theta"));
    } catch (const NonFiniteError& e) {
      std::ostringstream os;
      os << "teacher training diverged at step " << step << " (lr=" << optimizer.config().lr << "): " << e.what();
      throw TrainingError(os.str());
    }
    if (observer) observer(row);
  }
  return params;
}

}  // namespace slad
