#include "slad/distill.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "slad/subpath.hpp"

namespace slad {

namespace {

// Distillation batches are drawn from a separate index range of the dataset so
// they do not replay the teacher's batches.
constexpr std::uint64_t kDistillDataOffset = 1ULL << 40;

}  // namespace

std::string to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::SL:
      return "sl";
    case DistillMode::DL:
      return "dl";
    case DistillMode::ConsistencyBaseline:
      return "baseline";
  }
  return "unknown";
}

std::string to_string(Metric metric) { return metric == Metric::L2 ? "l2" : "pseudo_huber"; }

DistillMode distill_mode_from_string(const std::string& name) {
  if (name == "sl") return DistillMode::SL;
  if (name == "dl") return DistillMode::DL;
  if (name == "baseline") return DistillMode::ConsistencyBaseline;
  throw std::invalid_argument("unknown distillation mode '" + name + "' (expected sl, dl or baseline)");
}

Metric metric_from_string(const std::string& name) {
  if (name == "l2") return Metric::L2;
  if (name == "pseudo_huber") return Metric::PseudoHuber;
  throw std::invalid_argument("unknown metric '" + name + "' (expected l2 or pseudo_huber)");
}

void DistillConfig::validate(int T) const {
  if (k_phi < 1 || k < k_phi) throw std::invalid_argument("need 1 <= k_phi <= k");
  if (k % k_phi != 0) {
    throw std::invalid_argument("k (" + std::to_string(k) + ") must be divisible by k_phi (" + std::to_string(k_phi) + ")");
  }
  if (k > T) throw std::invalid_argument("k exceeds the number of diffusion steps");
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("mu must lie in [0, 1)");
  if (!(w >= 0.0)) throw std::invalid_argument("guidance scale w must be >= 0");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (gamma_override && !(*gamma_override >= 0.0 && *gamma_override <= 1.0)) {
    throw std::invalid_argument("gamma_override must lie in [0, 1]");
  }
}

std::vector<int> distill_time_grid(int T, int k, int k_phi) {
  std::vector<int> grid;
  for (int t = k; t <= T; t += k_phi) grid.push_back(t);
  if (grid.empty()) throw std::invalid_argument("empty distillation time grid");
  return grid;
}

DistillSample draw_distill_sample(const LabeledBatch& batch, const EpsModel& teacher, const DistillConfig& config,
                                  const NoiseSchedule& sched, Rng& rng) {
  const std::size_t n = batch.size();
  const std::vector<int> grid = distill_time_grid(sched.steps(), config.k, config.k_phi);
  DistillSample s;
  s.labels = batch.labels;
  s.t.resize(n);
  s.gamma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.t[i] = grid[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(grid.size()) - 1))];
    s.gamma[i] = rng.uniform();
    if (config.mode == DistillMode::ConsistencyBaseline) {
      s.gamma[i] = 1.0;
    } else if (config.gamma_override) {
      s.gamma[i] = *config.gamma_override;
    }
  }
  const Tensor eps = rng.normal_tensor(n, batch.points.cols());
  s.z_t = perturb(batch.points, s.t, eps, sched);
  s.z_hat_tmk = multiple_estimation(teacher, s.z_t, s.t, config.k, config.k_phi, s.labels, config.w, sched);
  return s;
}

double pseudo_huber_c(std::size_t dim) { return 0.00054 * std::sqrt(static_cast<double>(dim)); }

Var metric_loss(Tape& tape, Var a, Var b, Metric metric) {
  Var d = a - b;
  if (metric == Metric::L2) return tape.mean(tape.square(d));
  const double c = pseudo_huber_c(d.value().cols());
  Var per_row = tape.add_scalar(tape.sqrt(tape.add_scalar(tape.row_sum(tape.square(d)), c * c)), -c);
  return tape.mean(per_row);
}

double metric_eval(const Tensor& a, const Tensor& b, Metric metric) {
  require_same_shape(a, b, "metric_eval");
  Tape tape;
  Tensor a2 = a.shape().size() == 1 ? Tensor({1, a.size()}, std::vector<double>(a.values().begin(), a.values().end())) : a;
  Tensor b2 = b.shape().size() == 1 ? Tensor({1, b.size()}, std::vector<double>(b.values().begin(), b.values().end())) : b;
  return metric_loss(tape, tape.constant(a2), tape.constant(b2), metric).value().item();
}

Tensor online_input(const DistillSample& sample, const DistillConfig& config, const NoiseSchedule& sched) {
  switch (config.mode) {
    case DistillMode::SL:
      return sl_interpolate_rows(sample.z_t, sample.z_hat_tmk, sample.gamma, sample.t, config.k, sched);
    case DistillMode::DL:
      return dl_interpolate_rows(sample.z_t, sample.z_hat_tmk, sample.gamma, sample.t, config.k, sched);
    case DistillMode::ConsistencyBaseline:
      return sample.z_t;
  }
  throw std::logic_error("unhandled distillation mode");
}

Var distill_loss(Tape& tape, const Denoiser& net, const ParamStore& theta, const ParamStore& theta_minus,
                 const DistillSample& sample, const DistillConfig& config, const NoiseSchedule& sched) {
  const std::size_t n = sample.t.size();
  const PathSpec path{config.k, config.mode == DistillMode::DL ? PathMode::DL : PathMode::SL, config.exact_sigma};

  const Conditioning online_cond{sample.labels, sample.gamma, sample.t};
  Var online = net.generate(tape, theta, Binding{"theta", true}, tape.constant(online_input(sample, config, sched)),
                            online_cond, sched, path);

  Conditioning target_cond{sample.labels, std::vector<double>(n, 1.0), sample.t};
  for (auto& t : target_cond.t) t -= config.k;
  Var target = net.generate(tape, theta_minus, Binding{"ema", false}, tape.constant(sample.z_hat_tmk), target_cond,
                            sched, PathSpec{config.k});
  return metric_loss(tape, online, tape.detach(target), config.metric);
}

DistillState make_distill_state(const ParamStore& init, const DistillConfig& config) {
  AdamWConfig opt;
  opt.lr = config.lr;
  opt.clip_norm = config.clip_norm;
  return DistillState{init, init, AdamW(opt), 0};
}

StepResult slad_step(DistillState& state, const Denoiser& net, const EpsModel& teacher, const LabeledBatch& batch,
                     const DistillConfig& config, const NoiseSchedule& sched, Rng& rng) {
  StepResult result;
  try {
    const DistillSample sample = draw_distill_sample(batch, teacher, config, sched, rng);
    Tape tape;
    Var loss = distill_loss(tape, net, state.theta, state.theta_minus, sample, config, sched);
    result.loss = loss.value().item();
    result.grad_norm = state.optimizer.step(state.theta, grads_for(tape.backward(loss), "theta"));
  } catch (const NonFiniteError& e) {
    std::ostringstream os;
    os << "distillation diverged at step " << state.step << " (mode=" << to_string(config.mode) << ", k=" << config.k
       << ", lr=" << config.lr << "): " << e.what();
    throw TrainingError(os.str());
  }
  ema_update(state.theta, state.theta_minus, config.mu);
  ++state.step;
  return result;
}

void distill(DistillState& state, const Denoiser& net, const EpsModel& teacher, const Dataset& data,
             const DistillConfig& config, const NoiseSchedule& sched, const DistillObserver& observer) {
  config.validate(sched.steps());
  const Rng root = Rng(config.seed).split("distill");
  const auto bs = static_cast<std::size_t>(config.batch_size);
  while (state.step < config.iterations) {
    const long step = state.step;
    Rng rng = root.split(static_cast<std::uint64_t>(step));
    const LabeledBatch batch = data.sample(kDistillDataOffset + static_cast<std::uint64_t>(step) * bs, bs);
    const StepResult r = slad_step(state, net, teacher, batch, config, sched, rng);
    if (observer) observer(DistillLogRow{step, r.loss, r.grad_norm}, state);
  }
}

Dataset single_gaussian_dataset(int dim, double offset, double scale, std::uint64_t seed) {
  DatasetSpec spec;
  spec.kind = DatasetKind::GaussianMixture;
  spec.dim = dim;
  spec.n_modes = 1;
  spec.radius = offset;
  spec.scale = scale;
  spec.normalize = false;
  spec.seed = seed;
  return Dataset(spec);
}

}  // namespace slad
