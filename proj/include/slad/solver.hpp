#pragma once

#include <span>
#include <vector>

#include "slad/denoiser.hpp"
#include "slad/noise_schedule.hpp"
#include "slad/rng.hpp"
#include "slad/tensor.hpp"

namespace slad {

/// A noise predictor evaluated at gamma = 1 (the teacher's view of the PF-ODE).
class EpsModel {
 public:
  virtual ~EpsModel() = default;
  virtual Tensor predict(const Tensor& z, std::span<const int> labels, std::span<const int> t) const = 0;
};

/// A few-step generator F(z, c, 1, t).
class GeneratorModel {
 public:
  virtual ~GeneratorModel() = default;
  virtual std::size_t dim() const = 0;
  virtual Tensor generate(const Tensor& z, std::span<const int> labels, std::span<const int> t) const = 0;
};

class NetworkEps final : public EpsModel {
 public:
  NetworkEps(const Denoiser& net, const ParamStore& params, const NoiseSchedule& sched)
      : net_(net), params_(params), sched_(sched) {}
  Tensor predict(const Tensor& z, std::span<const int> labels, std::span<const int> t) const override;

 private:
  const Denoiser& net_;
  const ParamStore& params_;
  const NoiseSchedule& sched_;
};

class NetworkGenerator final : public GeneratorModel {
 public:
  NetworkGenerator(const Denoiser& net, const ParamStore& params, const NoiseSchedule& sched)
      : net_(net), params_(params), sched_(sched) {}
  std::size_t dim() const override { return static_cast<std::size_t>(net_.config().dim); }
  Tensor generate(const Tensor& z, std::span<const int> labels, std::span<const int> t) const override;

 private:
  const Denoiser& net_;
  const ParamStore& params_;
  const NoiseSchedule& sched_;
};

/// Exact E[eps | z_t] when the data is N(mean, scale^2 I).
class AnalyticTeacher final : public EpsModel {
 public:
  AnalyticTeacher(Tensor mean, double scale, const NoiseSchedule& sched);

  const Tensor& mean() const { return mean_; }
  double scale() const { return scale_; }

  /// sigma[t] (z - alpha[t] mu) / (alpha[t]^2 s^2 + sigma[t]^2), row-wise.
  Tensor predict(const Tensor& z, std::span<const int> labels, std::span<const int> t) const override;
  /// Posterior mean E[x0 | z_t].
  Tensor posterior_mean(const Tensor& z, std::span<const int> t) const;

 private:
  Tensor mean_;  // 1 x dim
  double scale_;
  const NoiseSchedule& sched_;
};

Tensor analytic_eps(const AnalyticTeacher& teacher, const Tensor& z, int t);

/// Deterministic DDIM move from from_t to to_t (eta = 0), row-wise times.
Tensor ddim_step(const EpsModel& model, const Tensor& z, std::span<const int> from_t, std::span<const int> to_t,
                 std::span<const int> labels, const NoiseSchedule& sched);
Tensor ddim_step(const EpsModel& model, const Tensor& z, int from_t, int to_t, std::span<const int> labels,
                 const NoiseSchedule& sched);

/// Guided solver increment w * Phi(z, c) + (1 - w) * Phi(z, null), with
/// Phi = ddim_step - z. Always evaluates both branches.
Tensor cfg_phi(const EpsModel& model, const Tensor& z, std::span<const int> from_t, std::span<const int> to_t,
               std::span<const int> labels, double w, const NoiseSchedule& sched);

/// Splits the k-step jump from t into k / k_phi guided solver moves and
/// returns the estimate of z_{t-k}.
Tensor multiple_estimation(const EpsModel& model, const Tensor& z_t, std::span<const int> t, int k, int k_phi,
                           std::span<const int> labels, double w, const NoiseSchedule& sched);

/// Full DDIM trajectory from z at time T down to 0 on an even grid.
Tensor ddim_sample(const EpsModel& model, const Tensor& z_T, int n_steps, std::span<const int> labels, double w,
                   const NoiseSchedule& sched);

/// Descending sampling times: floor((n - i) T / n) for i = 0..n-1.
std::vector<int> even_time_grid(int T, int n_steps);

/// Consistency-style multistep sampling: predict, re-noise at the next grid
/// time, repeat. Empty `grid` selects `even_time_grid`.
Tensor multistep_sample(const GeneratorModel& model, std::size_t count, int n_steps, std::span<const int> labels,
                        const NoiseSchedule& sched, Rng& rng, std::span<const int> grid = {});

}  // namespace slad
