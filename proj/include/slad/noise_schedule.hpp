#pragma once

#include <vector>

#include "slad/tensor.hpp"

namespace slad {

/// Discrete variance-preserving schedule on integer steps 0..T.
///
/// alpha[t] = prod_{s<=t} sqrt(1 - beta[s]) with alpha[0] = 1, and
/// sigma[t] = sqrt(1 - alpha[t]^2). Immutable once built.
class NoiseSchedule {
 public:
  /// Linear beta ramp from beta_start to beta_end over T steps.
  static NoiseSchedule linear(int T, double beta_start, double beta_end);
  /// Explicit per-step variances beta[1..T] (passed as a T-element vector).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return T_; }
  double beta_start() const { return beta_.at(1); }
  double beta_end() const { return beta_.back(); }
  double beta(int t) const { return beta_.at(checked(t, 1)); }
  double alpha(int t) const { return alpha_[checked(t, 0)]; }
  double sigma(int t) const { return sigma_[checked(t, 0)]; }
  /// alpha[t] / alpha[t - k], the drift factor between two steps.
  double drift(int t, int k) const;

  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& sigmas() const { return sigma_; }

 private:
  NoiseSchedule() = default;
  std::size_t checked(int t, int lo) const;

  int T_ = 0;
  std::vector<double> beta_;   // index 0 unused
  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

/// alpha[t] * x0 + sigma[t] * eps. Rows may carry different timesteps.
Tensor perturb(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);
Tensor perturb(const Tensor& x0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched);

}  // namespace slad
