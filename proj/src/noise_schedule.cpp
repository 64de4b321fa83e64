#include "slad/noise_schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace slad {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 2) throw std::invalid_argument("schedule needs T >= 2, got " + std::to_string(T));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    betas[i] = beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.size() < 2) throw std::invalid_argument("schedule needs at least two steps");
  NoiseSchedule s;
  s.T_ = static_cast<int>(betas.size());
  s.beta_.assign(1, 0.0);
  s.beta_.insert(s.beta_.end(), betas.begin(), betas.end());
  s.alpha_.assign(betas.size() + 1, 1.0);
  s.sigma_.assign(betas.size() + 1, 0.0);
  for (std::size_t t = 1; t <= betas.size(); ++t) {
    const double b = s.beta_[t];
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta must lie in (0, 1) at step " + std::to_string(t));
    s.alpha_[t] = s.alpha_[t - 1] * std::sqrt(1.0 - b);
    s.sigma_[t] = std::sqrt(1.0 - s.alpha_[t] * s.alpha_[t]);
  }
  return s;
}

std::size_t NoiseSchedule::checked(int t, int lo) const {
  if (t < lo || t > T_) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(T_) + "]");
  }
  return static_cast<std::size_t>(t);
}

double NoiseSchedule::drift(int t, int k) const {
  if (k < 0 || k > t) throw std::out_of_range("drift needs 0 <= k <= t");
  return alpha(t) / alpha(t - k);
}

Tensor perturb(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "perturb");
  const double a = sched.alpha(t);
  const double s = sched.sigma(t);
  Tensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

Tensor perturb(const Tensor& x0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "perturb");
  if (t.size() != x0.rows()) throw ShapeError("perturb: one timestep per row required");
  Tensor out = x0;
  const std::size_t n = x0.cols();
  for (std::size_t r = 0; r < x0.rows(); ++r) {
    const double a = sched.alpha(t[r]);
    const double s = sched.sigma(t[r]);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a * x0[r * n + c] + s * eps[r * n + c];
  }
  return out;
}

}  // namespace slad
