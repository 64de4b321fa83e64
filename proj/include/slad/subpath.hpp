#pragma once

#include <vector>

#include "slad/noise_schedule.hpp"
#include "slad/tensor.hpp"

namespace slad {

enum class PathMode { SL, DL };

/// A point on the linear approximation of the sub-path between x_{t-k} and x_t.
struct SubPathSample {
  Tensor x;
  double gamma = 1.0;
  int t = 0;
  int k = 1;
  PathMode mode = PathMode::SL;
};

/// (1 - gamma) * (alpha[t]/alpha[t-k]) * x_tmk + gamma * x_t.
SubPathSample sl_interpolate(const Tensor& x_t, const Tensor& x_tmk, double gamma, int t, int k,
                             const NoiseSchedule& sched);

/// x_tmk + gamma * (x_t - x_tmk).
SubPathSample dl_interpolate(const Tensor& x_t, const Tensor& x_tmk, double gamma, int t, int k,
                             const NoiseSchedule& sched);

/// Row-wise SL interpolation, each row with its own (gamma, t); k is shared.
Tensor sl_interpolate_rows(const Tensor& x_t, const Tensor& x_tmk, std::span<const double> gamma,
                           std::span<const int> t, int k, const NoiseSchedule& sched);
Tensor dl_interpolate_rows(const Tensor& x_t, const Tensor& x_tmk, std::span<const double> gamma,
                           std::span<const int> t, int k, const NoiseSchedule& sched);

/// Convex blend of the endpoint noise levels; what training uses.
double sigma_gamma_empirical(double gamma, int t, int k, const NoiseSchedule& sched);

/// Standard deviation of x_{gamma,t} given x0 when (x_{t-k}, x_t) come from the
/// forward Markov chain. The matching mean coefficient is alpha[t] for all gamma.
double sigma_gamma_exact(double gamma, int t, int k, const NoiseSchedule& sched);

/// exact^2 - empirical^2 in closed form, one value per gamma.
std::vector<double> sigma_error_surface(int t, int k, const NoiseSchedule& sched, std::span<const double> gamma_grid);

struct DlSchedule {
  double alpha;
  double sigma;
};

/// Marginal coefficients of the direct-linking point x_{t-k} + gamma (x_t - x_{t-k}).
DlSchedule dl_schedule(double gamma, int t, int k, const NoiseSchedule& sched);

/// x_t - (alpha[t]/alpha[t-k]) x_tmk: the drift/diffusion increment.
Tensor dist_delta(const Tensor& x_t, const Tensor& x_tmk, int t, int k, const NoiseSchedule& sched);

/// (alpha[t]/alpha[t-k]) sigma[t-k] eps_pred_tmk: the propagated denoising term.
Tensor dist_zero(const Tensor& eps_pred_tmk, int t, int k, const NoiseSchedule& sched);

}  // namespace slad
