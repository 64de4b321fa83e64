#pragma once

#include <vector>

#include "slad/data.hpp"
#include "slad/noise_schedule.hpp"
#include "slad/rng.hpp"
#include "slad/solver.hpp"
#include "slad/tensor.hpp"

namespace slad {

/// 2 E||x - y|| - E||x - x'|| - E||y - y'||. The U-statistic form drops i == j
/// pairs from the within-sample terms; the V-statistic form keeps them and is
/// never negative.
double energy_distance(const Tensor& X, const Tensor& Y, bool v_statistic = false);

struct Coverage {
  int covered = 0;
  std::vector<std::size_t> histogram;  // samples assigned to each mode
};

/// Nearest-center assignment; a mode counts as covered when it receives at
/// least `threshold` of the samples.
Coverage mode_coverage(const Tensor& X, const std::vector<std::vector<double>>& centers, double threshold);

struct DeltaPoint {
  int t = 0;
  double delta = 0.0;
};

struct DeltaOptions {
  int k = 20;
  int t_min = 100;
  std::size_t n_samples = 1000;
  /// Shared eps at both times (default) or x_t drawn from x_{t-k} by the Markov chain.
  bool chained = false;
  /// Explicit grid; when empty, t runs from T down in steps of k while t >= t_min.
  std::vector<int> t_grid;
};

/// delta(t, k) = E || F(x_t, c, 1, t) - F(x_{t-k}, c, 1, t-k) ||_2 over adjacent
/// simulated points, returned in ascending t.
std::vector<DeltaPoint> delta_error(const GeneratorModel& model, const Dataset& data, const NoiseSchedule& sched,
                                    const DeltaOptions& options, Rng& rng);

/// Mean of delta over the top quartile of t values in `curve`.
double top_quartile_mean(const std::vector<DeltaPoint>& curve);

}  // namespace slad
