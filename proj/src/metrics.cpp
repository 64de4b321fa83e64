#include "slad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slad {

namespace {

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double mean_cross(const Tensor& A, const Tensor& B) {
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < B.rows(); ++j) s += dist(A.row(i), B.row(j));
  }
  return s / (static_cast<double>(A.rows()) * static_cast<double>(B.rows()));
}

double mean_within(const Tensor& A, bool v_statistic) {
  const std::size_t n = A.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s += dist(A.row(i), A.row(j));
  }
  const double nn = static_cast<double>(n);
  if (v_statistic) return 2.0 * s / (nn * nn);
  if (n < 2) throw std::invalid_argument("energy distance U-statistic needs at least two points per sample");
  return 2.0 * s / (nn * (nn - 1.0));
}

}  // namespace

double energy_distance(const Tensor& X, const Tensor& Y, bool v_statistic) {
  if (X.cols() != Y.cols()) throw ShapeError("energy_distance: samples differ in dimension");
  // Canonical operand order makes the floating-point result exactly symmetric.
  const auto xs = X.values();
  const auto ys = Y.values();
  const bool swap = Y.rows() < X.rows() ||
                    (Y.rows() == X.rows() && std::lexicographical_compare(ys.begin(), ys.end(), xs.begin(), xs.end()));
  const Tensor& A = swap ? Y : X;
  const Tensor& B = swap ? X : Y;
  return 2.0 * mean_cross(A, B) - mean_within(A, v_statistic) - mean_within(B, v_statistic);
}

Coverage mode_coverage(const Tensor& X, const std::vector<std::vector<double>>& centers, double threshold) {
  if (centers.empty()) throw std::invalid_argument("mode_coverage needs at least one center");
  Coverage cov;
  cov.histogram.assign(centers.size(), 0);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto row = X.row(i);
    if (centers[0].size() != row.size()) throw ShapeError("mode_coverage: center dimension mismatch");
    std::size_t best = 0;
    double best_d = dist(row, centers[0]);
    for (std::size_t m = 1; m < centers.size(); ++m) {
      const double d = dist(row, centers[m]);
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    ++cov.histogram[best];
  }
  const double n = static_cast<double>(X.rows());
  for (std::size_t count : cov.histogram) {
    if (static_cast<double>(count) >= threshold * n && count > 0) ++cov.covered;
  }
  return cov;
}

std::vector<DeltaPoint> delta_error(const GeneratorModel& model, const Dataset& data, const NoiseSchedule& sched,
                                    const DeltaOptions& options, Rng& rng) {
  const int T = sched.steps();
  if (options.t_min >= T) throw std::invalid_argument("delta_error: t_min must be below T");
  if (options.n_samples == 0) throw std::invalid_argument("delta_error: n_samples must be positive");
  std::vector<int> grid = options.t_grid;
  if (grid.empty()) {
    if (options.k < 1) throw std::invalid_argument("delta_error: k must be >= 1 without an explicit grid");
    for (int t = T; t >= options.t_min && t - options.k >= 0; t -= options.k) grid.push_back(t);
  }
  std::sort(grid.begin(), grid.end());
  if (grid.empty()) throw std::invalid_argument("delta_error: empty time grid");

  std::vector<DeltaPoint> out;
  const std::size_t n = options.n_samples;
  for (int t : grid) {
    if (t - options.k < 0 || t > T) throw std::out_of_range("delta_error: grid time outside [k, T]");
    const LabeledBatch batch = data.sample(rng(), n);
    const Tensor eps = rng.normal_tensor(n, batch.points.cols());
    const Tensor x_tmk = perturb(batch.points, t - options.k, eps, sched);
    Tensor x_t = perturb(batch.points, t, eps, sched);
    if (options.chained && options.k > 0) {
      const double r = sched.drift(t, options.k);
      x_t = r * x_tmk + std::sqrt(1.0 - r * r) * rng.normal_tensor(n, batch.points.cols());
    }
    const std::vector<int> ta(n, t), tb(n, t - options.k);
    const Tensor fa = model.generate(x_t, batch.labels, ta);
    const Tensor fb = model.generate(x_tmk, batch.labels, tb);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += dist(fa.row(i), fb.row(i));
    out.push_back({t, s / static_cast<double>(n)});
  }
  return out;
}

double top_quartile_mean(const std::vector<DeltaPoint>& curve) {
  if (curve.empty()) throw std::invalid_argument("empty delta curve");
  std::vector<DeltaPoint> sorted = curve;
  std::sort(sorted.begin(), sorted.end(), [](const DeltaPoint& a, const DeltaPoint& b) { return a.t < b.t; });
  const std::size_t take = std::max<std::size_t>(1, sorted.size() / 4);
  double s = 0.0;
  for (std::size_t i = sorted.size() - take; i < sorted.size(); ++i) s += sorted[i].delta;
  return s / static_cast<double>(take);
}

}  // namespace slad
