#include "slad/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace slad {

Tensor NetworkEps::predict(const Tensor& z, std::span<const int> labels, std::span<const int> t) const {
  Conditioning cond{std::vector<int>(labels.begin(), labels.end()), std::vector<double>(z.rows(), 1.0),
                    std::vector<int>(t.begin(), t.end())};
  return net_.eps_value(params_, z, cond, sched_);
}

Tensor NetworkGenerator::generate(const Tensor& z, std::span<const int> labels, std::span<const int> t) const {
  Conditioning cond{std::vector<int>(labels.begin(), labels.end()), std::vector<double>(z.rows(), 1.0),
                    std::vector<int>(t.begin(), t.end())};
  return net_.generate_value(params_, z, cond, sched_);
}

AnalyticTeacher::AnalyticTeacher(Tensor mean, double scale, const NoiseSchedule& sched)
    : mean_(std::move(mean)), scale_(scale), sched_(sched) {
  if (!(scale_ > 0.0)) throw std::invalid_argument("analytic teacher needs a positive data scale");
  if (mean_.rows() != 1) throw ShapeError("analytic teacher mean must be a single row");
}

Tensor AnalyticTeacher::predict(const Tensor& z, std::span<const int>, std::span<const int> t) const {
  if (z.cols() != mean_.cols() || t.size() != z.rows()) throw ShapeError("analytic teacher: shape mismatch");
  Tensor out = z;
  const std::size_t d = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double a = sched_.alpha(t[r]);
    const double s = sched_.sigma(t[r]);
    const double denom = a * a * scale_ * scale_ + s * s;
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = s * (z[r * d + c] - a * mean_[c]) / denom;
  }
  return out;
}

Tensor AnalyticTeacher::posterior_mean(const Tensor& z, std::span<const int> t) const {
  if (z.cols() != mean_.cols() || t.size() != z.rows()) throw ShapeError("analytic teacher: shape mismatch");
  Tensor out = z;
  const std::size_t d = z.cols();
  const double s2 = scale_ * scale_;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double a = sched_.alpha(t[r]);
    const double s = sched_.sigma(t[r]);
    const double gain = a * s2 / (a * a * s2 + s * s);
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = mean_[c] + gain * (z[r * d + c] - a * mean_[c]);
  }
  return out;
}

Tensor analytic_eps(const AnalyticTeacher& teacher, const Tensor& z, int t) {
  const std::vector<int> ts(z.rows(), t);
  return teacher.predict(z, {}, ts);
}

// ---------------------------------------------------------------------------

namespace {

void check_rows(const Tensor& z, std::size_t n_from, std::size_t n_to, std::size_t n_labels) {
  if (n_from != z.rows() || n_to != z.rows() || n_labels != z.rows()) {
    throw ShapeError("solver: one (from_t, to_t, label) per row required");
  }
}

/// Combines a predicted eps into the DDIM update, row-wise.
Tensor ddim_apply(const Tensor& z, const Tensor& eps, std::span<const int> from_t, std::span<const int> to_t,
                  const NoiseSchedule& sched) {
  Tensor out = z;
  const std::size_t d = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (to_t[r] >= from_t[r]) {
      throw std::invalid_argument("ddim_step needs to_t < from_t, got " + std::to_string(from_t[r]) + " -> " +
                                  std::to_string(to_t[r]));
    }
    const double a_from = sched.alpha(from_t[r]);
    const double s_from = sched.sigma(from_t[r]);
    const double a_to = sched.alpha(to_t[r]);
    const double s_to = sched.sigma(to_t[r]);
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t i = r * d + c;
      out[i] = a_to * ((z[i] - s_from * eps[i]) / a_from) + s_to * eps[i];
    }
  }
  return out;
}

void check_order(std::span<const int> from_t, std::span<const int> to_t, const NoiseSchedule& sched) {
  for (std::size_t r = 0; r < from_t.size(); ++r) {
    if (to_t[r] < 0 || from_t[r] > sched.steps() || to_t[r] >= from_t[r]) {
      throw std::invalid_argument("solver step needs 0 <= to_t < from_t <= T, got " + std::to_string(from_t[r]) +
                                  " -> " + std::to_string(to_t[r]));
    }
  }
}

}  // namespace

Tensor ddim_step(const EpsModel& model, const Tensor& z, std::span<const int> from_t, std::span<const int> to_t,
                 std::span<const int> labels, const NoiseSchedule& sched) {
  check_rows(z, from_t.size(), to_t.size(), labels.size());
  check_order(from_t, to_t, sched);
  const Tensor eps = model.predict(z, labels, from_t);
  return ddim_apply(z, eps, from_t, to_t, sched);
}

Tensor ddim_step(const EpsModel& model, const Tensor& z, int from_t, int to_t, std::span<const int> labels,
                 const NoiseSchedule& sched) {
  const std::vector<int> f(z.rows(), from_t), t(z.rows(), to_t);
  return ddim_step(model, z, f, t, labels, sched);
}

Tensor cfg_phi(const EpsModel& model, const Tensor& z, std::span<const int> from_t, std::span<const int> to_t,
               std::span<const int> labels, double w, const NoiseSchedule& sched) {
  check_rows(z, from_t.size(), to_t.size(), labels.size());
  check_order(from_t, to_t, sched);
  const std::vector<int> null_labels(z.rows(), kNullLabel);
  const Tensor phi_cond = ddim_step(model, z, from_t, to_t, labels, sched) - z;
  const Tensor phi_uncond = ddim_step(model, z, from_t, to_t, null_labels, sched) - z;
  Tensor out = phi_cond;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * phi_cond[i] + (1.0 - w) * phi_uncond[i];
  return out;
}

Tensor multiple_estimation(const EpsModel& model, const Tensor& z_t, std::span<const int> t, int k, int k_phi,
                           std::span<const int> labels, double w, const NoiseSchedule& sched) {
  if (k_phi < 1 || k < k_phi || k % k_phi != 0) {
    throw std::invalid_argument("multiple estimation needs k divisible by k_phi (k=" + std::to_string(k) +
                                ", k_phi=" + std::to_string(k_phi) + ")");
  }
  if (t.size() != z_t.rows()) throw ShapeError("multiple_estimation: one timestep per row required");
  for (int ti : t) {
    if (ti < k || ti > sched.steps()) throw std::out_of_range("multiple_estimation needs k <= t <= T");
  }
  Tensor z = z_t;
  std::vector<int> from(t.begin(), t.end());
  std::vector<int> to(from.size());
  for (int i = 0; i < k / k_phi; ++i) {
    for (std::size_t r = 0; r < from.size(); ++r) to[r] = from[r] - k_phi;
    Tensor inc = cfg_phi(model, z, from, to, labels, w, sched);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += inc[j];
    from = to;
  }
  return z;
}

Tensor ddim_sample(const EpsModel& model, const Tensor& z_T, int n_steps, std::span<const int> labels, double w,
                   const NoiseSchedule& sched) {
  if (n_steps < 1) throw std::invalid_argument("ddim_sample needs at least one step");
  const int T = sched.steps();
  Tensor z = z_T;
  std::vector<int> from(z.rows()), to(z.rows());
  for (int i = 0; i < n_steps; ++i) {
    const int a = static_cast<int>(std::lround(static_cast<double>(T) * (n_steps - i) / n_steps));
    const int b = static_cast<int>(std::lround(static_cast<double>(T) * (n_steps - i - 1) / n_steps));
    if (a == b) continue;
    std::fill(from.begin(), from.end(), a);
    std::fill(to.begin(), to.end(), b);
    if (w == 1.0) {
      z = ddim_step(model, z, from, to, labels, sched);
    } else {
      z = z + cfg_phi(model, z, from, to, labels, w, sched);
    }
  }
  return z;
}

std::vector<int> even_time_grid(int T, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("sampling needs at least one step");
  if (n_steps > T) throw std::invalid_argument("more sampling steps than timesteps");
  std::vector<int> grid(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) grid[i] = (n_steps - i) * T / n_steps;
  return grid;
}

Tensor multistep_sample(const GeneratorModel& model, std::size_t count, int n_steps, std::span<const int> labels,
                        const NoiseSchedule& sched, Rng& rng, std::span<const int> grid) {
  if (n_steps < 1) throw std::invalid_argument("multistep_sample needs n_steps >= 1");
  if (labels.size() != count) throw ShapeError("multistep_sample: one label per sample required");
  std::vector<int> times = grid.empty() ? even_time_grid(sched.steps(), n_steps) : std::vector<int>(grid.begin(), grid.end());
  if (static_cast<int>(times.size()) != n_steps) throw std::invalid_argument("sampling grid length must equal n_steps");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 1 || times[i] > sched.steps() || (i > 0 && times[i] >= times[i - 1])) {
      throw std::invalid_argument("sampling grid must be strictly descending within [1, T]");
    }
  }

  Tensor z = rng.normal_tensor(count, model.dim());
  std::vector<int> t(count);
  Tensor x0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::fill(t.begin(), t.end(), times[i]);
    x0 = model.generate(z, labels, t);
    if (i + 1 < times.size()) {
      const int next = times[i + 1];
      z = perturb(x0, next, rng.normal_tensor(count, model.dim()), sched);
    }
  }
  return x0;
}

}  // namespace slad
