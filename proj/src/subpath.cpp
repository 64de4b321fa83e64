#include "slad/subpath.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace slad {

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::domain_error("gamma must lie in [0, 1], got " + std::to_string(gamma));
}

void check_tk(int t, int k, const NoiseSchedule& sched) {
  if (k < 1) throw std::invalid_argument("skipping step k must be >= 1");
  if (t < k || t > sched.steps()) {
    throw std::out_of_range("sub-path needs k <= t <= T, got t=" + std::to_string(t) + " k=" + std::to_string(k));
  }
}

void check_rows(const Tensor& x_t, const Tensor& x_tmk, std::size_t ng, std::size_t nt) {
  require_same_shape(x_t, x_tmk, "interpolate");
  if (ng != x_t.rows() || nt != x_t.rows()) throw ShapeError("interpolate: one (gamma, t) per row required");
}

}  // namespace

SubPathSample sl_interpolate(const Tensor& x_t, const Tensor& x_tmk, double gamma, int t, int k,
                             const NoiseSchedule& sched) {
  require_same_shape(x_t, x_tmk, "sl_interpolate");
  check_gamma(gamma);
  check_tk(t, k, sched);
  const double r = sched.drift(t, k);
  Tensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - gamma) * r * x_tmk[i] + gamma * x_t[i];
  return {std::move(out), gamma, t, k, PathMode::SL};
}

SubPathSample dl_interpolate(const Tensor& x_t, const Tensor& x_tmk, double gamma, int t, int k,
                             const NoiseSchedule& sched) {
  require_same_shape(x_t, x_tmk, "dl_interpolate");
  check_gamma(gamma);
  check_tk(t, k, sched);
  Tensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Endpoints are returned verbatim so the identities hold bit for bit.
    out[i] = gamma == 1.0 ? x_t[i] : x_tmk[i] + gamma * (x_t[i] - x_tmk[i]);
  }
  return {std::move(out), gamma, t, k, PathMode::DL};
}

Tensor sl_interpolate_rows(const Tensor& x_t, const Tensor& x_tmk, std::span<const double> gamma,
                           std::span<const int> t, int k, const NoiseSchedule& sched) {
  check_rows(x_t, x_tmk, gamma.size(), t.size());
  Tensor out = x_t;
  const std::size_t n = x_t.cols();
  for (std::size_t r = 0; r < x_t.rows(); ++r) {
    check_gamma(gamma[r]);
    check_tk(t[r], k, sched);
    const double d = sched.drift(t[r], k);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t i = r * n + c;
      out[i] = (1.0 - gamma[r]) * d * x_tmk[i] + gamma[r] * x_t[i];
    }
  }
  return out;
}

Tensor dl_interpolate_rows(const Tensor& x_t, const Tensor& x_tmk, std::span<const double> gamma,
                           std::span<const int> t, int k, const NoiseSchedule& sched) {
  check_rows(x_t, x_tmk, gamma.size(), t.size());
  Tensor out = x_t;
  const std::size_t n = x_t.cols();
  for (std::size_t r = 0; r < x_t.rows(); ++r) {
    check_gamma(gamma[r]);
    check_tk(t[r], k, sched);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t i = r * n + c;
      out[i] = gamma[r] == 1.0 ? x_t[i] : x_tmk[i] + gamma[r] * (x_t[i] - x_tmk[i]);
    }
  }
  return out;
}

double sigma_gamma_empirical(double gamma, int t, int k, const NoiseSchedule& sched) {
  check_gamma(gamma);
  check_tk(t, k, sched);
  return (1.0 - gamma) * sched.drift(t, k) * sched.sigma(t - k) + gamma * sched.sigma(t);
}

double sigma_gamma_exact(double gamma, int t, int k, const NoiseSchedule& sched) {
  check_gamma(gamma);
  check_tk(t, k, sched);
  const double r = sched.drift(t, k);
  const double s = sched.sigma(t - k);
  return std::sqrt(r * r * s * s + gamma * gamma * (1.0 - r * r));
}

std::vector<double> sigma_error_surface(int t, int k, const NoiseSchedule& sched, std::span<const double> gamma_grid) {
  check_tk(t, k, sched);
  const double r = sched.drift(t, k);
  const double a = sched.alpha(t);
  const double s_tmk = sched.sigma(t - k);
  const double bracket = std::sqrt(r * r - a * a) - std::sqrt(1.0 - a * a);
  std::vector<double> out;
  out.reserve(gamma_grid.size());
  for (double g : gamma_grid) {
    check_gamma(g);
    out.push_back(2.0 * g * (1.0 - g) * r * s_tmk * bracket);
  }
  return out;
}

DlSchedule dl_schedule(double gamma, int t, int k, const NoiseSchedule& sched) {
  check_gamma(gamma);
  check_tk(t, k, sched);
  const double r = sched.drift(t, k);
  const double s = sched.sigma(t - k);
  const double lead = 1.0 - gamma + gamma * r;
  return {gamma * sched.alpha(t) + (1.0 - gamma) * sched.alpha(t - k),
          std::sqrt(lead * lead * s * s + gamma * gamma * (1.0 - r * r))};
}

Tensor dist_delta(const Tensor& x_t, const Tensor& x_tmk, int t, int k, const NoiseSchedule& sched) {
  require_same_shape(x_t, x_tmk, "dist_delta");
  check_tk(t, k, sched);
  return x_t - sched.drift(t, k) * x_tmk;
}

Tensor dist_zero(const Tensor& eps_pred_tmk, int t, int k, const NoiseSchedule& sched) {
  check_tk(t, k, sched);
  return (sched.drift(t, k) * sched.sigma(t - k)) * eps_pred_tmk;
}

}  // namespace slad
