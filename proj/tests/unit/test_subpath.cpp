#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "slad/rng.hpp"
#include "slad/subpath.hpp"

using namespace slad;

namespace {

const NoiseSchedule& sched() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

std::vector<double> gamma_grid(int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = static_cast<double>(i) / (n - 1);
  return g;
}

}  // namespace

TEST_CASE("SL endpoints: gamma=1 gives x_t, gamma=0 gives the drifted x_{t-k}") {
  Rng rng(3);
  const Tensor xt = rng.normal_tensor(4, 2);
  const Tensor xs = rng.normal_tensor(4, 2);
  const double r = sched().drift(500, 100);
  CHECK(sl_interpolate(xt, xs, 1.0, 500, 100, sched()).x == xt);
  const Tensor at0 = sl_interpolate(xt, xs, 0.0, 500, 100, sched()).x;
  for (std::size_t i = 0; i < xt.size(); ++i) CHECK(at0[i] == r * xs[i]);
}

TEST_CASE("DL endpoints: gamma=1 gives x_t, gamma=0 gives x_{t-k}") {
  Rng rng(4);
  const Tensor xt = rng.normal_tensor(4, 2);
  const Tensor xs = rng.normal_tensor(4, 2);
  CHECK(dl_interpolate(xt, xs, 1.0, 300, 20, sched()).x == xt);
  CHECK(dl_interpolate(xt, xs, 0.0, 300, 20, sched()).x == xs);
}

TEST_CASE("row-wise interpolation agrees with the scalar form") {
  Rng rng(5);
  const Tensor xt = rng.normal_tensor(3, 2);
  const Tensor xs = rng.normal_tensor(3, 2);
  const double g[] = {0.0, 0.3, 1.0};
  const int t[] = {100, 640, 1000};
  const Tensor sl = sl_interpolate_rows(xt, xs, g, t, 100, sched());
  const Tensor dl = dl_interpolate_rows(xt, xs, g, t, 100, sched());
  for (std::size_t r = 0; r < 3; ++r) {
    const Tensor rt = Tensor::matrix(1, 2, {xt.at(r, 0), xt.at(r, 1)});
    const Tensor rs = Tensor::matrix(1, 2, {xs.at(r, 0), xs.at(r, 1)});
    const Tensor a = sl_interpolate(rt, rs, g[r], t[r], 100, sched()).x;
    const Tensor b = dl_interpolate(rt, rs, g[r], t[r], 100, sched()).x;
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(sl.at(r, c) == a[c]);
      CHECK(dl.at(r, c) == b[c]);
    }
  }
}

TEST_CASE("invalid gamma, t and k are rejected") {
  const Tensor x({1, 2}, 0.0);
  CHECK_THROWS_AS(sl_interpolate(x, x, 1.5, 500, 100, sched()), std::domain_error);
  CHECK_THROWS_AS(sl_interpolate(x, x, -0.1, 500, 100, sched()), std::domain_error);
  CHECK_THROWS_AS(sl_interpolate(x, x, 0.5, 50, 100, sched()), std::out_of_range);
  CHECK_THROWS_AS(dl_interpolate(x, x, 0.5, 1001, 100, sched()), std::out_of_range);
  CHECK_THROWS(sl_interpolate(x, x, 0.5, 500, 0, sched()));
  CHECK_THROWS_AS(sl_interpolate(x, Tensor({2, 2}, 0.0), 0.5, 500, 100, sched()), ShapeError);
}

TEST_CASE("noise-level endpoints") {
  for (int t : {20, 100, 731, 1000}) {
    for (int k : {20, 100}) {
      if (t < k) continue;
      const double r = sched().drift(t, k);
      CHECK(sigma_gamma_empirical(1.0, t, k, sched()) == doctest::Approx(sched().sigma(t)).epsilon(1e-14));
      CHECK(sigma_gamma_empirical(0.0, t, k, sched()) == doctest::Approx(r * sched().sigma(t - k)).epsilon(1e-14));
      CHECK(sigma_gamma_exact(1.0, t, k, sched()) == doctest::Approx(sched().sigma(t)).epsilon(1e-12));
      CHECK(sigma_gamma_exact(0.0, t, k, sched()) == doctest::Approx(r * sched().sigma(t - k)).epsilon(1e-14));
    }
  }
}

TEST_CASE("error surface closed form equals exact^2 - empirical^2") {
  const std::vector<double> g = gamma_grid(101);
  for (int k : {20, 100}) {
    for (int t = k; t <= 1000; ++t) {
      const std::vector<double> e = sigma_error_surface(t, k, sched(), g);
      CHECK(std::abs(e.front()) < 1e-12);
      CHECK(std::abs(e.back()) < 1e-12);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double ex = sigma_gamma_exact(g[i], t, k, sched());
        const double em = sigma_gamma_empirical(g[i], t, k, sched());
        REQUIRE(std::abs(e[i] - (ex * ex - em * em)) < 1e-10);
      }
    }
  }
}

TEST_CASE("error surface grows with the skipping step") {
  const std::vector<double> g = gamma_grid(101);
  for (int t : {200, 500, 1000}) {
    double small = 0.0, large = 0.0;
    for (double v : sigma_error_surface(t, 20, sched(), g)) small = std::max(small, std::abs(v));
    for (double v : sigma_error_surface(t, 100, sched(), g)) large = std::max(large, std::abs(v));
    CHECK(large > small);
  }
}

TEST_CASE("hand-evaluated interior points") {
  const double r = sched().drift(500, 100);
  const Tensor xs = Tensor::matrix(1, 1, {2.0});
  const Tensor xt = Tensor::matrix(1, 1, {4.0});
  CHECK(sl_interpolate(xt, xs, 0.5, 500, 100, sched()).x[0] == doctest::Approx(0.5 * r * 2.0 + 2.0).epsilon(1e-15));
  CHECK(dl_interpolate(Tensor::matrix(1, 1, {8.0}), Tensor::matrix(1, 1, {0.0}), 0.25, 500, 100, sched()).x[0] == 2.0);
  const double lo = r * sched().sigma(400), hi = sched().sigma(500);
  CHECK(sigma_gamma_empirical(0.5, 500, 100, sched()) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-15));
  // t = k: the start point is clean data, so the exact level is gamma * sigma[t].
  CHECK(sigma_gamma_exact(0.3, 100, 100, sched()) == doctest::Approx(0.3 * sched().sigma(100)).epsilon(1e-12));
  const DlSchedule d = dl_schedule(0.5, 500, 100, sched());
  const double lead = 0.5 + 0.5 * r;
  CHECK(d.alpha == doctest::Approx(0.5 * (sched().alpha(500) + sched().alpha(400))).epsilon(1e-15));
  CHECK(d.sigma == doctest::Approx(std::sqrt(lead * lead * sched().sigma(400) * sched().sigma(400) +
                                             0.25 * (1.0 - r * r))).epsilon(1e-15));
}

TEST_CASE("SL point minus its drifted start is gamma times dist_delta") {
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const int k = rng.uniform_int(1, 200);
    const int t = rng.uniform_int(k, 1000);
    const double g = rng.uniform();
    const Tensor xt = rng.normal_tensor(1, 3);
    const Tensor xs = rng.normal_tensor(1, 3);
    const Tensor p = sl_interpolate(xt, xs, g, t, k, sched()).x;
    const Tensor d = dist_delta(xt, xs, t, k, sched());
    const double r = sched().drift(t, k);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(p[c] - r * xs[c] - g * d[c]) < 1e-12);
  }
}

TEST_CASE("DL schedule endpoints and Monte Carlo marginal") {
  const DlSchedule one = dl_schedule(1.0, 600, 100, sched());
  const DlSchedule zero = dl_schedule(0.0, 600, 100, sched());
  CHECK(one.alpha == doctest::Approx(sched().alpha(600)).epsilon(1e-14));
  CHECK(one.sigma == doctest::Approx(sched().sigma(600)).epsilon(1e-12));
  CHECK(zero.alpha == doctest::Approx(sched().alpha(500)).epsilon(1e-14));
  CHECK(zero.sigma == doctest::Approx(sched().sigma(500)).epsilon(1e-14));

  // Chain x_{t-k} -> x_t and measure the DL point's mean and spread.
  const double x0 = 1.3, gamma = 0.4;
  const int t = 600, k = 100, n = 100000;
  const double r = sched().drift(t, k);
  Rng rng(11);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double xs = sched().alpha(t - k) * x0 + sched().sigma(t - k) * rng.normal();
    const double xt = r * xs + std::sqrt(1.0 - r * r) * rng.normal();
    const double v = xs + gamma * (xt - xs);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const DlSchedule d = dl_schedule(gamma, t, k, sched());
  CHECK(std::abs(mean - d.alpha * x0) < 3.0 * d.sigma / std::sqrt(n));
  CHECK(std::abs(var / (d.sigma * d.sigma) - 1.0) < 0.02);
}

TEST_CASE("dist_delta and dist_zero") {
  const Tensor xt = Tensor::matrix(1, 2, {1.0, -2.0});
  const Tensor xs = Tensor::matrix(1, 2, {0.5, 4.0});
  const double r = sched().drift(400, 20);
  const Tensor d = dist_delta(xt, xs, 400, 20, sched());
  CHECK(d[0] == 1.0 - r * 0.5);
  CHECK(d[1] == -2.0 - r * 4.0);
  const Tensor z = dist_zero(xs, 400, 20, sched());
  CHECK(z[0] == doctest::Approx(r * sched().sigma(380) * 0.5).epsilon(1e-15));
}
