#include <doctest.h>

#include <cmath>
#include <set>

#include "slad/solver.hpp"

using namespace slad;

namespace {

const NoiseSchedule& sched() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

// Exact eps for data concentrated at one point mu: (z - alpha mu) / sigma.
class PointMass final : public EpsModel {
 public:
  explicit PointMass(Tensor mu) : mu_(std::move(mu)) {}
  Tensor predict(const Tensor& z, std::span<const int>, std::span<const int> t) const override {
    Tensor out = z;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (std::size_t c = 0; c < z.cols(); ++c) {
        out.at(r, c) = (z.at(r, c) - sched().alpha(t[r]) * mu_[c]) / sched().sigma(t[r]);
      }
    }
    return out;
  }

 private:
  Tensor mu_;
};

// eps = (label + 2) * z, with the null label mapped to 0.5 * z; records calls.
class Counting final : public EpsModel {
 public:
  mutable int calls = 0;
  mutable std::set<int> from_times;
  Tensor predict(const Tensor& z, std::span<const int> labels, std::span<const int> t) const override {
    ++calls;
    from_times.insert(t[0]);
    Tensor out = z;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      const double g = labels[r] == kNullLabel ? 0.5 : labels[r] + 2.0;
      for (std::size_t c = 0; c < z.cols(); ++c) out.at(r, c) = g * z.at(r, c);
    }
    return out;
  }
};

class Constant final : public GeneratorModel {
 public:
  std::size_t dim() const override { return 2; }
  Tensor generate(const Tensor& z, std::span<const int>, std::span<const int>) const override {
    return Tensor(z.shape(), 0.25);
  }
};

}  // namespace

TEST_CASE("DDIM step on hand values") {
  Counting model;
  const Tensor z = Tensor::matrix(1, 2, {1.0, -2.0});
  const int labels[] = {0};
  const Tensor out = ddim_step(model, z, 600, 400, labels, sched());
  const double a6 = sched().alpha(600), s6 = sched().sigma(600), a4 = sched().alpha(400), s4 = sched().sigma(400);
  for (std::size_t c = 0; c < 2; ++c) {
    const double e = 2.0 * z[c];
    CHECK(out[c] == doctest::Approx(a4 * (z[c] - s6 * e) / a6 + s4 * e).epsilon(1e-15));
  }
  CHECK_THROWS(ddim_step(model, z, 400, 400, labels, sched()));
  CHECK_THROWS(ddim_step(model, z, 400, 600, labels, sched()));
}

TEST_CASE("DDIM is exact for point-mass data") {
  const Tensor mu = Tensor::matrix(1, 2, {0.7, -1.1});
  const PointMass model(mu);
  Rng rng(1);
  const Tensor eps = rng.normal_tensor(5, 2);
  const Tensor z = perturb(Tensor::matrix(5, 2, {0.7, -1.1, 0.7, -1.1, 0.7, -1.1, 0.7, -1.1, 0.7, -1.1}), 900, eps, sched());
  const std::vector<int> labels(5, 0);
  const Tensor moved = ddim_step(model, z, 900, 300, labels, sched());
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(moved.at(r, c) ==
            doctest::Approx(sched().alpha(300) * mu[c] + sched().sigma(300) * eps.at(r, c)).epsilon(1e-12));
    }
  }
  const Tensor x0 = ddim_sample(model, z, 1, labels, 1.0, sched());
  for (std::size_t r = 0; r < 5; ++r) CHECK(x0.at(r, 0) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("guided increment is affine in w") {
  Counting model;
  Rng rng(2);
  const Tensor z = rng.normal_tensor(3, 2);
  const std::vector<int> from(3, 500), to(3, 480), labels{0, 1, 2}, nulls(3, kNullLabel);
  const Tensor cond = ddim_step(model, z, from, to, labels, sched()) - z;
  const Tensor uncond = ddim_step(model, z, from, to, nulls, sched()) - z;
  for (double w : {0.0, 1.0, 3.5}) {
    const Tensor phi = cfg_phi(model, z, from, to, labels, w, sched());
    for (std::size_t i = 0; i < phi.size(); ++i) {
      CHECK(phi[i] == doctest::Approx(w * cond[i] + (1.0 - w) * uncond[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("multiple estimation: k=100, k_phi=20 makes 5 moves and 10 eps evaluations") {
  Counting model;
  Rng rng(3);
  const Tensor z = rng.normal_tensor(4, 2);
  const std::vector<int> t(4, 700), labels(4, 1);
  multiple_estimation(model, z, t, 100, 20, labels, 2.0, sched());
  CHECK(model.calls == 10);
  CHECK(model.from_times == std::set<int>{620, 640, 660, 680, 700});
}

TEST_CASE("multiple estimation with k_phi = k is one guided move") {
  Counting model;
  Rng rng(4);
  const Tensor z = rng.normal_tensor(4, 2);
  const std::vector<int> t(4, 700), to(4, 600), labels(4, 1);
  const Tensor one = multiple_estimation(model, z, t, 100, 100, labels, 2.0, sched());
  const Tensor ref = z + cfg_phi(model, z, t, to, labels, 2.0, sched());
  CHECK(max_abs_diff(one, ref) == 0.0);
  CHECK_THROWS(multiple_estimation(model, z, t, 100, 30, labels, 2.0, sched()));
  const std::vector<int> early(4, 50);
  CHECK_THROWS(multiple_estimation(model, z, early, 100, 20, labels, 2.0, sched()));
}

TEST_CASE("analytic teacher eps and posterior mean are consistent") {
  const AnalyticTeacher teacher(Tensor::matrix(1, 2, {1.0, 0.0}), 0.5, sched());
  Rng rng(5);
  const Tensor z = rng.normal_tensor(6, 2);
  const std::vector<int> t{1, 10, 100, 500, 900, 1000};
  const Tensor e = teacher.predict(z, {}, t);
  const Tensor m = teacher.posterior_mean(z, t);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(z.at(r, c) - sched().sigma(t[r]) * e.at(r, c) ==
            doctest::Approx(sched().alpha(t[r]) * m.at(r, c)).epsilon(1e-12));
    }
  }
  CHECK_THROWS(AnalyticTeacher(Tensor::matrix(1, 2, {0, 0}), 0.0, sched()));
}

TEST_CASE("even sampling grid") {
  CHECK(even_time_grid(1000, 1) == std::vector<int>{1000});
  CHECK(even_time_grid(1000, 4) == std::vector<int>{1000, 750, 500, 250});
  CHECK(even_time_grid(1000, 3) == std::vector<int>{1000, 666, 333});
  CHECK_THROWS(even_time_grid(1000, 0));
}

TEST_CASE("multistep sampling returns the last prediction and checks its grid") {
  Constant model;
  Rng rng(6);
  const std::vector<int> labels(5, 0);
  const Tensor x = multistep_sample(model, 5, 3, labels, sched(), rng);
  CHECK(x == Tensor({5, 2}, 0.25));
  const int bad[] = {500, 600};
  CHECK_THROWS(multistep_sample(model, 5, 2, labels, sched(), rng, bad));
  const int good[] = {900, 100};
  CHECK(multistep_sample(model, 5, 2, labels, sched(), rng, good) == Tensor({5, 2}, 0.25));
}
