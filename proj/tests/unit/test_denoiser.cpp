#include <doctest.h>

#include <cmath>

#include "slad/denoiser.hpp"
#include "slad/optimizer.hpp"

using namespace slad;

namespace {

const NoiseSchedule& sched() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.dim = 2;
  c.width = 16;
  c.hidden_layers = 2;
  c.num_labels = 3;
  c.label_dim = 4;
  c.t_freqs = 4;
  c.gamma_freqs = 3;
  return c;
}

Conditioning random_cond(Rng& rng, std::size_t n, int num_labels) {
  Conditioning c;
  for (std::size_t i = 0; i < n; ++i) {
    c.labels.push_back(rng.uniform_int(-1, num_labels - 1));
    c.gamma.push_back(rng.uniform());
    c.t.push_back(rng.uniform_int(100, 1000));
  }
  return c;
}

// Parameters whose MLP output is identically zero.
ParamStore silent_params(const Denoiser& net, Rng& rng) {
  ParamStore p = net.init(rng);
  p.at("out.weight") = Tensor(p.at("out.weight").shape(), 0.0);
  return p;
}

}  // namespace

TEST_CASE("generator returns x exactly at t = 0") {
  const Denoiser net(small_config());
  Rng rng(1);
  const ParamStore p = net.init(rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = rng.normal_tensor(8, 2);
    Conditioning c = random_cond(rng, 8, 3);
    c.t.assign(8, 0);
    CHECK(net.generate_value(p, x, c, sched()) == x);
  }
}

TEST_CASE("gamma = 1 output ignores the gamma-embedding weights") {
  const Denoiser net(small_config());
  Rng rng(2);
  const ParamStore p = net.init(rng);
  const Tensor x = rng.normal_tensor(16, 2);
  Conditioning c = random_cond(rng, 16, 3);
  c.gamma.assign(16, 1.0);
  const Tensor before = net.generate_value(p, x, c, sched());
  ParamStore q = p;
  for (const auto& name : net.gamma_parameter_names()) {
    for (auto& v : q.at(name).values()) v += 10.0 * rng.normal();
  }
  CHECK(net.generate_value(q, x, c, sched()) == before);

  // A gamma < 1 row does see the perturbation.
  c.gamma.assign(16, 0.5);
  CHECK_FALSE(net.generate_value(q, x, c, sched()) == net.generate_value(p, x, c, sched()));
}

TEST_CASE("excising the gamma branch matches gamma = 1 rows bit for bit") {
  const Denoiser net(small_config());
  Rng rng(3);
  const ParamStore p = net.init(rng);
  const Tensor x = rng.normal_tensor(5, 2);
  Conditioning c = random_cond(rng, 5, 3);
  c.gamma.assign(5, 1.0);
  Tape a, b;
  const Tensor full = net.eps(a, p, Binding{"p", false}, a.constant(x), c, sched()).value();
  const Tensor cut = net.eps(b, p, Binding{"p", false}, b.constant(x), c, sched(), {}, true).value();
  CHECK(full == cut);
}

TEST_CASE("gamma embedding: zero at 1, tapered fourier features below") {
  const Denoiser net(small_config());
  const Conditioning c{{0, 0}, {1.0, 0.25}, {10, 10}};
  const Tensor e = net.gamma_embedding(c);
  const std::vector<double> bank = frequency_bank(3, 1.0, 1000.0);
  for (std::size_t j = 0; j < 6; ++j) CHECK(e.at(0, j) == 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(e.at(1, j) == doctest::Approx(0.75 * std::sin(0.25 * bank[j])).epsilon(1e-15));
    CHECK(e.at(1, 3 + j) == doctest::Approx(0.75 * std::cos(0.25 * bank[j])).epsilon(1e-15));
  }
}

TEST_CASE("frequency bank is log-spaced between its endpoints") {
  const std::vector<double> b = frequency_bank(4, 1.0, 1000.0);
  CHECK(b.front() == 1.0);
  CHECK(b.back() == doctest::Approx(1000.0).epsilon(1e-14));
  CHECK(b[1] == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(b[2] == doctest::Approx(100.0).epsilon(1e-14));
  CHECK_THROWS(frequency_bank(0, 1.0, 2.0));
}

TEST_CASE("boundary coefficients") {
  CHECK(c_skip(0, 1000, 0.5) == 1.0);
  CHECK(c_out(0, 1000, 0.5) == 0.0);
  CHECK(c_skip(1000, 1000, 0.5) == doctest::Approx(0.25 / 1.25).epsilon(1e-15));
  CHECK(c_out(1000, 1000, 0.5) == doctest::Approx(1.0 / std::sqrt(1.25)).epsilon(1e-15));
}

TEST_CASE("preconditioned eps with a silent MLP is the unit-Gaussian posterior estimate") {
  const Denoiser net(small_config());
  Rng rng(4);
  const ParamStore p = silent_params(net, rng);
  const Tensor x = rng.normal_tensor(4, 2);
  for (int t : {1, 250, 999, 1000}) {
    const Conditioning c = Conditioning::uniform(4, 1, 1.0, t);
    const Tensor e = net.eps_value(p, x, c, sched());
    const double a = sched().alpha(t), s = sched().sigma(t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(e[i] == doctest::Approx(s / (a * a + s * s) * x[i]).epsilon(1e-13));
    }
    // F then reduces to (c_skip + c_out alpha) x since 1 - sigma^2 = alpha^2.
    const Tensor f = net.generate_value(p, x, c, sched());
    const double coef = c_skip(t, 1000, 0.5) + c_out(t, 1000, 0.5) * a;
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(f[i] == doctest::Approx(coef * x[i]).epsilon(1e-9));
  }
}

TEST_CASE("raw head returns the output bias when the MLP weights are silent") {
  DenoiserConfig cfg = small_config();
  cfg.precondition = false;
  const Denoiser net(cfg);
  Rng rng(5);
  ParamStore p = silent_params(net, rng);
  p.at("out.bias") = Tensor::matrix(1, 2, {0.3, -0.7});
  const Tensor e = net.eps_value(p, rng.normal_tensor(3, 2), Conditioning::uniform(3, 0, 0.4, 500), sched());
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(e.at(r, 0) == 0.3);
    CHECK(e.at(r, 1) == -0.7);
  }
}

TEST_CASE("generator gradient matches central differences") {
  const Denoiser net(small_config());
  Rng rng(6);
  const ParamStore p = net.init(rng);
  const Tensor x = rng.normal_tensor(6, 2);
  const Conditioning c = random_cond(rng, 6, 3);
  const PathSpec path{100, PathMode::SL, false};

  auto loss_value = [&](const ParamStore& q) {
    Tape tape;
    return tape.sum(tape.square(net.generate(tape, q, Binding{"p", true}, tape.constant(x), c, sched(), path)))
        .value()
        .item();
  };
  Tape tape;
  const GradMap g = grads_for(
      tape.backward(tape.sum(tape.square(net.generate(tape, p, Binding{"p", true}, tape.constant(x), c, sched(), path)))),
      "p");

  double worst = 0.0;
  for (const auto& [name, value] : p.tensors()) {
    for (std::size_t i = 0; i < value.size(); i += 7) {
      ParamStore q = p;
      const double h = 1e-6;
      q.at(name)[i] = value[i] + h;
      const double up = loss_value(q);
      q.at(name)[i] = value[i] - h;
      const double down = loss_value(q);
      const double numeric = (up - down) / (2 * h);
      const double analytic = g.at(name)[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3}));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("DL path uses the direct-linking levels") {
  const Denoiser net(small_config());
  Rng rng(7);
  const ParamStore p = silent_params(net, rng);
  const Tensor x = rng.normal_tensor(2, 2);
  const Conditioning c = Conditioning::uniform(2, 0, 0.3, 700);
  const DlSchedule d = dl_schedule(0.3, 700, 100, sched());
  const Tensor e = net.eps_value(p, x, c, sched(), PathSpec{100, PathMode::DL, false});
  const double var = d.alpha * d.alpha + d.sigma * d.sigma;
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(e[i] == doctest::Approx(d.sigma / var * x[i]).epsilon(1e-13));
}

TEST_CASE("EMA update on hand values") {
  ParamStore theta({{"w", Tensor::matrix(1, 2, {1.0, 2.0})}});
  ParamStore shadow({{"w", Tensor::matrix(1, 2, {0.0, 4.0})}});
  ema_update(theta, shadow, 0.75);
  CHECK(shadow.at("w") == Tensor::matrix(1, 2, {0.25, 3.5}));
  CHECK_THROWS(ema_update(theta, shadow, 1.0));
}

TEST_CASE("conditioning is validated") {
  const Denoiser net(small_config());
  Rng rng(8);
  const ParamStore p = net.init(rng);
  const Tensor x = rng.normal_tensor(2, 2);
  CHECK_THROWS_AS(net.eps_value(p, x, Conditioning::uniform(3, 0, 1.0, 5), sched()), ShapeError);
  CHECK_THROWS_AS(net.eps_value(p, x, Conditioning::uniform(2, 3, 1.0, 5), sched()), std::out_of_range);
  CHECK_THROWS_AS(net.eps_value(p, x, Conditioning::uniform(2, 0, 1.5, 5), sched()), std::domain_error);
  CHECK_THROWS_AS(net.eps_value(p, x, Conditioning::uniform(2, 0, 1.0, 1001), sched()), std::out_of_range);
  CHECK_THROWS_AS(net.eps_value(p, rng.normal_tensor(2, 3), Conditioning::uniform(2, 0, 1.0, 5), sched()), ShapeError);
  DenoiserConfig bad = small_config();
  bad.width = 0;
  CHECK_THROWS(Denoiser{bad});
}

TEST_CASE("parameter layout keeps the gamma block separate") {
  const Denoiser net(small_config());
  Rng rng(9);
  const ParamStore p = net.init(rng);
  CHECK(p.at("in_gamma.weight").rows() == 6);
  CHECK(p.at("in.weight").rows() == 2 + 8 + 4);
  CHECK(p.at("label.table").rows() == 4);
  CHECK(p.contains("hidden1.weight"));
  CHECK_FALSE(p.contains("hidden2.weight"));
}
