#include <doctest.h>

#include <cmath>

#include "slad/distill.hpp"

using namespace slad;

namespace {

const NoiseSchedule& sched() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

DenoiserConfig small_net() {
  DenoiserConfig c;
  c.width = 16;
  c.hidden_layers = 2;
  c.num_labels = 1;
  return c;
}

}  // namespace

TEST_CASE("L2 and pseudo-Huber metrics on hand values") {
  const Tensor a = Tensor::matrix(1, 2, {0.0, 0.0});
  const Tensor b = Tensor::matrix(1, 2, {3.0, 4.0});
  CHECK(metric_eval(a, b, Metric::L2) == 12.5);
  const double c = 0.00054 * std::sqrt(2.0);
  CHECK(pseudo_huber_c(2) == c);
  CHECK(metric_eval(a, b, Metric::PseudoHuber) == doctest::Approx(std::sqrt(25.0 + c * c) - c).epsilon(1e-15));
  CHECK(metric_eval(a, a, Metric::PseudoHuber) == 0.0);
  CHECK(metric_eval(a, a, Metric::L2) == 0.0);
}

TEST_CASE("pseudo-Huber never exceeds the Euclidean distance") {
  Rng rng(1);
  for (double scale : {1e-6, 1e-4, 1e-2, 1.0, 100.0}) {
    const Tensor a = scale * rng.normal_tensor(1, 3);
    const Tensor b = scale * rng.normal_tensor(1, 3);
    double n2 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) n2 += (a[i] - b[i]) * (a[i] - b[i]);
    const double ph = metric_eval(a, b, Metric::PseudoHuber);
    CHECK(ph >= 0.0);
    CHECK(ph <= std::sqrt(n2));
  }
}

TEST_CASE("time grid is aligned to the solver step") {
  const std::vector<int> g = distill_time_grid(1000, 100, 20);
  CHECK(g.size() == 46);
  CHECK(g.front() == 100);
  CHECK(g.back() == 1000);
  CHECK(distill_time_grid(1000, 100, 100) == std::vector<int>{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000});
}

TEST_CASE("configuration checks") {
  DistillConfig c;
  c.k = 100;
  c.k_phi = 30;
  CHECK_THROWS(c.validate(1000));
  c.k_phi = 20;
  CHECK_NOTHROW(c.validate(1000));
  c.mu = 1.0;
  CHECK_THROWS(c.validate(1000));
  c.mu = 0.95;
  c.k = 2000;
  c.k_phi = 100;
  CHECK_THROWS(c.validate(1000));
  CHECK(distill_mode_from_string("baseline") == DistillMode::ConsistencyBaseline);
  CHECK_THROWS(distill_mode_from_string("slam"));
  CHECK(metric_from_string("pseudo_huber") == Metric::PseudoHuber);
}

TEST_CASE("SL loss with gamma pinned to 1 equals the consistency baseline loss") {
  const Denoiser net(small_net());
  const AnalyticTeacher teacher(Tensor::matrix(1, 2, {1.0, 0.0}), 1.0, sched());
  const Dataset data = single_gaussian_dataset(2, 1.0, 1.0, 3);
  Rng init_rng(3);
  const ParamStore theta = net.init(init_rng);
  ParamStore theta_minus = theta;
  Rng perturb_rng(4);
  for (const auto& [name, t] : theta.tensors()) {
    Tensor shifted = t;
    for (auto& v : shifted.values()) v += 0.01 * perturb_rng.normal();
    theta_minus.set(name, shifted);
  }

  DistillConfig sl;
  sl.mode = DistillMode::SL;
  sl.gamma_override = 1.0;
  DistillConfig base = sl;
  base.mode = DistillMode::ConsistencyBaseline;
  base.gamma_override.reset();

  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const LabeledBatch batch = data.sample(64ULL * i, 64);
    Rng r1 = Rng(77).split(static_cast<std::uint64_t>(i));
    Rng r2 = r1;
    const DistillSample s1 = draw_distill_sample(batch, teacher, sl, sched(), r1);
    const DistillSample s2 = draw_distill_sample(batch, teacher, base, sched(), r2);
    Tape t1, t2;
    const double l1 = distill_loss(t1, net, theta, theta_minus, s1, sl, sched()).value().item();
    const double l2 = distill_loss(t2, net, theta, theta_minus, s2, base, sched()).value().item();
    worst = std::max(worst, std::abs(l1 - l2));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("target branch receives no gradient") {
  const Denoiser net(small_net());
  const AnalyticTeacher teacher(Tensor::matrix(1, 2, {1.0, 0.0}), 1.0, sched());
  const Dataset data = single_gaussian_dataset(2, 1.0, 1.0, 3);
  Rng init_rng(5);
  const ParamStore theta = net.init(init_rng);
  DistillConfig cfg;
  Rng rng(6);
  const DistillSample s = draw_distill_sample(data.sample(0, 32), teacher, cfg, sched(), rng);
  Tape tape;
  const GradMap g = tape.backward(distill_loss(tape, net, theta, theta, s, cfg, sched()));
  bool any_theta = false;
  for (const auto& [name, grad] : g) {
    if (name.rfind("ema/", 0) == 0) {
      for (double v : grad.values()) REQUIRE(v == 0.0);
    } else if (name.rfind("theta/", 0) == 0) {
      for (double v : grad.values()) any_theta = any_theta || v != 0.0;
    }
  }
  CHECK(any_theta);
  CHECK(grads_for(g, "theta").size() == theta.tensors().size());
}

TEST_CASE("online input follows the path mode") {
  DistillSample s;
  s.z_t = Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0});
  s.z_hat_tmk = Tensor::matrix(2, 2, {0.5, 0.5, -1.0, 1.0});
  s.t = {500, 800};
  s.gamma = {0.25, 1.0};
  s.labels = {0, 0};
  DistillConfig cfg;
  cfg.mode = DistillMode::DL;
  const Tensor dl = online_input(s, cfg, sched());
  CHECK(dl.at(0, 0) == 0.5 + 0.25 * (1.0 - 0.5));
  CHECK(dl.at(1, 1) == 4.0);
  cfg.mode = DistillMode::SL;
  const Tensor sl = online_input(s, cfg, sched());
  CHECK(sl.at(0, 1) == 0.75 * sched().drift(500, 100) * 0.5 + 0.25 * 2.0);
  cfg.mode = DistillMode::ConsistencyBaseline;
  CHECK(online_input(s, cfg, sched()) == s.z_t);
}

TEST_CASE("zero iterations leave the student at its initialization; runs are deterministic") {
  const Denoiser net(small_net());
  const AnalyticTeacher teacher(Tensor::matrix(1, 2, {1.0, 0.0}), 1.0, sched());
  const Dataset data = single_gaussian_dataset(2, 1.0, 1.0, 3);
  Rng init_rng(8);
  const ParamStore init = net.init(init_rng);

  DistillConfig cfg;
  cfg.iterations = 0;
  cfg.batch_size = 16;
  DistillState idle = make_distill_state(init, cfg);
  distill(idle, net, teacher, data, cfg, sched());
  CHECK(idle.theta == init);
  CHECK(idle.theta_minus == init);

  cfg.iterations = 5;
  DistillState a = make_distill_state(init, cfg);
  DistillState b = make_distill_state(init, cfg);
  std::vector<double> losses;
  distill(a, net, teacher, data, cfg, sched(), [&](const DistillLogRow& r, const DistillState&) { losses.push_back(r.loss); });
  distill(b, net, teacher, data, cfg, sched());
  CHECK(a.theta == b.theta);
  CHECK(a.theta_minus == b.theta_minus);
  CHECK(losses.size() == 5);
  CHECK_FALSE(a.theta == init);
}

TEST_CASE("EMA target tracks the online weights at rate mu") {
  const Denoiser net(small_net());
  const AnalyticTeacher teacher(Tensor::matrix(1, 2, {1.0, 0.0}), 1.0, sched());
  const Dataset data = single_gaussian_dataset(2, 1.0, 1.0, 3);
  Rng init_rng(9);
  const ParamStore init = net.init(init_rng);
  DistillConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 8;
  cfg.mu = 0.9;
  DistillState s = make_distill_state(init, cfg);
  distill(s, net, teacher, data, cfg, sched());
  const Tensor& w0 = init.at("out.weight");
  const Tensor& w1 = s.theta.at("out.weight");
  const Tensor& e1 = s.theta_minus.at("out.weight");
  for (std::size_t i = 0; i < w0.size(); ++i) CHECK(e1[i] == doctest::Approx(0.9 * w0[i] + 0.1 * w1[i]).epsilon(1e-14));
}
