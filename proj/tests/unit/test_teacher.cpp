#include <doctest.h>

#include <cmath>

#include "slad/teacher.hpp"

using namespace slad;

namespace {

const NoiseSchedule& sched() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

DenoiserConfig net_config(bool precondition) {
  DenoiserConfig c;
  c.width = 64;
  c.num_labels = 8;
  c.precondition = precondition;
  return c;
}

// Average loss over fixed held-out batches and fixed noise draws.
double held_out_loss(const Denoiser& net, const ParamStore& p, const Dataset& data) {
  double total = 0.0;
  for (int i = 0; i < 8; ++i) {
    Rng rng = Rng(1234).split(static_cast<std::uint64_t>(i));
    Tape tape;
    total += teacher_loss(tape, net, p, data.sample((1ULL << 45) + 512ULL * i, 512), sched(), 0.0, rng).value().item();
  }
  return total / 8.0;
}

}  // namespace

TEST_CASE("teacher loss drops by at least 10x on the 8-mode mixture") {
  const Dataset data(DatasetSpec{});
  const Denoiser net(net_config(false));
  Rng init_rng(5);
  const ParamStore init = net.init(init_rng);
  TeacherConfig cfg;
  cfg.steps = 1500;
  cfg.seed = 5;
  AdamW opt;
  const ParamStore trained = train_teacher(net, data, sched(), cfg, init, opt);
  const double before = held_out_loss(net, init, data);
  const double after = held_out_loss(net, trained, data);
  MESSAGE("held-out loss " << before << " -> " << after);
  CHECK(after * 10.0 <= before);
}

TEST_CASE("preconditioned teacher also improves on its Gaussian starting point") {
  const Dataset data(DatasetSpec{});
  const Denoiser net(net_config(true));
  Rng init_rng(6);
  const ParamStore init = net.init(init_rng);
  TeacherConfig cfg;
  cfg.steps = 1500;
  cfg.seed = 6;
  AdamW opt;
  const ParamStore trained = train_teacher(net, data, sched(), cfg, init, opt);
  const double before = held_out_loss(net, init, data);
  const double after = held_out_loss(net, trained, data);
  MESSAGE("held-out loss " << before << " -> " << after);
  CHECK(after < 0.75 * before);
}

TEST_CASE("split training with carried optimizer state equals one run") {
  const Dataset data(DatasetSpec{});
  DenoiserConfig c = net_config(true);
  c.width = 16;
  const Denoiser net(c);
  Rng init_rng(7);
  const ParamStore init = net.init(init_rng);
  TeacherConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 32;
  cfg.seed = 7;

  AdamW whole_opt;
  const ParamStore whole = train_teacher(net, data, sched(), cfg, init, whole_opt);

  TeacherConfig first = cfg;
  first.steps = 12;
  AdamW opt;
  ParamStore half = train_teacher(net, data, sched(), first, init, opt);
  AdamW resumed;
  resumed.restore(opt.first_moment(), opt.second_moment(), opt.steps());
  const ParamStore rest = train_teacher(net, data, sched(), cfg, half, resumed, {}, 12);
  CHECK(rest == whole);
}

TEST_CASE("observer sees every step and a diverging run raises TrainingError") {
  const Dataset data(DatasetSpec{});
  DenoiserConfig c = net_config(true);
  c.width = 8;
  const Denoiser net(c);
  Rng init_rng(8);
  TeacherConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 8;
  AdamW opt;
  std::vector<long> steps;
  train_teacher(net, data, sched(), cfg, net.init(init_rng), opt, [&](const TrainLogRow& r) { steps.push_back(r.step); });
  CHECK(steps == std::vector<long>{0, 1, 2});

  ParamStore broken = net.init(init_rng);
  broken.at("out.bias")[0] = 1e300;
  AdamW opt2;
  CHECK_THROWS_AS(train_teacher(net, data, sched(), cfg, broken, opt2), TrainingError);

  cfg.null_label_prob = 1.5;
  CHECK_THROWS(cfg.validate());
}
