#include <doctest.h>

#include <cmath>

#include "slad/optimizer.hpp"

using namespace slad;

TEST_CASE("first AdamW step on hand values") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  cfg.clip_norm = 0.0;
  AdamW opt(cfg);
  ParamStore p({{"w", Tensor::matrix(1, 2, {1.0, -2.0})}});
  const double norm = opt.step(p, {{"w", Tensor::matrix(1, 2, {0.5, -3.0})}});
  CHECK(norm == doctest::Approx(std::sqrt(0.25 + 9.0)).epsilon(1e-15));
  // Bias-corrected moments equal g and g^2 after one step.
  CHECK(p.at("w")[0] == doctest::Approx(1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0)).epsilon(1e-15));
  CHECK(p.at("w")[1] == doctest::Approx(-2.0 - 0.1 * (-3.0 / (3.0 + 1e-8) + 0.01 * -2.0)).epsilon(1e-15));
  CHECK(opt.steps() == 1);
}

TEST_CASE("AdamW minimizes a quadratic bowl") {
  AdamWConfig cfg;
  cfg.lr = 0.05;
  AdamW opt(cfg);
  ParamStore p({{"w", Tensor::matrix(1, 3, {3.0, -4.0, 1.5})}});
  const Tensor target = Tensor::matrix(1, 3, {0.5, 0.25, -1.0});
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    Var w = tape.parameter("m/w", p.at("w"));
    Var loss = tape.sum(tape.square(w - tape.constant(target)));
    opt.step(p, grads_for(tape.backward(loss), "m"));
  }
  CHECK(max_abs_diff(p.at("w"), target) < 1e-3);
}

TEST_CASE("global-norm clipping rescales and reports the raw norm") {
  GradMap g{{"a", Tensor::matrix(1, 2, {6.0, 8.0})}, {"b", Tensor::matrix(1, 1, {0.0})}};
  CHECK(clip_by_global_norm(g, 5.0) == 10.0);
  CHECK(g.at("a") == Tensor::matrix(1, 2, {3.0, 4.0}));
  GradMap small{{"a", Tensor::matrix(1, 2, {0.3, 0.4})}};
  CHECK(clip_by_global_norm(small, 5.0) == doctest::Approx(0.5));
  CHECK(small.at("a") == Tensor::matrix(1, 2, {0.3, 0.4}));
}

TEST_CASE("missing or non-finite gradients are rejected") {
  AdamW opt;
  ParamStore p({{"a", Tensor::matrix(1, 1, {1.0})}, {"b", Tensor::matrix(1, 1, {1.0})}});
  CHECK_THROWS(opt.step(p, {{"a", Tensor::matrix(1, 1, {1.0})}}));
  CHECK_THROWS_AS(opt.step(p, {{"a", Tensor::matrix(1, 1, {NAN})}, {"b", Tensor::matrix(1, 1, {1.0})}}),
                  NonFiniteError);
}

TEST_CASE("restored optimizer continues identically") {
  ParamStore p({{"w", Tensor::matrix(1, 2, {1.0, 2.0})}});
  const GradMap g1{{"w", Tensor::matrix(1, 2, {0.3, -0.1})}};
  const GradMap g2{{"w", Tensor::matrix(1, 2, {-0.2, 0.5})}};
  AdamW a;
  ParamStore pa = p;
  a.step(pa, g1);
  AdamW b;
  b.restore(a.first_moment(), a.second_moment(), a.steps());
  ParamStore pb = pa;
  a.step(pa, g2);
  b.step(pb, g2);
  CHECK(pa == pb);
}

TEST_CASE("grads_for strips one prefix and drops others") {
  const GradMap g{{"theta/w", Tensor::matrix(1, 1, {1.0})}, {"ema/w", Tensor::matrix(1, 1, {2.0})}};
  const GradMap t = grads_for(g, "theta");
  CHECK(t.size() == 1);
  CHECK(t.at("w").item() == 1.0);
}
