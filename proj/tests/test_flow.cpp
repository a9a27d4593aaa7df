// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "lmdm/flow.hpp"
#include "test_util.hpp"

using namespace lmdm;
using lmdm::testing::random_tensor;

TEST_CASE("schedules") {
  const NoiseSchedule u = NoiseSchedule::uniform(4);
  CHECK(u.level(4) == 1.f);
  CHECK(u.level(2) == 0.5f);
  CHECK(u.level(0) == 0.f);
  const NoiseSchedule f = NoiseSchedule::few_step(2);
  CHECK(f.levels() == std::vector<float>{1.f, 0.75f});
  CHECK(NoiseSchedule::few_step(8).levels() == NoiseSchedule::uniform(8).levels());
  CHECK_THROWS_AS(NoiseSchedule({0.5f, 0.5f}), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::uniform(0), ConfigError);
}

TEST_CASE("corruption endpoints and velocity target") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(rng, {3, 4}), eps = random_tensor(rng, {3, 4});
  CHECK(forward_corrupt(x, 0.f, eps).data()[5] == x.data()[5]);
  CHECK(forward_corrupt(x, 1.f, eps).data()[5] == eps.data()[5]);
  const Tensor v = marginal_velocity(x, eps);
  CHECK(v.data()[2] == eps.data()[2] - x.data()[2]);
  // x0 recovery inverts the corruption for the true velocity.
  const Tensor xk = forward_corrupt(x, 0.3f, eps);
  const Tensor x0 = x0_from_v(xk, 0.3f, v);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x0.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-5));
}

TEST_CASE("guidance combinators") {
  std::mt19937_64 rng(2);
  const Tensor c = random_tensor(rng, {2, 3}), u = random_tensor(rng, {2, 3});
  CHECK(cfg_combine(c, u, 1.f).data()[0] == c.data()[0]);
  CHECK(cfg_combine(c, u, 3.f).data()[1] == doctest::Approx(u.data()[1] + 3.f * (c.data()[1] - u.data()[1])));
  CHECK_THROWS_AS(cfg_combine(c, u, 0.5f), ContractError);
  CHECK(guided_x0(c, u, 0.f).data()[4] == u.data()[4]);
  CHECK(guided_x0(c, u, 1.f).data()[4] == doctest::Approx(c.data()[4]));
}

TEST_CASE("p4 step matches its closed form") {
  std::mt19937_64 rng(3);
  const Tensor g = random_tensor(rng, {2, 3}), u = random_tensor(rng, {2, 3}), e = random_tensor(rng, {2, 3});
  const Tensor y = p4_step(g, u, 0.4f, e);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(g.data()[i] + 0.4f * (e.data()[i] - u.data()[i])).epsilon(1e-6));
  }
  CHECK(p4_step(g, u, 0.f, e).data()[3] == g.data()[3]);
}

TEST_CASE("masked mse reads only flagged rows") {
  const Tensor p = Tensor::from({3, 1}, {1, 100, 3});
  const Tensor t = Tensor::from({3, 1}, {0, 0, 0});
  CHECK(masked_mse(p, t, std::vector<std::uint8_t>{1, 0, 1}).item() == doctest::Approx(5.0));
  CHECK_THROWS_AS(masked_mse(p, t, std::vector<std::uint8_t>{0, 0, 0}), ContractError);
}

TEST_CASE("sampler config validation") {
  SamplerConfig s;
  s.steps = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.steps = 4;
  s.p4_weight = 1.5f;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.p4_weight = 0.7f;
  s.kind = SamplerKind::P4;
  CHECK(s.passes_per_step() == 2);
  s.kind = SamplerKind::Euler;
  CHECK(s.passes_per_step() == 1);
  s.cfg_weight = 7.f;
  CHECK(s.passes_per_step() == 2);
  CHECK(sampler_kind_from_string("pingpong") == SamplerKind::PingPong);
  CHECK_THROWS_AS(sampler_kind_from_string("heun"), ConfigError);
}

TEST_CASE("euler on the exact gaussian field reproduces the data law") {
  // Data N(mu, s^2) per entry; E[eps - x | x_k] in closed form.
  const float mu = 1.5f, sd = 0.5f;
  const GuidedVelocity field = [&](const Tensor& xk, float k, bool) {
    const double a = 1.0 - k, var = a * a * sd * sd + static_cast<double>(k) * k;
    std::vector<float> v(xk.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = xk.data()[i] - a * mu;
      const double ex = mu + a * sd * sd / var * r;
      const double ee = k / var * r;
      v[i] = static_cast<float>(ee - ex);
    }
    return Tensor::from(xk.shape(), std::move(v));
  };
  std::mt19937_64 rng(4);
  Tensor x = random_tensor(rng, {20000, 1});
  SamplerConfig sc;
  sc.steps = 200;
  const NoiseSchedule sched = sc.schedule();
  for (int j = sc.steps; j >= 1; --j) x = sampler_step(sc, field, x, sched.level(j), sched.level(j - 1), Tensor());
  double m = 0.0, v = 0.0;
  for (float e : x.data()) m += e;
  m /= 20000.0;
  for (float e : x.data()) v += (e - m) * (e - m);
  v /= 20000.0;
  CHECK(m == doctest::Approx(mu).epsilon(0.02));
  CHECK(v == doctest::Approx(sd * sd).epsilon(0.05));
}
