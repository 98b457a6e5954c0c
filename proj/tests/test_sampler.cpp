#include <doctest.h>

#include <cmath>
#include <limits>

#include "rfgen/sampler.hpp"
#include "test_util.hpp"

using namespace rfgen;

namespace {

ImageF constant(float v) {
  ImageF img(4, 4, 3);
  img.data.setConstant(v);
  return img;
}

}  // namespace

TEST_CASE("constant velocity is integrated exactly") {
  for (int n : {1, 3, 8}) {
    const ImageF x = euler_integrate([](const ImageF&, double) { return constant(0.5f); }, constant(0.1f), n);
    CHECK(x.data.maxCoeff() == doctest::Approx(0.6f));
    CHECK(x.data.minCoeff() == doctest::Approx(0.6f));
  }
}

TEST_CASE("linear velocity matches the closed-form Euler product") {
  // dx/dt = a x  ->  Euler gives x0 (1 + a/n)^n.
  const double a = 0.8;
  for (int n : {1, 2, 4, 16}) {
    const ImageF x = euler_integrate(
        [a](const ImageF& s, double) {
          ImageF v = s;
          v.data *= static_cast<float>(a);
          return v;
        },
        constant(1.0f), n);
    CHECK(x.data(0, 0) == doctest::Approx(std::pow(1 + a / n, n)).epsilon(1e-5));
  }
}

TEST_CASE("Euler error on a linear field shrinks first order") {
  const double a = 0.8, exact = std::exp(a);
  auto err = [&](int n) { return std::abs(std::pow(1 + a / n, n) - exact); };
  CHECK(err(4) / err(16) == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("straight-line flow toward a target is exact in one step") {
  // The ideal rectified velocity (target - x) / (1 - t) is constant along paths.
  const ImageF target = constant(0.7f);
  auto v = [&](const ImageF& x, double t) {
    ImageF out = target;
    out.data = (target.data - x.data) / static_cast<float>(1 - t);
    return out;
  };
  for (int n : {1, 4}) {
    const ImageF x = euler_integrate(v, constant(-1.3f), n);
    CHECK((x.data.array() - 0.7f).abs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("integration rejects bad step counts and non-finite states") {
  auto zero = [](const ImageF& x, double) { return ImageF(x.width, x.height, x.channels()); };
  CHECK_THROWS_AS(euler_integrate(zero, constant(0.f), 0), ArgumentError);
  auto bad = [](const ImageF& x, double) {
    ImageF v = x;
    v.data.setConstant(std::numeric_limits<float>::quiet_NaN());
    return v;
  };
  CHECK_THROWS_AS(euler_integrate(bad, constant(0.f), 2), SamplingError);
}

TEST_CASE("model sampling is seeded, clipped once, and shares noise") {
  const FlowModel model(initial_checkpoint(tiny_config(), 4, InitMode::Random));
  std::mt19937_64 rng(3);
  const ConditioningBundle cond{test::random_image(8, 8, 4, rng), reference_context(90)};
  const ImageF a = euler_sample(model, cond, {4, 11, {}});
  CHECK(a == euler_sample(model, cond, {4, 11, {}}));
  CHECK_FALSE(a == euler_sample(model, cond, {4, 12, {}}));
  CHECK(a.data.minCoeff() >= 0.0f);
  CHECK(a.data.maxCoeff() <= 1.0f);
  CHECK(a == euler_sample(model, cond, {4, 999, sampling_noise(model.config(), 11)}));

  // Clipping happens after the last step only.
  const ImageF raw = euler_integrate([&](const ImageF& x, double t) { return model.velocity(x, t, cond); },
                                     sampling_noise(model.config(), 11), 4);
  ImageF clipped = raw;
  clipped.data = raw.data.cwiseMax(0.0f).cwiseMin(1.0f);
  CHECK(clipped == a);

  CHECK_THROWS_AS(euler_sample(model, cond, {0, 1, {}}), ArgumentError);
  const ConditioningBundle wrong{test::random_image(8, 8, 3, rng), reference_context(90)};
  CHECK_THROWS_AS(euler_sample(model, wrong, {4, 1, {}}), ArgumentError);
}

TEST_CASE("step sweep references the largest step count") {
  const FlowModel model(initial_checkpoint(tiny_config(), 4, InitMode::Random));
  std::mt19937_64 rng(3);
  const ConditioningBundle cond{test::random_image(8, 8, 4, rng), reference_context(90)};
  const auto sweep = step_sweep(model, cond, {1, 4, 16}, 5);
  REQUIRE(sweep.images.size() == 3);
  CHECK(sweep.mse_to_reference[2] == 0.0);
  CHECK(sweep.images[1] == euler_sample(model, cond, {4, 5, {}}));
  CHECK_THROWS_AS(step_sweep(model, cond, {}, 5), ArgumentError);
}
