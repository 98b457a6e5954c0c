#include <doctest.h>

#include "rfgen/flow.hpp"
#include "rfgen/trainer.hpp"
#include "test_util.hpp"

using namespace rfgen;
using rfgen::test::random_mat;

namespace {

struct GradProblem {
  nn::Mat<double> x1, x0, spatial;
};

GradProblem make_problem(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto px = cfg.image_width * cfg.image_height;
  GradProblem g{random_mat(3, px, rng, 0.5).cwiseAbs(), random_mat(3, px, rng), random_mat(cfg.spatial_channels(), px, rng).cwiseAbs()};
  return g;
}

double net_gradient_error(const ModelConfig& cfg, const TreatmentContext& ctx, double t) {
  const VelocityNet net(cfg);
  const auto p = net.init<double>(3, InitMode::Random);
  const auto prob = make_problem(cfg, 5);
  const auto r = rf_loss_at<double>(net, p, prob.x1, prob.x0, t, prob.spatial, ctx);
  return test::max_gradient_error(p, r.grad, [&](const ParamStore<double>& q) {
    return rf_loss_at<double>(net, q, prob.x1, prob.x0, t, prob.spatial, ctx).loss;
  });
}

}  // namespace

TEST_CASE("tiny configuration stays within the gradient-check budget") {
  const VelocityNet net(tiny_config());
  CHECK(net.layout<double>().total_weights() <= 500);
}

TEST_CASE("full network gradient matches central differences for every conditioning variant") {
  for (bool dose : {true, false}) {
    for (bool chemo : {true, false}) {
      CAPTURE(dose);
      CAPTURE(chemo);
      ModelConfig cfg = tiny_config();
      cfg.use_dose = dose;
      cfg.use_chemo = chemo;
      CHECK(net_gradient_error(cfg, {200, Chemo::None, 1.1}, 0.37) < 1e-4);
    }
  }
}

TEST_CASE("conditioning flags change the input layout") {
  ModelConfig cfg;
  CHECK(cfg.input_channels() == 7);
  cfg.use_dose = false;
  CHECK(cfg.input_channels() == 6);
  const VelocityNet with(ModelConfig{}), without(cfg);
  CHECK(with.layout<float>().contains("context.chemo.weight"));
  CHECK(with.layout<float>()[with.layout<float>().index("in_conv.weight")].cols() == 7 * 9);
  cfg.use_chemo = false;
  CHECK_FALSE(VelocityNet(cfg).layout<float>().contains("context.chemo.weight"));
}

TEST_CASE("zero-output network gives the closed-form loss") {
  const ModelConfig cfg = tiny_config();
  const VelocityNet net(cfg);
  const auto prob = make_problem(cfg, 9);
  const double expected = (prob.x1 - prob.x0).cwiseAbs().mean();
  for (auto mode : {InitMode::Zero, InitMode::Training}) {
    const auto p = net.init<double>(1, mode);
    const auto r = rf_loss_at<double>(net, p, prob.x1, prob.x0, 0.5, prob.spatial, reference_context(100));
    CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("loss and gradient vanish when the prediction is exact") {
  const ModelConfig cfg = tiny_config();
  const VelocityNet net(cfg);
  const auto p = net.init<double>(1, InitMode::Zero);
  auto prob = make_problem(cfg, 11);
  prob.x0 = prob.x1;  // target velocity 0 == zero network output; sign(0) = 0
  const auto r = rf_loss_at<double>(net, p, prob.x1, prob.x0, 0.2, prob.spatial, reference_context(10));
  CHECK(r.loss == 0.0);
  CHECK(r.grad.squared_norm() == 0.0);
}

TEST_CASE("flow interpolation endpoints") {
  std::mt19937_64 rng(2);
  const auto x0 = random_mat(3, 4, rng), x1 = random_mat(3, 4, rng);
  CHECK(flow_interpolate(x0, x1, 0.0) == x0);
  CHECK(flow_interpolate(x0, x1, 1.0) == x1);
  CHECK((flow_interpolate(x0, x1, 0.25) - (0.75 * x0 + 0.25 * x1)).norm() < 1e-15);
}

TEST_CASE("sinusoidal time features distinguish contexts") {
  const VelocityNet net(tiny_config());
  const auto p = net.init<double>(4, InitMode::Random);
  const auto a = net.context_tokens(p, {100, Chemo::None, 1.0});
  const auto b = net.context_tokens(p, {100, Chemo::AdjuvantTMZ, 1.0});
  const auto c = net.context_tokens(p, {400, Chemo::None, 1.0});
  CHECK(a.cols() == 2);
  CHECK(a.col(0) == b.col(0));
  CHECK(a.col(1) != b.col(1));
  CHECK(a.col(0) != c.col(0));
}

TEST_CASE("conditioning bundle scales and clips the dose") {
  auto cohort = generate_cohort(2, 16, 3);
  auto& rec = cohort.front();
  ModelConfig cfg;
  cfg.image_width = cfg.image_height = 16;
  const auto cond = build_conditioning(rec, {100, Chemo::None, 1.3}, cfg);
  REQUIRE(cond.spatial.channels() == 4);
  CHECK(extract_channel(cond.spatial, 0) == extract_channel(rec.baseline, 0));
  const auto dose = extract_channel(cond.spatial, 3);
  for (Eigen::Index i = 0; i < dose.data.size(); ++i) {
    CHECK(dose.data(0, i) == doctest::Approx(std::min(rec.dose.data(0, i) * 1.3f, kMaxScaledDose)));
  }
  cfg.use_dose = false;
  CHECK(build_conditioning(rec, {100, Chemo::None, 1.3}, cfg).spatial.channels() == 3);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ModelCheckpoint ck = initial_checkpoint(tiny_config(), 17, InitMode::Random);
  ck.meta.epoch = 3;
  ck.meta.train_loss = {0.5, 0.25};
  ck.meta.val_loss = {0.4, 0.3};
  ck.meta.extra = {{"note", "x"}};
  const std::string bytes = encode_checkpoint(ck);
  const ModelCheckpoint back = decode_checkpoint(bytes);
  CHECK(back.config == ck.config);
  CHECK(back.weights == ck.weights);
  CHECK(back.meta.epoch == 3);
  CHECK(back.meta.train_loss == ck.meta.train_loss);
  CHECK(encode_checkpoint(back) == bytes);

  const auto dir = test::temp_dir("ckpt");
  save_checkpoint(dir / "a.bin", ck);
  CHECK(encode_checkpoint(load_checkpoint(dir / "a.bin")) == bytes);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), IoError);
  CHECK_THROWS_AS(decode_checkpoint("nope"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST_CASE("velocity evaluation is deterministic and shape checked") {
  const auto ck = initial_checkpoint(tiny_config(), 2, InitMode::Random);
  const FlowModel model(ck);
  std::mt19937_64 rng(1);
  const ImageF x = test::random_image(8, 8, 3, rng);
  const ConditioningBundle cond{test::random_image(8, 8, 4, rng), reference_context(50)};
  CHECK(model.velocity(x, 0.3, cond) == model.velocity(x, 0.3, cond));
  CHECK(velocity_forward(ck, x, 0.3, cond) == model.velocity(x, 0.3, cond));
  CHECK_THROWS_AS(model.velocity(test::random_image(8, 8, 2, rng), 0.3, cond), ArgumentError);
}
