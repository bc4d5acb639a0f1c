#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dcm/mlp.hpp"

using namespace dcm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

MlpModel single_unit(Activation act) {
  MlpArchitecture a{1, 1, act, true, TransformMode::raw};
  std::vector<Layer> layers{{1, 1, {1.0}, {0.0}}, {1, 1, {1.0}, {0.0}}};
  return MlpModel(a, layers);
}

MlpModel random_model(const MlpArchitecture& arch, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  auto layers = initialize_layers(arch, rng);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& L : layers) {
    for (auto& w : L.weights) w = arch.non_negative ? std::abs(u(rng)) : u(rng);
    for (auto& b : L.bias) b = u(rng);
  }
  return MlpModel(arch, layers);
}

const IVDataset& small_diode_data() {
  static const IVDataset ds = generate_shockley(default_synthetic_diode(), -125.0, 0.8, 600);
  return ds;
}

}  // namespace

TEST_CASE("single unit closed forms", "[mlp]") {
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    const auto t = single_unit(Activation::tanh).forward_raw(x);
    CHECK_THAT(t.y, WithinAbs(std::tanh(x), 1e-15));
    CHECK_THAT(t.dydx, WithinAbs(1.0 - std::tanh(x) * std::tanh(x), 1e-15));
    const auto s = single_unit(Activation::sigmoid).forward_raw(x);
    CHECK_THAT(s.y, WithinAbs(1.0 / (1.0 + std::exp(-x)), 1e-15));
  }
  const auto e = single_unit(Activation::elu).forward_raw(-1.0);
  CHECK_THAT(e.y, WithinAbs(std::exp(-1.0) - 1.0, 1e-15));
  CHECK(single_unit(Activation::elu).forward_raw(0.0).dydx == 1.0);
}

TEST_CASE("zero parameters give zero current", "[mlp]") {
  for (auto space : {TransformMode::raw, TransformMode::vi, TransformMode::i_only}) {
    MlpArchitecture a{2, 5, Activation::tanh, true, space};
    std::mt19937_64 rng(1);
    auto layers = initialize_layers(a, rng);
    for (auto& L : layers) {
      std::fill(L.weights.begin(), L.weights.end(), 0.0);
      std::fill(L.bias.begin(), L.bias.end(), 0.0);
    }
    const MlpModel m(a, layers);
    for (double v : {-100.0, -1.0, 0.0, 0.5}) {
      CHECK(m.eval(v).i == 0.0);
      CHECK(m.eval(v).didv == 0.0);
    }
  }
}

TEST_CASE("architecture names", "[mlp]") {
  for (const char* n : {"M1-10-T-VI", "M2-50-S-neg", "M1-50-E", "M2-100-T-VI", "M1-5-E-I-neg", "M2-25-S-V"}) {
    CHECK(MlpArchitecture::parse(n).name() == n);
  }
  const auto a = MlpArchitecture::parse("M2-10-E-VI-neg");
  CHECK(a.hidden_layers == 2);
  CHECK(a.width == 10);
  CHECK(a.activation == Activation::elu);
  CHECK(a.space == TransformMode::vi);
  CHECK_FALSE(a.non_negative);
  for (const char* bad : {"M3-10-T", "M1-0-T", "X1-10-T", "M1-10-R", "M1-10-T-neg-VI", "M1-10"}) {
    CHECK_THROWS_AS(MlpArchitecture::parse(bad), InvalidArgument);
  }
}

TEST_CASE("parameter count follows the layer sizes", "[mlp]") {
  for (int layers : {1, 2}) {
    for (int width : {1, 5, 10, 25, 50, 100}) {
      MlpArchitecture a{layers, width, Activation::sigmoid, true, TransformMode::vi};
      const auto n = a.sizes();
      std::size_t expected = 0;
      for (std::size_t i = 1; i < n.size(); ++i) expected += static_cast<std::size_t>(n[i] * n[i - 1] + n[i]);
      CHECK(random_model(a, 3).parameter_count() == expected);
    }
  }
}

TEST_CASE("network slope matches finite differences", "[mlp][property]") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (auto act : {Activation::elu, Activation::sigmoid, Activation::tanh}) {
    for (int layers : {1, 2}) {
      for (bool nonneg : {true, false}) {
        const auto m = random_model({layers, 7, act, nonneg, TransformMode::raw}, rng(), 1.5);
        for (int k = 0; k < 50; ++k) {
          const double x = u(rng);
          const double h = 1e-6;
          const double fd = (m.forward_raw(x + h).y - m.forward_raw(x - h).y) / (2 * h);
          const double d = m.forward_raw(x).dydx;
          if (act == Activation::elu) {
            // skip points where a hidden pre-activation sits on the kink
            bool near_kink = false;
            for (double s : {-1e-3, 1e-3}) near_kink |= std::abs(m.forward_raw(x + s).dydx - d) > 1e-1 * std::max(1.0, std::abs(d));
            if (near_kink) continue;
          }
          REQUIRE(std::abs(d - fd) <= 1e-6 * std::max(1.0, std::abs(d)));
        }
      }
    }
  }
}

TEST_CASE("backpropagated gradients match finite differences", "[mlp][property]") {
  std::mt19937_64 rng(37);
  for (auto act : {Activation::sigmoid, Activation::tanh, Activation::elu}) {
    MlpArchitecture arch{2, 4, act, false, TransformMode::raw};
    auto model = random_model(arch, rng(), 0.8);
    auto layers = model.layers();
    const double x = 0.37, target = 0.2;
    auto loss = [&](const std::vector<Layer>& ls) {
      const double y = MlpModel(arch, ls).forward_raw(x).y;
      return 0.5 * (y - target) * (y - target);
    };
    detail::Backprop bp(layers);
    auto grads = layers;
    for (auto& g : grads) {
      std::fill(g.weights.begin(), g.weights.end(), 0.0);
      std::fill(g.bias.begin(), g.bias.end(), 0.0);
    }
    const double y = detail::forward_cached(layers, act, x, bp);
    detail::backward_accumulate(layers, bp, y - target, grads);
    const double h = 1e-6;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t k = 0; k < layers[l].weights.size(); ++k) {
        auto up = layers, dn = layers;
        up[l].weights[k] += h;
        dn[l].weights[k] -= h;
        const double fd = (loss(up) - loss(dn)) / (2 * h);
        REQUIRE_THAT(grads[l].weights[k], WithinAbs(fd, 1e-6 * std::max(1.0, std::abs(fd))));
      }
      for (std::size_t k = 0; k < layers[l].bias.size(); ++k) {
        auto up = layers, dn = layers;
        up[l].bias[k] += h;
        dn[l].bias[k] -= h;
        const double fd = (loss(up) - loss(dn)) / (2 * h);
        REQUIRE_THAT(grads[l].bias[k], WithinAbs(fd, 1e-6 * std::max(1.0, std::abs(fd))));
      }
    }
  }
}

TEST_CASE("non-negative networks are monotone", "[mlp][property]") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (auto act : {Activation::elu, Activation::sigmoid, Activation::tanh}) {
    for (int layers : {1, 2}) {
      const auto m = random_model({layers, 10, act, true, TransformMode::vi}, rng(), 2.0);
      for (int k = 0; k < 2000; ++k) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        REQUIRE(m.forward_raw(a).y <= m.forward_raw(b).y);
      }
    }
  }
}

TEST_CASE("projection", "[mlp]") {
  auto m = random_model({2, 6, Activation::tanh, false, TransformMode::raw}, 5);
  auto once = m.layers();
  project_non_negative(once);
  auto twice = once;
  project_non_negative(twice);
  CHECK(once == twice);
  for (const auto& L : once) {
    for (double w : L.weights) CHECK(w >= 0.0);
  }
  // biases are left alone
  for (std::size_t l = 0; l < once.size(); ++l) CHECK(once[l].bias == m.layers()[l].bias);
}

TEST_CASE("one epoch moves the weights and keeps the constraint", "[mlp]") {
  const MlpArchitecture arch = MlpArchitecture::parse("M1-10-T-VI");
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto trained = train(small_diode_data(), arch, cfg);
  std::mt19937_64 rng(cfg.seed);
  const auto init = initialize_layers(arch, rng);
  CHECK(trained.layers() != init);
  CHECK(trained.min_weight() >= 0.0);
  CHECK(trained.training_log().size() == 1);
  CHECK(std::isfinite(trained.final_mse()));

  cfg.epochs = 0;
  CHECK_THROWS_AS(train(small_diode_data(), arch, cfg), InvalidArgument);
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(small_diode_data(), arch, cfg), InvalidArgument);
}

TEST_CASE("training is deterministic", "[mlp]") {
  TrainConfig cfg;
  cfg.epochs = 30;
  const auto arch = MlpArchitecture::parse("M2-10-E-VI");
  const auto a = train(small_diode_data(), arch, cfg);
  const auto b = train(small_diode_data(), arch, cfg);
  CHECK(a == b);
  CHECK(a.training_log() == b.training_log());
  CHECK(serialize(a) == serialize(b));
  cfg.seed = 43;
  CHECK_FALSE(train(small_diode_data(), arch, cfg) == a);
}

TEST_CASE("trained models keep the constraint and the exact slope", "[mlp]") {
  TrainConfig cfg;
  cfg.epochs = 60;
  const auto model = train(small_diode_data(), MlpArchitecture::parse("M1-10-T-VI"), cfg);
  CHECK(model.min_weight() >= 0.0);
  CHECK(model.training_log().front() > model.training_log().back());
  CHECK_THAT(model.final_mse(), WithinRel(training_space_mse(model, small_diode_data()), 1e-12));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-125.0, 0.8);
  int checked = 0;
  while (checked < 100) {
    const double v = u(rng);
    if (std::abs(v) < 1e-6 + 1e-5) continue;
    const double h = 1e-6 * std::max(1.0, std::abs(v));
    const double fd = (model.eval(v + h).i - model.eval(v - h).i) / (2 * h);
    const double d = model.eval(v).didv;
    REQUIRE(std::abs(d - fd) <= 1e-4 * std::abs(d));
    ++checked;
  }
  // monotone in physical units as well
  double prev = model.eval(-125.0).i;
  for (int k = 1; k <= 5000; ++k) {
    const double i = model.eval(-125.0 + 125.8 * k / 5000.0).i;
    REQUIRE(i >= prev);
    prev = i;
  }
}

TEST_CASE("text format round trip", "[mlp]") {
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto model = train(small_diode_data(), MlpArchitecture::parse("M2-5-S-I-neg"), cfg);
  const auto back = parse_mlp(serialize(model));
  CHECK(back == model);
  CHECK(back.final_mse() == model.final_mse());
  CHECK(back.eval(0.6).i == model.eval(0.6).i);
  CHECK_THROWS_AS(parse_mlp("dcm-mlp 1\narch M1-10-T-VI\n"), IoError);
}

TEST_CASE("activation names", "[mlp]") {
  for (auto a : {Activation::elu, Activation::sigmoid, Activation::tanh}) CHECK(parse_activation(to_string(a)) == a);
  CHECK_THROWS_AS(parse_activation("relu"), InvalidArgument);
}
