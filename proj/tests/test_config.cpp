#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "dcm/config.hpp"
#include "dcm/model.hpp"

using namespace dcm;

namespace {

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / ("dcm_cfg_" + name)).string(); }

}  // namespace

TEST_CASE("defaults survive a round trip", "[config]") {
  const RunConfig def;
  CHECK(parse_config(serialize(def)) == def);
  CHECK(def.train_config().epochs == 2000);
  CHECK(def.train_config().seed == 42);
  CHECK(def.generator.shockley().breakdown.has_value());
}

TEST_CASE("every key round trips with changed values", "[config][property]") {
  RunConfig c;
  c.seed = 7;
  c.transform.v_plus = 0.75;
  c.generator.breakdown = false;
  c.generator.n = 1234;
  c.backend = "gmls";
  c.gmls.order = 3;
  c.gmls.eps0 = 1.0 / 3.0;
  c.mlp_arch = "M2-25-S-neg";
  c.mlp_learning_rate = 1e-4;
  c.bench.phase = 0.1;
  c.solver.max_newton = 17;
  c.output = "out dir/result.csv";
  const auto text = serialize(c);
  const auto back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize(back) == text);
  CHECK_FALSE(back == RunConfig{});
}

TEST_CASE("parsing rules", "[config]") {
  const auto c = parse_config(
      "# header comment\n"
      "\n"
      "seed = 9   # trailing comment\n"
      "  mlp.epochs=15\n"
      "generator.breakdown = 0\n");
  CHECK(c.seed == 9);
  CHECK(c.mlp_epochs == 15);
  CHECK_FALSE(c.generator.breakdown);
  CHECK_FALSE(c.generator.shockley().breakdown.has_value());

  RunConfig base;
  base.mlp_epochs = 3;
  CHECK(parse_config("seed = 1\n", base).mlp_epochs == 3);

  CHECK_THROWS_WITH(parse_config("nope = 1\n"), Catch::Matchers::ContainsSubstring("unknown key"));
  CHECK_THROWS_WITH(parse_config("seed = -1\n"), Catch::Matchers::ContainsSubstring("bad value"));
  CHECK_THROWS_AS(parse_config("mlp.epochs = 1.5\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("generator.breakdown = maybe\n"), InvalidArgument);
  CHECK_THROWS_WITH(parse_config("seed 3\n"), Catch::Matchers::ContainsSubstring("line 1"));
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("config files", "[config]") {
  const auto path = temp_path("run.cfg");
  std::ofstream(path) << "bench.amplitude = 3\nsolver.reltol = 1e-4\n";
  const auto c = load_config(path);
  CHECK(c.bench.amplitude == 3.0);
  CHECK(c.solver.reltol == 1e-4);
}

TEST_CASE("model files round trip for every back-end", "[config][model]") {
  const auto ds = generate_shockley(default_synthetic_diode(), -3.0, 0.8, 150);
  TrainConfig cfg;
  cfg.epochs = 2;
  const std::vector<CompactModel> models{default_synthetic_diode(), ShockleyParams{}, fit_spline(ds), fit_gmls(ds, 2),
                                         train(ds, MlpArchitecture::parse("M1-10-T-VI"), cfg)};
  for (const auto& m : models) {
    INFO(m.kind());
    const auto path = temp_path(m.kind() + ".model");
    save_model(m, path);
    const auto back = load_model(path);
    CHECK(back.kind() == m.kind());
    CHECK(serialize(back) == serialize(m));
    for (double v : {-2.5, -0.1, 0.0, 0.4, 0.79}) {
      CHECK(back.eval(v).i == m.eval(v).i);
      CHECK(back.eval(v).didv == m.eval(v).didv);
    }
    CHECK(back.device()(0.5).i == m.eval(0.5).i);
  }
  CHECK_THROWS_AS(parse_model("dcm-unknown 1\n"), IoError);
  CHECK_THROWS_AS(parse_model("dcm-shockley 1\ni_s 1e-9\n"), IoError);
  CHECK_THROWS_AS(parse_model("dcm-shockley 1\nfoo 1\nend\n"), IoError);
  CHECK_THROWS_AS(load_model("/nonexistent/x.model"), IoError);
}
