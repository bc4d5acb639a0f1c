#pragma once

// Run configuration: flat `key = value` text with section prefixes
// (transform., generator., fit., gmls., mlp., bench., solver., output.).
// Unknown keys are errors; '#' starts a comment.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <variant>

#include "dcm/circuit.hpp"
#include "dcm/dataset.hpp"
#include "dcm/error.hpp"
#include "dcm/gmls.hpp"
#include "dcm/io.hpp"
#include "dcm/mlp.hpp"
#include "dcm/transform.hpp"

namespace dcm {

struct GeneratorConfig {
  double i_s = 2.52e-9;
  double v_t = 0.02585;
  double q = 1.752;
  bool breakdown = true;
  double v_bd = -100.0;
  double i_bd_scale = 1e-9;
  double v_bd_slope = 3.5;
  double v_min = -125.0;
  double v_max = 0.8;
  long long n = 9682;

  ShockleyParams shockley() const {
    ShockleyParams p{i_s, v_t, q, std::nullopt};
    if (breakdown) p.breakdown = Breakdown{v_bd, i_bd_scale, v_bd_slope};
    p.validate();
    return p;
  }

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 42;
  TransformParams::Constants transform;
  GeneratorConfig generator;
  std::string backend = "spline";
  GmlsParams gmls;
  std::string mlp_arch = "M1-10-T-VI";
  int mlp_epochs = 2000;
  double mlp_learning_rate = 3e-3;
  int mlp_batch_size = 64;
  BenchParams bench;
  SolveOptions solver;
  std::string output;

  TrainConfig train_config() const { return {mlp_epochs, mlp_learning_rate, mlp_batch_size, seed}; }

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.seed == b.seed && a.transform == b.transform && a.generator == b.generator && a.backend == b.backend &&
           a.gmls == b.gmls && a.mlp_arch == b.mlp_arch && a.mlp_epochs == b.mlp_epochs &&
           a.mlp_learning_rate == b.mlp_learning_rate && a.mlp_batch_size == b.mlp_batch_size &&
           a.bench.amplitude == b.bench.amplitude && a.bench.freq == b.bench.freq && a.bench.phase == b.bench.phase &&
           a.bench.load == b.bench.load && a.bench.periods == b.bench.periods &&
           a.bench.steps_per_period == b.bench.steps_per_period && a.solver.reltol == b.solver.reltol &&
           a.solver.abstol_v == b.solver.abstol_v && a.solver.abstol_i == b.solver.abstol_i &&
           a.solver.max_newton == b.solver.max_newton && a.solver.junction_limit == b.solver.junction_limit &&
           a.solver.source_steps == b.solver.source_steps && a.output == b.output;
  }
};

namespace detail {

using FieldRef = std::variant<double*, int*, long long*, std::uint64_t*, bool*, std::string*>;

// Fixed key order; serialization follows it.
template <typename F>
void for_each_field(RunConfig& c, F&& f) {
  f("seed", FieldRef{&c.seed});
  f("transform.v_plus", FieldRef{&c.transform.v_plus});
  f("transform.v_minus", FieldRef{&c.transform.v_minus});
  f("transform.p_plus_min", FieldRef{&c.transform.p_plus_min});
  f("transform.p_plus_max", FieldRef{&c.transform.p_plus_max});
  f("transform.p_minus_min", FieldRef{&c.transform.p_minus_min});
  f("transform.p_minus_max", FieldRef{&c.transform.p_minus_max});
  f("generator.i_s", FieldRef{&c.generator.i_s});
  f("generator.v_t", FieldRef{&c.generator.v_t});
  f("generator.q", FieldRef{&c.generator.q});
  f("generator.breakdown", FieldRef{&c.generator.breakdown});
  f("generator.v_bd", FieldRef{&c.generator.v_bd});
  f("generator.i_bd_scale", FieldRef{&c.generator.i_bd_scale});
  f("generator.v_bd_slope", FieldRef{&c.generator.v_bd_slope});
  f("generator.v_min", FieldRef{&c.generator.v_min});
  f("generator.v_max", FieldRef{&c.generator.v_max});
  f("generator.n", FieldRef{&c.generator.n});
  f("fit.backend", FieldRef{&c.backend});
  f("gmls.order", FieldRef{&c.gmls.order});
  f("gmls.kernel_power", FieldRef{&c.gmls.kernel_power});
  f("gmls.growth", FieldRef{&c.gmls.growth});
  f("gmls.eps0", FieldRef{&c.gmls.eps0});
  f("gmls.max_steps", FieldRef{&c.gmls.max_steps});
  f("mlp.arch", FieldRef{&c.mlp_arch});
  f("mlp.epochs", FieldRef{&c.mlp_epochs});
  f("mlp.learning_rate", FieldRef{&c.mlp_learning_rate});
  f("mlp.batch_size", FieldRef{&c.mlp_batch_size});
  f("bench.amplitude", FieldRef{&c.bench.amplitude});
  f("bench.freq", FieldRef{&c.bench.freq});
  f("bench.phase", FieldRef{&c.bench.phase});
  f("bench.load", FieldRef{&c.bench.load});
  f("bench.periods", FieldRef{&c.bench.periods});
  f("bench.steps_per_period", FieldRef{&c.bench.steps_per_period});
  f("solver.reltol", FieldRef{&c.solver.reltol});
  f("solver.abstol_v", FieldRef{&c.solver.abstol_v});
  f("solver.abstol_i", FieldRef{&c.solver.abstol_i});
  f("solver.max_newton", FieldRef{&c.solver.max_newton});
  f("solver.junction_limit", FieldRef{&c.solver.junction_limit});
  f("solver.source_steps", FieldRef{&c.solver.source_steps});
  f("output.path", FieldRef{&c.output});
}

inline std::string field_to_string(const FieldRef& ref) {
  return std::visit([](auto* p) -> std::string {
    using T = std::remove_pointer_t<decltype(p)>;
    if constexpr (std::is_same_v<T, double>) return fmt_double(*p);
    else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
    else if constexpr (std::is_same_v<T, std::string>) return *p;
    else return std::to_string(*p);
  }, ref);
}

inline bool field_from_string(const FieldRef& ref, std::string_view text) {
  return std::visit([text](auto* p) -> bool {
    using T = std::remove_pointer_t<decltype(p)>;
    if constexpr (std::is_same_v<T, double>) {
      return parse_double(text, *p);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") { *p = true; return true; }
      if (text == "false" || text == "0") { *p = false; return true; }
      return false;
    } else if constexpr (std::is_same_v<T, std::string>) {
      *p = std::string(text);
      return true;
    } else {
      long long v = 0;
      if (!parse_int(text, v)) return false;
      if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (v < 0) return false;
      }
      *p = static_cast<T>(v);
      return true;
    }
  }, ref);
}

}  // namespace detail

/// Sets one key; throws InvalidArgument for unknown keys or bad values.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  bool found = false;
  detail::for_each_field(cfg, [&](std::string_view k, detail::FieldRef ref) {
    if (k != key) return;
    found = true;
    if (!detail::field_from_string(ref, trim(value))) {
      throw InvalidArgument("config: bad value '" + std::string(value) + "' for " + std::string(key));
    }
  });
  if (!found) throw InvalidArgument("config: unknown key '" + std::string(key) + "'");
}

inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = trim(body.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  return base;
}

inline std::string serialize(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::ostringstream os;
  detail::for_each_field(copy, [&](std::string_view k, detail::FieldRef ref) { os << k << " = " << detail::field_to_string(ref) << '\n'; });
  return os.str();
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

}  // namespace dcm
