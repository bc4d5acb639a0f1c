#pragma once

// Type-erased compact model: one of the regression back-ends or the analytic
// reference diode, with file I/O keyed on the format header.

#include <string>
#include <variant>

#include "dcm/circuit.hpp"
#include "dcm/dataset.hpp"
#include "dcm/gmls.hpp"
#include "dcm/io.hpp"
#include "dcm/mlp.hpp"
#include "dcm/spline.hpp"

namespace dcm {

class CompactModel {
 public:
  using Variant = std::variant<ShockleyParams, SplineModel, GmlsModel, MlpModel>;

  CompactModel() = default;
  template <typename T>
    requires std::is_constructible_v<Variant, T>
  CompactModel(T model) : impl_(std::move(model)) {}

  IVPoint eval(double v) const {
    return std::visit([v](const auto& m) { return m.eval(v); }, impl_);
  }

  std::string kind() const {
    switch (impl_.index()) {
      case 0: return "shockley";
      case 1: return "spline";
      case 2: return "gmls";
      default: return "mlp";
    }
  }

  const Variant& variant() const { return impl_; }

  /// Adapter for the circuit simulator's model table. Copies the model.
  DeviceFn device() const {
    return [m = *this](double v) { return m.eval(v); };
  }

 private:
  Variant impl_;
};

inline std::string serialize(const ShockleyParams& p) {
  std::string s = "dcm-shockley 1\n";
  s += "i_s " + fmt_double(p.i_s) + "\nv_t " + fmt_double(p.v_t) + "\nq " + fmt_double(p.q) + "\n";
  if (p.breakdown) {
    s += "breakdown " + fmt_double(p.breakdown->v_bd) + " " + fmt_double(p.breakdown->i_bd_scale) + " " +
         fmt_double(p.breakdown->v_bd_slope) + "\n";
  }
  return s + "end\n";
}

inline ShockleyParams parse_shockley(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "dcm-shockley 1") throw IoError("shockley model: bad header");
  ShockleyParams p;
  while (std::getline(in, line)) {
    auto f = split_ws(trim(line));
    if (f.empty()) continue;
    if (f[0] == "end") {
      p.validate();
      return p;
    }
    double a = 0, b = 0, c = 0;
    if (f[0] == "breakdown" && f.size() == 4 && parse_double(f[1], a) && parse_double(f[2], b) && parse_double(f[3], c)) {
      p.breakdown = Breakdown{a, b, c};
    } else if (f.size() == 2 && parse_double(f[1], a) && (f[0] == "i_s" || f[0] == "v_t" || f[0] == "q")) {
      (f[0] == "i_s" ? p.i_s : f[0] == "v_t" ? p.v_t : p.q) = a;
    } else {
      throw IoError("shockley model: bad line '" + line + "'");
    }
  }
  throw IoError("shockley model: missing 'end'");
}

inline std::string serialize(const CompactModel& m) {
  return std::visit([](const auto& x) { return serialize(x); }, m.variant());
}

inline CompactModel parse_model(const std::string& text) {
  const auto nl = text.find('\n');
  const auto header = trim(std::string_view(text).substr(0, nl));
  if (header == kSplineMagic) return parse_spline(text);
  if (header == kGmlsMagic) return parse_gmls(text);
  if (header == kMlpMagic) return parse_mlp(text);
  if (header == "dcm-shockley 1") return parse_shockley(text);
  throw IoError("unrecognized model file header '" + std::string(header) + "'");
}

inline CompactModel load_model(const std::string& path) { return parse_model(read_file(path)); }

inline void save_model(const CompactModel& m, const std::string& path) { write_file_atomic(path, serialize(m)); }

}  // namespace dcm
