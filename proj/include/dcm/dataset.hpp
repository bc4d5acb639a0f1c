#pragma once

// I-V datasets: canonical sample tables, CSV I/O and the analytic
// Shockley generator used as a synthetic measurement source.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dcm/error.hpp"
#include "dcm/io.hpp"

namespace dcm {

struct IVSample {
  double v = 0.0;  // volts
  double i = 0.0;  // amperes
};

// Value and slope of a compact model at one bias point.
struct IVPoint {
  double i = 0.0;
  double didv = 0.0;
};

/// Sorted, duplicate-free table of (v, i) samples with at least kMinSize rows.
class IVDataset {
 public:
  static constexpr std::size_t kMinSize = 4;

  struct Canonical;

  IVDataset() = default;

  /// Sorts by voltage and averages currents of repeated voltages.
  static Canonical canonicalize(std::vector<IVSample> samples);

  /// Wraps samples that must already be strictly increasing in v.
  static IVDataset from_sorted(std::vector<IVSample> samples) {
    validate(samples);
    for (std::size_t k = 1; k < samples.size(); ++k) {
      if (!(samples[k].v > samples[k - 1].v)) {
        throw InvalidArgument("dataset voltages must be strictly increasing");
      }
    }
    IVDataset ds;
    ds.samples_ = std::move(samples);
    return ds;
  }

  std::span<const IVSample> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  const IVSample& operator[](std::size_t k) const { return samples_[k]; }
  const IVSample& front() const { return samples_.front(); }
  const IVSample& back() const { return samples_.back(); }

  std::vector<double> voltages() const {
    std::vector<double> out(samples_.size());
    std::transform(samples_.begin(), samples_.end(), out.begin(), [](const IVSample& s) { return s.v; });
    return out;
  }
  std::vector<double> currents() const {
    std::vector<double> out(samples_.size());
    std::transform(samples_.begin(), samples_.end(), out.begin(), [](const IVSample& s) { return s.i; });
    return out;
  }

  double v_min() const { return samples_.front().v; }
  double v_max() const { return samples_.back().v; }
  double i_min() const {
    return std::min_element(samples_.begin(), samples_.end(), [](auto& a, auto& b) { return a.i < b.i; })->i;
  }
  double i_max() const {
    return std::max_element(samples_.begin(), samples_.end(), [](auto& a, auto& b) { return a.i < b.i; })->i;
  }

  /// Largest gap between consecutive voltages.
  double fill_distance() const {
    double h = 0.0;
    for (std::size_t k = 1; k < samples_.size(); ++k) h = std::max(h, samples_[k].v - samples_[k - 1].v);
    return h;
  }

  friend bool operator==(const IVDataset& a, const IVDataset& b) {
    return a.samples_.size() == b.samples_.size() &&
           std::equal(a.samples_.begin(), a.samples_.end(), b.samples_.begin(),
                      [](const IVSample& x, const IVSample& y) { return x.v == y.v && x.i == y.i; });
  }

 private:
  static void validate(const std::vector<IVSample>& samples) {
    for (const auto& s : samples) {
      if (!std::isfinite(s.v) || !std::isfinite(s.i)) throw InvalidArgument("dataset contains non-finite values");
    }
    if (samples.size() < kMinSize) throw InvalidArgument("dataset too small (need at least 4 distinct voltages)");
  }

  std::vector<IVSample> samples_;
};

struct IVDataset::Canonical {
  IVDataset data;
  std::size_t duplicates_collapsed = 0;
};

inline IVDataset::Canonical IVDataset::canonicalize(std::vector<IVSample> samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.v) || !std::isfinite(s.i)) throw InvalidArgument("dataset contains non-finite values");
  }
  std::stable_sort(samples.begin(), samples.end(), [](const IVSample& a, const IVSample& b) { return a.v < b.v; });
  std::vector<IVSample> merged;
  merged.reserve(samples.size());
  std::size_t collapsed = 0;
  for (std::size_t k = 0; k < samples.size();) {
    std::size_t end = k + 1;
    double sum = samples[k].i;
    while (end < samples.size() && samples[end].v == samples[k].v) sum += samples[end++].i;
    collapsed += end - k - 1;
    merged.push_back({samples[k].v, sum / static_cast<double>(end - k)});
    k = end;
  }
  return {from_sorted(std::move(merged)), collapsed};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Reads a two-column `v_volts,i_amps` CSV with a header row. Lines starting
/// with '#' are comments.
inline IVDataset::Canonical load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::vector<IVSample> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    auto fields = split_csv(body);
    double v = 0.0, i = 0.0;
    if (fields.size() != 2 || !parse_double(fields[0], v) || !parse_double(fields[1], i)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected two numeric columns");
    }
    if (!std::isfinite(v) || !std::isfinite(i)) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": non-finite value");
    }
    rows.push_back({v, i});
  }
  if (!header_seen) throw IoError(path + ": missing header row");
  return IVDataset::canonicalize(std::move(rows));
}

inline std::string to_csv(const IVDataset& ds, const std::string& comment = {}) {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "v_volts,i_amps\n";
  for (const auto& s : ds.samples()) os << fmt_double(s.v) << ',' << fmt_double(s.i) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Shockley generator
// ---------------------------------------------------------------------------

struct Breakdown {
  double v_bd = -100.0;       // knee voltage (negative)
  double i_bd_scale = 1e-9;   // amperes
  double v_bd_slope = 3.5;    // volts per e-fold
};

/// Ideal diode equation with an optional soft avalanche knee. Defaults are
/// 1N4148-like small-signal diode values.
struct ShockleyParams {
  double i_s = 2.52e-9;
  double v_t = 0.02585;
  double q = 1.752;
  std::optional<Breakdown> breakdown;

  void validate() const {
    if (!(i_s > 0.0) || !std::isfinite(i_s)) throw InvalidArgument("shockley: i_s must be > 0");
    if (!(v_t > 0.0) || !std::isfinite(v_t)) throw InvalidArgument("shockley: v_t must be > 0");
    if (!(q >= 1.0) || !std::isfinite(q)) throw InvalidArgument("shockley: q must be >= 1");
    if (breakdown) {
      if (!(breakdown->v_bd < 0.0)) throw InvalidArgument("shockley: v_bd must be < 0");
      if (!(breakdown->i_bd_scale > 0.0)) throw InvalidArgument("shockley: i_bd_scale must be > 0");
      if (!(breakdown->v_bd_slope > 0.0)) throw InvalidArgument("shockley: v_bd_slope must be > 0");
    }
  }

  /// Current and conductance at bias v. The breakdown term is shifted so
  /// that i(0) = 0 exactly.
  IVPoint eval(double v) const {
    const double nvt = q * v_t;
    const double e = std::exp(v / nvt);
    IVPoint p{i_s * std::expm1(v / nvt), i_s * e / nvt};
    if (breakdown) {
      const auto& b = *breakdown;
      const double s = b.v_bd_slope;
      const double knee = std::exp((b.v_bd - v) / s);
      p.i -= b.i_bd_scale * (knee - std::exp(b.v_bd / s));
      p.didv += b.i_bd_scale * knee / s;
    }
    return p;
  }
};

struct GeneratorGrid {
  double v_min = -125.0;
  double v_max = 0.8;
  std::size_t n = 9682;
};

inline IVDataset generate_shockley(const ShockleyParams& params, double v_min, double v_max, std::size_t n) {
  params.validate();
  if (!(v_min < v_max)) throw InvalidArgument("generate: v_min must be < v_max");
  if (n < IVDataset::kMinSize) throw InvalidArgument("generate: n must be >= 4");
  std::vector<IVSample> rows(n);
  const double step = (v_max - v_min) / static_cast<double>(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    // pin the last node so the grid ends exactly at v_max
    const double v = (k + 1 == n) ? v_max : v_min + step * static_cast<double>(k);
    rows[k] = {v, params.eval(v).i};
  }
  return IVDataset::from_sorted(std::move(rows));
}

inline IVDataset generate_shockley(const ShockleyParams& params, const GeneratorGrid& grid = {}) {
  return generate_shockley(params, grid.v_min, grid.v_max, grid.n);
}

/// The synthetic measurement set used throughout: 1N4148-like diode with an
/// avalanche knee near -100 V, sampled on the default grid.
inline ShockleyParams default_synthetic_diode() {
  ShockleyParams p;
  p.breakdown = Breakdown{};
  return p;
}

}  // namespace dcm
