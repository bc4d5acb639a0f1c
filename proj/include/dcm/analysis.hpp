#pragma once

// Diagnostics on compact models and result files: data views, zero crossings,
// sampled monotonicity, and series comparison.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/dataset.hpp"
#include "dcm/error.hpp"
#include "dcm/io.hpp"
#include "dcm/transform.hpp"

namespace dcm {

using CurrentFn = std::function<IVPoint(double)>;

// ---------------------------------------------------------------------------
// Data views: standard (v, i), semilog (v, log10|i|), scaled (T_V, T_I)
// ---------------------------------------------------------------------------

struct ViewRow {
  double v, i, didv;
  std::optional<double> log10_abs_i;  // empty at i = 0
  double t_v, t_i;
};

inline std::vector<ViewRow> iv_views(const CurrentFn& model, const TransformParams& tp, double v_min, double v_max, std::size_t n) {
  if (!(v_min < v_max) || n < 2) throw InvalidArgument("sweep-iv: need v_min < v_max and n >= 2");
  std::vector<ViewRow> rows;
  rows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double v = k + 1 == n ? v_max : v_min + (v_max - v_min) * static_cast<double>(k) / static_cast<double>(n - 1);
    const IVPoint p = model(v);
    ViewRow r{v, p.i, p.didv, std::nullopt, tp.t_v(v), tp.t_i(p.i)};
    if (p.i != 0.0) r.log10_abs_i = std::log10(std::abs(p.i));
    rows.push_back(r);
  }
  return rows;
}

inline std::string views_to_csv(const std::vector<ViewRow>& rows, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "v,i,log10_abs_i,t_v,t_i,didv\n";
  for (const auto& r : rows) {
    os << fmt_double(r.v) << ',' << fmt_double(r.i) << ',' << (r.log10_abs_i ? fmt_double(*r.log10_abs_i) : "") << ','
       << fmt_double(r.t_v) << ',' << fmt_double(r.t_i) << ',' << fmt_double(r.didv) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Zero crossings and monotonicity
// ---------------------------------------------------------------------------

struct ZeroCrossings {
  std::optional<double> first;  // bisected location of the first sign change
  std::size_t count = 0;        // sign changes seen on the sampling grid
};

/// Scans [a, b] on `samples` points for sign changes of i(v) and refines the
/// first one by bisection.
inline ZeroCrossings find_zero_crossings(const CurrentFn& model, double a, double b, std::size_t samples = 4001) {
  ZeroCrossings z;
  auto sign = [](double i) { return (i > 0.0) - (i < 0.0); };
  double v_prev = a;  // last sample with a nonzero current
  int s_prev = sign(model(a).i);
  if (s_prev == 0) z.first = a;
  for (std::size_t k = 1; k < samples; ++k) {
    const double v = k + 1 == samples ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(samples - 1);
    const int s = sign(model(v).i);
    if (s == 0 && !z.first) z.first = v;
    if (s != 0 && s_prev != 0 && s != s_prev) {
      ++z.count;
      if (!z.first) {
        double lo = v_prev, hi = v;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
          const double mid = 0.5 * (lo + hi);
          const int sm = sign(model(mid).i);
          if (sm == 0) {
            lo = hi = mid;
            break;
          }
          (sm == s_prev ? lo : hi) = mid;
        }
        z.first = 0.5 * (lo + hi);
      }
    }
    if (s != 0) {
      v_prev = v;
      s_prev = s;
    }
  }
  return z;
}

/// Zero crossing of the piecewise-linear interpolant of a dataset.
inline std::optional<double> dataset_zero_crossing(const IVDataset& ds) {
  for (std::size_t k = 0; k < ds.size(); ++k) {
    if (ds[k].i == 0.0) return ds[k].v;
    if (k + 1 < ds.size() && (ds[k].i < 0.0) != (ds[k + 1].i < 0.0) && ds[k + 1].i != 0.0) {
      const double t = ds[k].i / (ds[k].i - ds[k + 1].i);
      return ds[k].v + t * (ds[k + 1].v - ds[k].v);
    }
  }
  return std::nullopt;
}

/// Number of adjacent pairs on a uniform grid where the current decreases.
inline std::size_t monotonicity_violations(const CurrentFn& model, double a, double b, std::size_t samples = 4001) {
  std::size_t bad = 0;
  double prev = model(a).i;
  for (std::size_t k = 1; k < samples; ++k) {
    const double v = k + 1 == samples ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(samples - 1);
    const double i = model(v).i;
    if (i < prev) ++bad;
    prev = i;
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Series comparison
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // [column][row]; NaN for empty fields

  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
  std::optional<std::size_t> column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - columns.begin());
  }
};

inline CsvTable parse_csv_table(const std::string& text, const std::string& origin = "csv") {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto f = split_csv(body);
    if (t.columns.empty()) {
      for (auto c : f) t.columns.emplace_back(c);
      t.data.assign(t.columns.size(), {});
      continue;
    }
    if (f.size() != t.columns.size()) throw IoError(origin + ":" + std::to_string(lineno) + ": wrong number of fields");
    for (std::size_t c = 0; c < f.size(); ++c) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!f[c].empty() && !parse_double(f[c], v)) throw IoError(origin + ":" + std::to_string(lineno) + ": bad number");
      t.data[c].push_back(v);
    }
  }
  if (t.columns.empty()) throw IoError(origin + ": no header row");
  return t;
}

struct ColumnDeviation {
  std::string column;
  double max_abs = 0.0;
  double rms = 0.0;
  std::size_t points = 0;
};

struct Comparison {
  bool resampled = false;
  std::vector<ColumnDeviation> columns;
};

/// Linear interpolation of (xs, ys) at x; xs strictly increasing.
inline double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const auto k = static_cast<std::size_t>(it - xs.begin());
  const double t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return ys[k - 1] + t * (ys[k] - ys[k - 1]);
}

/// Aligns b onto a's first column and reports deviations of every shared
/// column except the abscissa and iteration counts. Mismatched grids are
/// handled by interpolating b linearly over the overlap.
inline Comparison compare_tables(const CsvTable& a, const CsvTable& b) {
  if (a.columns.empty() || b.columns.empty() || a.rows() == 0 || b.rows() == 0) throw InvalidArgument("compare: empty table");
  Comparison out;
  const auto& xa = a.data[0];
  const auto& xb = b.data[0];
  bool same_grid = xa.size() == xb.size();
  for (std::size_t k = 0; same_grid && k < xa.size(); ++k) {
    same_grid = std::abs(xa[k] - xb[k]) <= 1e-12 * std::max(1.0, std::abs(xa[k]));
  }
  out.resampled = !same_grid;
  if (!same_grid) {
    for (std::size_t k = 1; k < xb.size(); ++k) {
      if (!(xb[k] > xb[k - 1])) throw InvalidArgument("compare: first column of the second file is not increasing");
    }
  }
  for (std::size_t c = 1; c < a.columns.size(); ++c) {
    const auto& name = a.columns[c];
    if (name == "newton_iters") continue;
    auto cb = b.column(name);
    if (!cb) continue;
    ColumnDeviation d{name};
    double sum2 = 0.0;
    for (std::size_t k = 0; k < xa.size(); ++k) {
      if (!same_grid && (xa[k] < xb.front() || xa[k] > xb.back())) continue;
      const double va = a.data[c][k];
      const double vb = same_grid ? b.data[*cb][k] : interp_linear(xb, b.data[*cb], xa[k]);
      if (std::isnan(va) && std::isnan(vb)) continue;
      const double e = std::abs(va - vb);
      d.max_abs = std::max(d.max_abs, std::isnan(e) ? std::numeric_limits<double>::infinity() : e);
      sum2 += e * e;
      ++d.points;
    }
    d.rms = d.points ? std::sqrt(sum2 / static_cast<double>(d.points)) : 0.0;
    out.columns.push_back(d);
  }
  return out;
}

inline double rms_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("rms_difference: series lengths differ");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("max_abs_difference: series lengths differ");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace dcm
