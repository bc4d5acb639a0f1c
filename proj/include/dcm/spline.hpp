#pragma once

// C2 cubic spline with linear boundary pieces for table-based compact models.
//
// The m knots split the line into m+1 intervals: (-inf, x1), [x1, x2), ...,
// [x_m, inf). Each interval carries a cubic in shifted form around its
// anchor (x1 for the left boundary piece, otherwise the interval's left
// knot). Requiring the two boundary pieces to be linear while keeping C2
// continuity forces zero curvature at x1 and x_m, so the interior is the
// natural spline and the moments come from one tridiagonal solve.

#include <algorithm>
#include <array>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/dataset.hpp"
#include "dcm/error.hpp"
#include "dcm/io.hpp"

namespace dcm {

struct CubicPiece {
  double anchor = 0.0;
  // p(x) = alpha t^3 + beta t^2 + gamma t + delta, t = x - anchor
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0;

  IVPoint eval(double x) const {
    const double t = x - anchor;
    return {((alpha * t + beta) * t + gamma) * t + delta, (3.0 * alpha * t + 2.0 * beta) * t + gamma};
  }
  double second_derivative(double x) const { return 6.0 * alpha * (x - anchor) + 2.0 * beta; }

  /// Coefficients {a, b, c, d} of a x^3 + b x^2 + c x + d.
  std::array<double, 4> global() const {
    const double x0 = anchor;
    return {alpha, beta - 3.0 * alpha * x0, gamma - 2.0 * beta * x0 + 3.0 * alpha * x0 * x0,
            delta - gamma * x0 + beta * x0 * x0 - alpha * x0 * x0 * x0};
  }

  friend bool operator==(const CubicPiece&, const CubicPiece&) = default;
};

class SplineModel {
 public:
  SplineModel() = default;
  SplineModel(std::vector<double> knots, std::vector<CubicPiece> pieces) : knots_(std::move(knots)), pieces_(std::move(pieces)) {
    if (knots_.size() < 2 || pieces_.size() != knots_.size() + 1) throw InvalidArgument("spline: need m knots and m+1 pieces");
    for (std::size_t k = 1; k < knots_.size(); ++k) {
      if (!(knots_[k] > knots_[k - 1])) throw InvalidArgument("spline: knots must be strictly increasing");
    }
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<CubicPiece>& pieces() const { return pieces_; }

  /// Index of the piece whose interval holds v: the number of knots <= v.
  std::size_t locate(double v) const {
    return static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), v) - knots_.begin());
  }

  IVPoint eval(double v) const { return pieces_[locate(v)].eval(v); }

  friend bool operator==(const SplineModel&, const SplineModel&) = default;

 private:
  std::vector<double> knots_;
  std::vector<CubicPiece> pieces_;
};

inline SplineModel fit_spline(const IVDataset& ds) {
  const auto x = ds.voltages();
  const auto y = ds.currents();
  const std::size_t m = x.size();
  if (m < IVDataset::kMinSize) throw InvalidArgument("spline: dataset too small");

  std::vector<double> h(m - 1);
  for (std::size_t k = 0; k + 1 < m; ++k) h[k] = x[k + 1] - x[k];

  // Moments M_k = f''(x_k), M_0 = M_{m-1} = 0. Thomas algorithm on the
  // strictly diagonally dominant interior system.
  std::vector<double> M(m, 0.0);
  const std::size_t n = m - 2;
  std::vector<double> diag(n), upper(n), rhs(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t k = r + 1;
    diag[r] = 2.0 * (h[k - 1] + h[k]);
    upper[r] = h[k];
    rhs[r] = 6.0 * ((y[k + 1] - y[k]) / h[k] - (y[k] - y[k - 1]) / h[k - 1]);
  }
  for (std::size_t r = 1; r < n; ++r) {
    const double lower = h[r];  // coefficient of M_{k-1} in row k = r+1
    const double w = lower / diag[r - 1];
    diag[r] -= w * upper[r - 1];
    rhs[r] -= w * rhs[r - 1];
  }
  for (std::size_t r = n; r-- > 0;) {
    double val = rhs[r];
    if (r + 1 < n) val -= upper[r] * M[r + 2];
    if (!(diag[r] != 0.0) || !std::isfinite(val)) throw NumericError("spline: singular moment system");
    M[r + 1] = val / diag[r];
  }

  std::vector<CubicPiece> pieces(m + 1);
  const double slope_left = (y[1] - y[0]) / h[0] - h[0] * (2.0 * M[0] + M[1]) / 6.0;
  pieces[0] = {x[0], 0.0, 0.0, slope_left, y[0]};
  for (std::size_t k = 0; k + 1 < m; ++k) {
    CubicPiece& p = pieces[k + 1];
    p.anchor = x[k];
    p.delta = y[k];
    p.gamma = (y[k + 1] - y[k]) / h[k] - h[k] * (2.0 * M[k] + M[k + 1]) / 6.0;
    p.beta = 0.5 * M[k];
    p.alpha = (M[k + 1] - M[k]) / (6.0 * h[k]);
  }
  const double hl = h[m - 2];
  const double slope_right = (y[m - 1] - y[m - 2]) / hl + hl * (M[m - 2] + 2.0 * M[m - 1]) / 6.0;
  pieces[m] = {x[m - 1], 0.0, 0.0, slope_right, y[m - 1]};
  return SplineModel(x, std::move(pieces));
}

// ---------------------------------------------------------------------------
// Text format
//
//   dcm-spline 1
//   knots <m>
//   <x>            (m lines)
//   coeffs <m+1>
//   <anchor> <alpha> <beta> <gamma> <delta>   (m+1 lines)
//   end
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSplineMagic = "dcm-spline 1";

inline std::string serialize(const SplineModel& model) {
  std::ostringstream os;
  os << kSplineMagic << '\n' << "knots " << model.knots().size() << '\n';
  for (double k : model.knots()) os << fmt_double(k) << '\n';
  os << "coeffs " << model.pieces().size() << '\n';
  for (const auto& p : model.pieces()) {
    os << fmt_double(p.anchor) << ' ' << fmt_double(p.alpha) << ' ' << fmt_double(p.beta) << ' ' << fmt_double(p.gamma)
       << ' ' << fmt_double(p.delta) << '\n';
  }
  os << "end\n";
  return os.str();
}

inline SplineModel parse_spline(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&]() -> std::string_view {
    if (!std::getline(in, line)) throw IoError("spline model: unexpected end of file");
    return trim(line);
  };
  if (next() != kSplineMagic) throw IoError("spline model: bad header");
  auto count_of = [&](std::string_view tag) {
    auto f = split_ws(next());
    long long n = 0;
    if (f.size() != 2 || f[0] != tag || !parse_int(f[1], n) || n < 0) throw IoError("spline model: expected '" + std::string(tag) + " <n>'");
    return static_cast<std::size_t>(n);
  };
  std::vector<double> knots(count_of("knots"));
  for (auto& k : knots) {
    if (!parse_double(next(), k)) throw IoError("spline model: bad knot");
  }
  std::vector<CubicPiece> pieces(count_of("coeffs"));
  for (auto& p : pieces) {
    auto f = split_ws(next());
    if (f.size() != 5 || !parse_double(f[0], p.anchor) || !parse_double(f[1], p.alpha) || !parse_double(f[2], p.beta) ||
        !parse_double(f[3], p.gamma) || !parse_double(f[4], p.delta)) {
      throw IoError("spline model: bad coefficient row");
    }
  }
  if (next() != "end") throw IoError("spline model: missing 'end'");
  return SplineModel(std::move(knots), std::move(pieces));
}

}  // namespace dcm
