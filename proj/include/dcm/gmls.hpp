#pragma once

// Generalized moving least-squares (GMLS) compact model.
//
// At each query point a degree-k polynomial is fitted by weighted least
// squares to the nearest samples, with the compactly supported kernel
// rho(r) = (1 - r/eps)^p. The value estimate is the fitted polynomial at the
// query and the derivative estimate is its slope there. No coefficients are
// stored: the model is the data plus parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/dataset.hpp"
#include "dcm/error.hpp"
#include "dcm/io.hpp"

namespace dcm {

struct GmlsParams {
  int order = 2;          // polynomial degree k in {1, 2, 3}
  int kernel_power = 4;   // p
  double growth = 1.5;    // support growth factor per adaptation step
  double eps0 = 0.0;      // initial search radius; <= 0 selects the fill distance
  int max_steps = 50;

  friend bool operator==(const GmlsParams&, const GmlsParams&) = default;
};

/// Result of the neighbour search around one query point.
struct Support {
  double eps = 0.0;         // kernel radius used for the weights
  double search_eps = 0.0;  // geometric-sequence radius that first held enough points
  int steps = 0;            // growth steps taken from eps0
  std::vector<std::size_t> indices;  // selected cloud points, all with r < eps
};

class GmlsModel {
 public:
  GmlsModel() = default;

  GmlsModel(const IVDataset& ds, GmlsParams params) : x_(ds.voltages()), f_(ds.currents()), params_(params) {
    if (params_.order < 1 || params_.order > 3) throw InvalidArgument("gmls: order must be 1, 2 or 3");
    if (params_.kernel_power < 2) throw InvalidArgument("gmls: kernel power must be >= 2 for a C1 kernel");
    if (!(params_.growth > 1.0)) throw InvalidArgument("gmls: growth must be > 1");
    if (params_.max_steps < 1) throw InvalidArgument("gmls: max_steps must be >= 1");
    if (x_.size() < min_points()) {
      throw InvalidArgument("gmls: order " + std::to_string(params_.order) + " needs at least " +
                            std::to_string(min_points()) + " points");
    }
    if (!(params_.eps0 > 0.0)) params_.eps0 = ds.fill_distance();
  }

  const std::vector<double>& cloud() const { return x_; }
  const std::vector<double>& samples() const { return f_; }
  const GmlsParams& params() const { return params_; }
  int order() const { return params_.order; }
  double eps0() const { return params_.eps0; }
  std::size_t min_points() const { return 2 * static_cast<std::size_t>(params_.order + 1); }

  double kernel(double r, double eps) const { return r < eps ? std::pow(1.0 - r / eps, params_.kernel_power) : 0.0; }

  /// Grows the search radius eps0 * growth^n until its open support holds
  /// min_points() cloud points and keeps the nearest min_points(). The kernel
  /// radius is the distance to the next-nearest point, so it varies
  /// continuously with v and the first excluded point sits exactly on the
  /// zero of the kernel.
  Support adapt_support(double v) const {
    Support s;
    double eps = params_.eps0;
    int step = 0;
    for (;; ++step) {
      if (count_within(v, eps) >= min_points()) break;
      if (step == params_.max_steps) throw NumericError("gmls: insufficient local data");
      eps *= params_.growth;
    }
    s.search_eps = eps;
    s.steps = step;

    // merge outward from the insertion point, nearest first
    std::size_t right = static_cast<std::size_t>(std::lower_bound(x_.begin(), x_.end(), v) - x_.begin());
    std::size_t left = right;  // candidates are [.., left) and [right, ..)
    auto take_next = [&]() -> std::size_t {
      const bool has_left = left > 0, has_right = right < x_.size();
      if (has_left && (!has_right || v - x_[left - 1] <= x_[right] - v)) return --left;
      return right++;
    };
    s.indices.reserve(min_points());
    for (std::size_t k = 0; k < min_points(); ++k) s.indices.push_back(take_next());
    if (x_.size() > min_points()) {
      s.eps = std::abs(x_[take_next()] - v);
      // drop points tied with the boundary (zero weight)
      std::erase_if(s.indices, [&](std::size_t i) { return !(std::abs(x_[i] - v) < s.eps); });
    } else {
      s.eps = eps;
    }
    std::sort(s.indices.begin(), s.indices.end());
    return s;
  }

  /// Value and derivative estimates. Queries outside the cloud continue the
  /// estimate at the nearest endpoint linearly.
  IVPoint eval(double v) const {
    if (v < x_.front()) return extrapolate(v, x_.front());
    if (v > x_.back()) return extrapolate(v, x_.back());
    return eval_inside(v);
  }

  friend bool operator==(const GmlsModel&, const GmlsModel&) = default;

 private:
  std::size_t count_within(double v, double eps) const {
    // open interval (v - eps, v + eps)
    const auto lo = std::upper_bound(x_.begin(), x_.end(), v - eps);
    const auto hi = std::lower_bound(x_.begin(), x_.end(), v + eps);
    return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
  }

  IVPoint extrapolate(double v, double v_clo) const {
    const IVPoint at = eval_inside(v_clo);
    return {at.i + (v - v_clo) * at.didv, at.didv};
  }

  IVPoint eval_inside(double v) const {
    const Support s = adapt_support(v);
    const auto cols = static_cast<Eigen::Index>(params_.order + 1);
    const auto rows = static_cast<Eigen::Index>(s.indices.size());
    if (rows < cols) throw NumericError("gmls: insufficient local data");
    // basis: monomials in t = (x - v) / eps, so c0 is the value and c1/eps the slope
    Eigen::MatrixXd B(rows, cols);
    Eigen::VectorXd rhs(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double xi = x_[s.indices[static_cast<std::size_t>(r)]];
      const double t = (xi - v) / s.eps;
      const double sw = std::sqrt(kernel(std::abs(xi - v), s.eps));
      double phi = 1.0;
      for (Eigen::Index c = 0; c < cols; ++c) {
        B(r, c) = sw * phi;
        phi *= t;
      }
      rhs(r) = sw * f_[s.indices[static_cast<std::size_t>(r)]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
    if (qr.rank() < cols) throw NumericError("gmls: rank-deficient local system");
    const Eigen::VectorXd c = qr.solve(rhs);
    return {c(0), c(1) / s.eps};
  }

  std::vector<double> x_;
  std::vector<double> f_;
  GmlsParams params_;
};

inline GmlsModel fit_gmls(const IVDataset& ds, int order, GmlsParams params = {}) {
  params.order = order;
  return GmlsModel(ds, params);
}

// ---------------------------------------------------------------------------
// Text format: parameters followed by the dataset itself.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kGmlsMagic = "dcm-gmls 1";

inline std::string serialize(const GmlsModel& model) {
  std::ostringstream os;
  const auto& p = model.params();
  os << kGmlsMagic << '\n'
     << "order " << p.order << '\n'
     << "kernel_power " << p.kernel_power << '\n'
     << "growth " << fmt_double(p.growth) << '\n'
     << "eps0 " << fmt_double(p.eps0) << '\n'
     << "max_steps " << p.max_steps << '\n'
     << "data " << model.cloud().size() << '\n';
  for (std::size_t k = 0; k < model.cloud().size(); ++k) {
    os << fmt_double(model.cloud()[k]) << ' ' << fmt_double(model.samples()[k]) << '\n';
  }
  os << "end\n";
  return os.str();
}

inline GmlsModel parse_gmls(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) throw IoError("gmls model: unexpected end of file");
    return split_ws(trim(line));
  };
  if (!std::getline(in, line) || trim(line) != kGmlsMagic) throw IoError("gmls model: bad header");
  GmlsParams p;
  auto int_field = [&](std::string_view key) {
    auto f = next();
    long long v = 0;
    if (f.size() != 2 || f[0] != key || !parse_int(f[1], v)) throw IoError("gmls model: expected '" + std::string(key) + "'");
    return v;
  };
  auto dbl_field = [&](std::string_view key) {
    auto f = next();
    double v = 0;
    if (f.size() != 2 || f[0] != key || !parse_double(f[1], v)) throw IoError("gmls model: expected '" + std::string(key) + "'");
    return v;
  };
  p.order = static_cast<int>(int_field("order"));
  p.kernel_power = static_cast<int>(int_field("kernel_power"));
  p.growth = dbl_field("growth");
  p.eps0 = dbl_field("eps0");
  p.max_steps = static_cast<int>(int_field("max_steps"));
  const auto n = int_field("data");
  std::vector<IVSample> rows(static_cast<std::size_t>(std::max<long long>(n, 0)));
  for (auto& r : rows) {
    auto f = next();
    if (f.size() != 2 || !parse_double(f[0], r.v) || !parse_double(f[1], r.i)) throw IoError("gmls model: bad data row");
  }
  if (next() != std::vector<std::string_view>{"end"}) throw IoError("gmls model: missing 'end'");
  return GmlsModel(IVDataset::from_sorted(std::move(rows)), p);
}

}  // namespace dcm
