#pragma once

// Voltage and current rescalings that make the diode curve learnable by an
// MSE loss: piecewise-linear in v, log/linear/log in i.

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "dcm/dataset.hpp"
#include "dcm/error.hpp"

namespace dcm {

class TransformParams {
 public:
  struct Constants {
    double v_plus = 0.1;
    double v_minus = 15.625;
    double p_plus_min = -10.0;
    double p_plus_max = -1.0;
    double p_minus_min = -10.0;
    double p_minus_max = -5.0;

    friend bool operator==(const Constants&, const Constants&) = default;
  };

  TransformParams() : TransformParams(Constants{}) {}

  explicit TransformParams(const Constants& c) : c_(c) {
    if (!(c.v_plus > 0.0) || !(c.v_minus > 0.0)) throw InvalidArgument("transform: v_plus and v_minus must be > 0");
    if (!(c.p_plus_max > c.p_plus_min) || !(c.p_minus_max > c.p_minus_min)) {
      throw InvalidArgument("transform: p_max must exceed p_min on both branches");
    }
    P_plus_ = std::pow(10.0, c.p_plus_min);
    P_minus_ = std::pow(10.0, c.p_minus_min);
    A_plus_ = (c.p_plus_max - c.p_plus_min) / 7.0;
    A_minus_ = (c.p_minus_max - c.p_minus_min) / 7.0;
    B_plus_ = c.p_plus_min - A_plus_;
    B_minus_ = c.p_minus_min - A_minus_;
    S_ = 2.0 / (P_plus_ + P_minus_);
    // -1 + S (i + P-) written as S i + offset; offset is exactly 0 for
    // symmetric thresholds, which keeps the inverse exact near i = 0.
    offset_ = (P_minus_ - P_plus_) / (P_plus_ + P_minus_);

    const double tol = 1e-9;
    const double up_lin = S_ * P_plus_ + offset_, up_log = log_branch_plus(P_plus_);
    const double dn_lin = -S_ * P_minus_ + offset_, dn_log = log_branch_minus(-P_minus_);
    if (std::abs(up_lin - up_log) > tol || std::abs(dn_lin - dn_log) > tol) {
      throw InvalidArgument("transform: current map is discontinuous for these constants");
    }
  }

  const Constants& constants() const { return c_; }
  double P_plus_min() const { return P_plus_; }
  double P_minus_min() const { return P_minus_; }
  double A_plus() const { return A_plus_; }
  double A_minus() const { return A_minus_; }
  double B_plus() const { return B_plus_; }
  double B_minus() const { return B_minus_; }
  double S() const { return S_; }

  double t_v(double v) const { return v >= 0.0 ? v / c_.v_plus : v / c_.v_minus; }
  /// One-sided at v = 0: the forward slope is used.
  double dt_v(double v) const { return v >= 0.0 ? 1.0 / c_.v_plus : 1.0 / c_.v_minus; }

  double t_i(double i) const {
    if (i >= P_plus_) return log_branch_plus(i);
    if (i <= -P_minus_) return log_branch_minus(i);
    return S_ * i + offset_;
  }

  double t_i_inv(double y) const {
    if (y >= 1.0) return std::pow(10.0, A_plus_ * y + B_plus_);
    if (y <= -1.0) return -std::pow(10.0, B_minus_ - A_minus_ * y);
    return (y - offset_) / S_;
  }

  /// d t_i_inv / dy.
  double dt_i_inv(double y) const {
    constexpr double ln10 = std::numbers::ln10;
    if (y >= 1.0) return ln10 * A_plus_ * std::pow(10.0, A_plus_ * y + B_plus_);
    if (y <= -1.0) return ln10 * A_minus_ * std::pow(10.0, B_minus_ - A_minus_ * y);
    return 1.0 / S_;
  }

  friend bool operator==(const TransformParams& a, const TransformParams& b) { return a.c_ == b.c_; }

 private:
  double log_branch_plus(double i) const { return (std::log10(i) - B_plus_) / A_plus_; }
  double log_branch_minus(double i) const { return -(std::log10(-i) - B_minus_) / A_minus_; }

  Constants c_;
  double P_plus_ = 0, P_minus_ = 0, A_plus_ = 0, A_minus_ = 0, B_plus_ = 0, B_minus_ = 0, S_ = 0, offset_ = 0;
};

/// Which coordinates of the I-V table are rescaled before regression.
enum class TransformMode { raw, i_only, v_only, vi };

inline std::string_view to_string(TransformMode m) {
  switch (m) {
    case TransformMode::raw: return "raw";
    case TransformMode::i_only: return "I-only";
    case TransformMode::v_only: return "V-only";
    case TransformMode::vi: return "VI";
  }
  return "?";
}

inline TransformMode parse_transform_mode(std::string_view s) {
  if (s == "raw") return TransformMode::raw;
  if (s == "I-only" || s == "I" || s == "i-only") return TransformMode::i_only;
  if (s == "V-only" || s == "V" || s == "v-only") return TransformMode::v_only;
  if (s == "VI" || s == "vi") return TransformMode::vi;
  throw InvalidArgument("unknown transform mode '" + std::string(s) + "'");
}

inline bool transforms_v(TransformMode m) { return m == TransformMode::vi || m == TransformMode::v_only; }
inline bool transforms_i(TransformMode m) { return m == TransformMode::vi || m == TransformMode::i_only; }

/// Maps a dataset into training coordinates. Both maps are strictly
/// increasing, so the result stays sorted.
inline IVDataset apply_transform(const IVDataset& ds, TransformMode mode, const TransformParams& tp) {
  if (mode == TransformMode::raw) return ds;
  std::vector<IVSample> out(ds.samples().begin(), ds.samples().end());
  for (auto& s : out) {
    if (transforms_v(mode)) s.v = tp.t_v(s.v);
    if (transforms_i(mode)) s.i = tp.t_i(s.i);
  }
  return IVDataset::from_sorted(std::move(out));
}

}  // namespace dcm
