#pragma once

// Feed-forward network compact model with one scalar input and output.
//
//   y_0 = x,  y_k = sigma(A_k y_{k-1} + b_k)  (hidden),  y_D = A_D y_{D-1} + b_D
//
// Training minimizes the MSE in the chosen training space with Adam. When the
// non-negative constraint is on, every weight entry is clamped to >= 0 after
// each update; with a monotone activation this makes the network
// non-decreasing in x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/dataset.hpp"
#include "dcm/error.hpp"
#include "dcm/io.hpp"
#include "dcm/transform.hpp"

namespace dcm {

enum class Activation { elu, sigmoid, tanh };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "elu" || s == "E") return Activation::elu;
  if (s == "sigmoid" || s == "S") return Activation::sigmoid;
  if (s == "tanh" || s == "T") return Activation::tanh;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

struct ActivationValue {
  double y;
  double dy;
};

/// ELU uses alpha = 1; its slope at 0 is taken from the positive side.
inline ActivationValue activate(Activation a, double z) {
  switch (a) {
    case Activation::elu:
      if (z >= 0.0) return {z, 1.0};
      return {std::expm1(z), std::exp(z)};
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return {s, s * (1.0 - s)};
    }
    case Activation::tanh: {
      const double t = std::tanh(z);
      return {t, 1.0 - t * t};
    }
  }
  return {0.0, 0.0};
}

struct MlpArchitecture {
  int hidden_layers = 1;
  int width = 10;
  Activation activation = Activation::tanh;
  bool non_negative = true;
  TransformMode space = TransformMode::vi;

  void validate() const {
    if (hidden_layers < 1 || hidden_layers > 2) throw InvalidArgument("mlp: hidden_layers must be 1 or 2");
    if (width < 1) throw InvalidArgument("mlp: width must be >= 1");
  }

  /// Layer sizes n_0 .. n_D.
  std::vector<int> sizes() const {
    std::vector<int> s{1};
    for (int l = 0; l < hidden_layers; ++l) s.push_back(width);
    s.push_back(1);
    return s;
  }

  /// Naming scheme M<layers>-<width>-<E|S|T>[-VI|-I|-V][-neg].
  std::string name() const {
    std::string n = "M" + std::to_string(hidden_layers) + "-" + std::to_string(width) + "-";
    n += activation == Activation::elu ? "E" : activation == Activation::sigmoid ? "S" : "T";
    switch (space) {
      case TransformMode::vi: n += "-VI"; break;
      case TransformMode::i_only: n += "-I"; break;
      case TransformMode::v_only: n += "-V"; break;
      case TransformMode::raw: break;
    }
    if (!non_negative) n += "-neg";
    return n;
  }

  static MlpArchitecture parse(std::string_view name) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      auto dash = name.find('-', start);
      parts.push_back(name.substr(start, dash - start));
      if (dash == std::string_view::npos) break;
      start = dash + 1;
    }
    auto bad = [&] { return InvalidArgument("bad architecture name '" + std::string(name) + "'"); };
    if (parts.size() < 3 || parts[0].size() < 2 || parts[0][0] != 'M') throw bad();
    MlpArchitecture a;
    long long layers = 0, width = 0;
    if (!parse_int(parts[0].substr(1), layers) || !parse_int(parts[1], width)) throw bad();
    a.hidden_layers = static_cast<int>(layers);
    a.width = static_cast<int>(width);
    if (parts[2].size() != 1) throw bad();
    a.activation = parse_activation(parts[2]);
    a.space = TransformMode::raw;
    for (std::size_t k = 3; k < parts.size(); ++k) {
      if (parts[k] == "VI") a.space = TransformMode::vi;
      else if (parts[k] == "I") a.space = TransformMode::i_only;
      else if (parts[k] == "V") a.space = TransformMode::v_only;
      else if (parts[k] == "neg" && k + 1 == parts.size()) a.non_negative = false;
      else throw bad();
    }
    a.validate();
    return a;
  }

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

struct Layer {
  int rows = 0;  // n_i
  int cols = 0;  // n_{i-1}
  std::vector<double> weights;  // row-major rows x cols
  std::vector<double> bias;

  double& w(int r, int c) { return weights[static_cast<std::size_t>(r * cols + c)]; }
  double w(int r, int c) const { return weights[static_cast<std::size_t>(r * cols + c)]; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

inline void project_non_negative(std::vector<Layer>& layers) {
  for (auto& l : layers) {
    for (auto& w : l.weights) w = std::max(w, 0.0);
  }
}

struct TrainConfig {
  int epochs = 2000;
  double learning_rate = 3e-3;
  int batch_size = 64;
  std::uint64_t seed = 42;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("mlp: epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("mlp: learning_rate must be > 0");
    if (batch_size < 1) throw InvalidArgument("mlp: batch_size must be >= 1");
  }
};

struct NetValue {
  double y;
  double dydx;
};

class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(MlpArchitecture arch, std::vector<Layer> layers, TransformParams tp = {}, std::uint64_t seed = 0)
      : arch_(arch), layers_(std::move(layers)), tp_(tp), seed_(seed) {
    arch_.validate();
    const auto sizes = arch_.sizes();
    if (layers_.size() + 1 != sizes.size()) throw InvalidArgument("mlp: layer count does not match architecture");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.rows != sizes[l + 1] || L.cols != sizes[l] || L.weights.size() != static_cast<std::size_t>(L.rows * L.cols) ||
          L.bias.size() != static_cast<std::size_t>(L.rows)) {
        throw InvalidArgument("mlp: layer " + std::to_string(l) + " has the wrong shape");
      }
    }
  }

  const MlpArchitecture& arch() const { return arch_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const TransformParams& transform() const { return tp_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& training_log() const { return log_; }
  double final_mse() const { return final_mse_; }

  void set_training_record(std::vector<double> log, double final_mse) {
    log_ = std::move(log);
    final_mse_ = final_mse;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  double min_weight() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& l : layers_) {
      for (double w : l.weights) m = std::min(m, w);
    }
    return m;
  }

  /// Network output and slope in training coordinates.
  NetValue forward_raw(double x) const {
    std::vector<double> a{x}, da{1.0}, z, dz;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& L = layers_[l];
      z.assign(static_cast<std::size_t>(L.rows), 0.0);
      dz.assign(static_cast<std::size_t>(L.rows), 0.0);
      for (int r = 0; r < L.rows; ++r) {
        double s = L.bias[static_cast<std::size_t>(r)], ds = 0.0;
        for (int c = 0; c < L.cols; ++c) {
          s += L.w(r, c) * a[static_cast<std::size_t>(c)];
          ds += L.w(r, c) * da[static_cast<std::size_t>(c)];
        }
        z[static_cast<std::size_t>(r)] = s;
        dz[static_cast<std::size_t>(r)] = ds;
      }
      if (l + 1 < layers_.size()) {
        for (std::size_t r = 0; r < z.size(); ++r) {
          const auto act = activate(arch_.activation, z[r]);
          z[r] = act.y;
          dz[r] *= act.dy;
        }
      }
      a.swap(z);
      da.swap(dz);
    }
    return {a[0], da[0]};
  }

  /// Compact model in physical units: undoes the training-space maps.
  IVPoint eval(double v) const {
    double x = v, dxdv = 1.0;
    if (transforms_v(arch_.space)) {
      x = tp_.t_v(v);
      dxdv = tp_.dt_v(v);
    }
    const NetValue n = forward_raw(x);
    if (transforms_i(arch_.space)) {
      return {tp_.t_i_inv(n.y), tp_.dt_i_inv(n.y) * n.dydx * dxdv};
    }
    return {n.y, n.dydx * dxdv};
  }

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.arch_ == b.arch_ && a.layers_ == b.layers_ && a.tp_ == b.tp_ && a.seed_ == b.seed_;
  }

 private:
  MlpArchitecture arch_;
  std::vector<Layer> layers_;
  TransformParams tp_;
  std::uint64_t seed_ = 0;
  std::vector<double> log_;
  double final_mse_ = std::numeric_limits<double>::quiet_NaN();
};

/// Glorot-uniform weights (absolute values under the non-negative
/// constraint) and small uniform biases.
inline std::vector<Layer> initialize_layers(const MlpArchitecture& arch, std::mt19937_64& rng) {
  const auto sizes = arch.sizes();
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    Layer L;
    L.rows = sizes[l];
    L.cols = sizes[l - 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(L.rows + L.cols));
    std::uniform_real_distribution<double> wdist(-limit, limit);
    const double blimit = 1.0 / std::sqrt(static_cast<double>(L.cols));
    std::uniform_real_distribution<double> bdist(-blimit, blimit);
    L.weights.resize(static_cast<std::size_t>(L.rows * L.cols));
    for (auto& w : L.weights) w = arch.non_negative ? std::abs(wdist(rng)) : wdist(rng);
    L.bias.resize(static_cast<std::size_t>(L.rows));
    for (auto& b : L.bias) b = bdist(rng);
    layers.push_back(std::move(L));
  }
  return layers;
}

namespace detail {

// Workspace for per-sample backpropagation.
struct Backprop {
  std::vector<std::vector<double>> act;  // act[0] = input, act[l+1] = output of layer l
  std::vector<std::vector<double>> dact; // activation slopes for hidden layers
  std::vector<std::vector<double>> delta;

  explicit Backprop(const std::vector<Layer>& layers) {
    act.resize(layers.size() + 1);
    dact.resize(layers.size());
    delta.resize(layers.size());
    act[0].resize(1);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      act[l + 1].resize(static_cast<std::size_t>(layers[l].rows));
      dact[l].resize(static_cast<std::size_t>(layers[l].rows));
      delta[l].resize(static_cast<std::size_t>(layers[l].rows));
    }
  }
};

inline double forward_cached(const std::vector<Layer>& layers, Activation act_fn, double x, Backprop& bp) {
  bp.act[0][0] = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    const auto& in = bp.act[l];
    auto& out = bp.act[l + 1];
    const bool hidden = l + 1 < layers.size();
    for (int r = 0; r < L.rows; ++r) {
      double s = L.bias[static_cast<std::size_t>(r)];
      const double* wr = &L.weights[static_cast<std::size_t>(r * L.cols)];
      for (int c = 0; c < L.cols; ++c) s += wr[c] * in[static_cast<std::size_t>(c)];
      if (hidden) {
        const auto a = activate(act_fn, s);
        out[static_cast<std::size_t>(r)] = a.y;
        bp.dact[l][static_cast<std::size_t>(r)] = a.dy;
      } else {
        out[static_cast<std::size_t>(r)] = s;
      }
    }
  }
  return bp.act.back()[0];
}

// Adds d(scale * (y - t)^2)/dparams into grads.
inline void backward_accumulate(const std::vector<Layer>& layers, Backprop& bp, double dloss_dy, std::vector<Layer>& grads) {
  const std::size_t D = layers.size();
  bp.delta[D - 1][0] = dloss_dy;
  for (std::size_t l = D; l-- > 0;) {
    const Layer& L = layers[l];
    Layer& G = grads[l];
    const auto& in = bp.act[l];
    const auto& d = bp.delta[l];
    for (int r = 0; r < L.rows; ++r) {
      const double dr = d[static_cast<std::size_t>(r)];
      G.bias[static_cast<std::size_t>(r)] += dr;
      double* gr = &G.weights[static_cast<std::size_t>(r * L.cols)];
      for (int c = 0; c < L.cols; ++c) gr[c] += dr * in[static_cast<std::size_t>(c)];
    }
    if (l == 0) break;
    auto& prev = bp.delta[l - 1];
    std::fill(prev.begin(), prev.end(), 0.0);
    for (int r = 0; r < L.rows; ++r) {
      const double dr = d[static_cast<std::size_t>(r)];
      const double* wr = &L.weights[static_cast<std::size_t>(r * L.cols)];
      for (int c = 0; c < L.cols; ++c) prev[static_cast<std::size_t>(c)] += wr[c] * dr;
    }
    for (std::size_t c = 0; c < prev.size(); ++c) prev[c] *= bp.dact[l - 1][c];
  }
}

inline double dataset_mse(const std::vector<Layer>& layers, Activation act, const IVDataset& ds) {
  Backprop bp(layers);
  double sum = 0.0;
  for (const auto& s : ds.samples()) {
    const double e = forward_cached(layers, act, s.v, bp) - s.i;
    sum += e * e;
  }
  return sum / static_cast<double>(ds.size());
}

}  // namespace detail

/// Mean squared error of the model over a dataset, in training coordinates.
inline double training_space_mse(const MlpModel& model, const IVDataset& ds) {
  return detail::dataset_mse(model.layers(), model.arch().activation,
                             apply_transform(ds, model.arch().space, model.transform()));
}

inline MlpModel train(const IVDataset& ds, const MlpArchitecture& arch, const TrainConfig& cfg, const TransformParams& tp = {}) {
  arch.validate();
  cfg.validate();
  const IVDataset data = apply_transform(ds, arch.space, tp);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Layer> layers = initialize_layers(arch, rng);

  std::vector<Layer> grads = layers, m1 = layers, m2 = layers;
  auto zero = [](std::vector<Layer>& ls) {
    for (auto& l : ls) {
      std::fill(l.weights.begin(), l.weights.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  };
  zero(m1);
  zero(m2);

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;
  detail::Backprop bp(layers);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> log;
  log.reserve(static_cast<std::size_t>(cfg.epochs));
  const auto samples = data.samples();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with 64-bit draws keeps the order identical across runs
    for (std::size_t k = order.size(); k > 1; --k) {
      const std::size_t j = static_cast<std::size_t>(rng() % k);
      std::swap(order[k - 1], order[j]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv_n = 1.0 / static_cast<double>(end - start);
      zero(grads);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[order[k]];
        const double e = detail::forward_cached(layers, arch.activation, s.v, bp) - s.i;
        epoch_loss += e * e;
        detail::backward_accumulate(layers, bp, 2.0 * e * inv_n, grads);
      }
      beta1_t *= beta1;
      beta2_t *= beta2;
      const double step = cfg.learning_rate * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v) {
          for (std::size_t q = 0; q < p.size(); ++q) {
            m[q] = beta1 * m[q] + (1.0 - beta1) * g[q];
            v[q] = beta2 * v[q] + (1.0 - beta2) * g[q] * g[q];
            p[q] -= step * m[q] / (std::sqrt(v[q]) + adam_eps * std::sqrt(1.0 - beta2_t));
          }
        };
        update(layers[l].weights, grads[l].weights, m1[l].weights, m2[l].weights);
        update(layers[l].bias, grads[l].bias, m1[l].bias, m2[l].bias);
      }
      if (arch.non_negative) project_non_negative(layers);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("mlp: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
    log.push_back(epoch_loss);
  }

  const double mse = detail::dataset_mse(layers, arch.activation, data);
  if (!std::isfinite(mse)) throw NumericError("mlp: non-finite final loss");
  MlpModel model(arch, std::move(layers), tp, cfg.seed);
  model.set_training_record(std::move(log), mse);
  return model;
}

// ---------------------------------------------------------------------------
// Text format
//
//   dcm-mlp 1
//   arch M1-10-T-VI
//   transform <v_plus> <v_minus> <p_plus_min> <p_plus_max> <p_minus_min> <p_minus_max>
//   seed <n>
//   final_mse <x>
//   layer <rows> <cols>
//   <row of weights>   (rows lines)
//   bias <b_1> ... <b_rows>
//   ...                (one block per layer)
//   end
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMlpMagic = "dcm-mlp 1";

inline std::string serialize(const MlpModel& model) {
  std::ostringstream os;
  const auto& c = model.transform().constants();
  os << kMlpMagic << '\n'
     << "arch " << model.arch().name() << '\n'
     << "transform " << fmt_double(c.v_plus) << ' ' << fmt_double(c.v_minus) << ' ' << fmt_double(c.p_plus_min) << ' '
     << fmt_double(c.p_plus_max) << ' ' << fmt_double(c.p_minus_min) << ' ' << fmt_double(c.p_minus_max) << '\n'
     << "seed " << model.seed() << '\n'
     << "final_mse " << fmt_double(model.final_mse()) << '\n';
  for (const auto& L : model.layers()) {
    os << "layer " << L.rows << ' ' << L.cols << '\n';
    for (int r = 0; r < L.rows; ++r) {
      for (int col = 0; col < L.cols; ++col) os << (col ? " " : "") << fmt_double(L.w(r, col));
      os << '\n';
    }
    os << "bias";
    for (double b : L.bias) os << ' ' << fmt_double(b);
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

inline MlpModel parse_mlp(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) throw IoError("mlp model: unexpected end of file");
    return split_ws(trim(line));
  };
  auto expect = [&](std::string_view key, std::size_t nvals) {
    auto f = next();
    if (f.size() != nvals + 1 || f[0] != key) throw IoError("mlp model: expected '" + std::string(key) + "'");
    return f;
  };
  auto num = [](std::string_view s) {
    double v = 0;
    if (!parse_double(s, v)) throw IoError("mlp model: bad number '" + std::string(s) + "'");
    return v;
  };
  if (!std::getline(in, line) || trim(line) != kMlpMagic) throw IoError("mlp model: bad header");
  const auto arch = MlpArchitecture::parse(expect("arch", 1)[1]);
  auto tf = expect("transform", 6);
  TransformParams::Constants c{num(tf[1]), num(tf[2]), num(tf[3]), num(tf[4]), num(tf[5]), num(tf[6])};
  long long seed = 0;
  if (!parse_int(expect("seed", 1)[1], seed)) throw IoError("mlp model: bad seed");
  const double final_mse = num(expect("final_mse", 1)[1]);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < arch.sizes().size(); ++l) {
    auto hdr = expect("layer", 2);
    Layer L;
    L.rows = static_cast<int>(num(hdr[1]));
    L.cols = static_cast<int>(num(hdr[2]));
    if (L.rows < 1 || L.cols < 1) throw IoError("mlp model: bad layer shape");
    for (int r = 0; r < L.rows; ++r) {
      auto row = next();
      if (row.size() != static_cast<std::size_t>(L.cols)) throw IoError("mlp model: bad weight row");
      for (auto v : row) L.weights.push_back(num(v));
    }
    auto b = expect("bias", static_cast<std::size_t>(L.rows));
    for (std::size_t k = 1; k < b.size(); ++k) L.bias.push_back(num(b[k]));
    layers.push_back(std::move(L));
  }
  if (next() != std::vector<std::string_view>{"end"}) throw IoError("mlp model: missing 'end'");
  MlpModel model(arch, std::move(layers), TransformParams(c), static_cast<std::uint64_t>(seed));
  model.set_training_record({}, final_mse);
  return model;
}

}  // namespace dcm
