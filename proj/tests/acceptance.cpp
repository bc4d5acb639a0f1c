// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/analysis.hpp"
#include "dcm/circuit.hpp"
#include "dcm/dataset.hpp"
#include "dcm/gmls.hpp"
#include "dcm/mlp.hpp"
#include "dcm/spline.hpp"
#include "dcm/sweep.hpp"
#include "dcm/transform.hpp"

using namespace dcm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel_err(double got, double want) {
  if (got == want) return 0.0;
  return std::abs(got - want) / std::max(std::abs(got), std::abs(want));
}

// Collects sub-checks of one criterion and prints a single verdict line.
class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)), t0_(Clock::now()) {}

  void check(bool ok, const std::string& what) {
    if (!ok) failed_.push_back(what);
    notes_.push_back(what);
  }

  bool finish(double time_limit_s) {
    const double t = seconds_since(t0_);
    std::ostringstream os;
    os.precision(3);
    os << t;
    check(t < time_limit_s, "runtime " + os.str() + " s < " + fmt_double(time_limit_s) + " s");
    const bool ok = failed_.empty();
    std::printf("%s [%d] %s\n", ok ? "PASS" : "FAIL", id_, title_.c_str());
    for (const auto& n : notes_) {
      const bool bad = std::find(failed_.begin(), failed_.end(), n) != failed_.end();
      std::printf("       %s %s\n", bad ? "x" : "-", n.c_str());
    }
    std::fflush(stdout);
    return ok;
  }

 private:
  int id_;
  std::string title_;
  Clock::time_point t0_;
  std::vector<std::string> failed_, notes_;
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// ---------------------------------------------------------------------------

bool transform_constants() {
  Criterion c(1, "transform constants");
  const TransformParams tp;
  struct Case {
    const char* label;
    double got, want;
  };
  const Case cases[] = {
      {"T_V(0.8) = 8", tp.t_v(0.8), 8.0},
      {"T_V(-125) = -8", tp.t_v(-125.0), -8.0},
      {"T_I(0) = 0", tp.t_i(0.0), 0.0},
      {"T_I(P+min) = 1", tp.t_i(tp.P_plus_min()), 1.0},
      {"T_I(-P-min) = -1", tp.t_i(-tp.P_minus_min()), -1.0},
      {"T_I(1e-1) = 8", tp.t_i(1e-1), 8.0},
      {"T_I(-1e-5) = -8", tp.t_i(-1e-5), -8.0},
  };
  for (const auto& k : cases) {
    const double e = rel_err(k.got, k.want);
    c.check(e <= 1e-12, std::string(k.label) + " (rel " + sci(e) + " <= 1e-12)");
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst[3] = {0, 0, 0};
  for (int k = 0; k < 100000; ++k) {
    const double in[3] = {std::pow(10.0, -10.0 + 10.0 * u(rng)), (2.0 * u(rng) - 1.0) * 1e-10, -std::pow(10.0, -10.0 + 10.0 * u(rng))};
    for (int b = 0; b < 3; ++b) worst[b] = std::max(worst[b], rel_err(tp.t_i_inv(tp.t_i(in[b])), in[b]));
  }
  const char* names[3] = {"upper log", "linear", "lower log"};
  for (int b = 0; b < 3; ++b) {
    c.check(worst[b] <= 1e-12, std::string("round trip on the ") + names[b] + " branch (max rel " + sci(worst[b]) + " <= 1e-12)");
  }
  return c.finish(1.0);
}

bool spline_correctness(const IVDataset& ds, const ShockleyParams& diode) {
  Criterion c(2, "spline correctness");
  const auto t0 = Clock::now();
  const SplineModel model = fit_spline(ds);
  const std::size_t fine = 10 * (ds.size() - 1) + 1;
  double worst_fit = 0.0, worst_at = 0.0;
  for (std::size_t k = 0; k < fine; ++k) {
    const double v = k + 1 == fine ? ds.v_max() : ds.v_min() + (ds.v_max() - ds.v_min()) * static_cast<double>(k) / static_cast<double>(fine - 1);
    const double exact = diode.eval(v).i;
    const double e = std::abs(model.eval(v).i - exact) / (std::abs(exact) + 1e-12);
    if (e > worst_fit) {
      worst_fit = e;
      worst_at = v;
    }
  }
  const double fit_time = seconds_since(t0);

  const auto& x = model.knots();
  const auto& P = model.pieces();
  double c0 = 0, c1 = 0, c2 = 0, interp = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    interp = std::max(interp, std::abs(P[k + 1].eval(x[k]).i - ds[k].i) / std::max(std::abs(ds[k].i), 1e-300));
    if (k == 0 || k + 1 == x.size()) continue;
    c0 = std::max(c0, rel_err(P[k].eval(x[k]).i, P[k + 1].eval(x[k]).i));
    c1 = std::max(c1, rel_err(P[k].eval(x[k]).didv, P[k + 1].eval(x[k]).didv));
    c2 = std::max(c2, rel_err(P[k].second_derivative(x[k]), P[k + 1].second_derivative(x[k])));
  }
  c.check(c0 <= 1e-9, "C0 at interior knots (max rel " + sci(c0) + " <= 1e-9)");
  c.check(c1 <= 1e-9, "C1 at interior knots (max rel " + sci(c1) + " <= 1e-9)");
  c.check(c2 <= 1e-9, "C2 at interior knots (max rel " + sci(c2) + " <= 1e-9)");
  c.check(interp <= 1e-10, "interpolation at knots (max rel " + sci(interp) + " <= 1e-10)");
  const auto gl = P.front().global(), gr = P.back().global();
  c.check(gl[0] == 0.0 && gl[1] == 0.0 && gr[0] == 0.0 && gr[1] == 0.0, "boundary pieces have degree <= 1");
  c.check(fit_time < 2.0, "fit and fine-grid evaluation on " + std::to_string(ds.size()) + " points in " + sci(fit_time) + " s < 2 s");
  c.check(worst_fit <= 1e-6, "analytic curve on the 10x grid (max rel " + sci(worst_fit) + " at v=" + sci(worst_at) + " <= 1e-6)");
  return c.finish(10.0);
}

bool gmls_reproduction() {
  Criterion c(3, "GMLS reproduction");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coef(-2.0, 2.0), jitter(-0.3, 0.3), q(-1.0, 1.0), qi(-0.9, 0.9);
  const std::size_t m = 200;
  const double h = 2.0 / static_cast<double>(m - 1);
  std::vector<double> x(m);
  for (std::size_t k = 0; k < m; ++k) x[k] = -1.0 + h * (static_cast<double>(k) + (k == 0 || k + 1 == m ? 0.0 : jitter(rng)));
  for (int order : {1, 2, 3}) {
    std::vector<double> a(static_cast<std::size_t>(order) + 1);
    for (auto& ai : a) ai = coef(rng);
    auto poly = [&](double v) {
      double y = 0.0;
      for (std::size_t j = a.size(); j-- > 0;) y = y * v + a[j];
      return y;
    };
    auto dpoly = [&](double v) {
      double y = 0.0;
      for (std::size_t j = a.size(); j-- > 1;) y = y * v + static_cast<double>(j) * a[j];
      return y;
    };
    std::vector<IVSample> s;
    for (double v : x) s.push_back({v, poly(v)});
    const GmlsModel model = fit_gmls(IVDataset::from_sorted(s), order);
    double ev = 0, ed = 0;
    std::size_t most = 0;
    for (int n = 0; n < 100; ++n) {
      const double v = q(rng);
      const auto p = model.eval(v);
      ev = std::max(ev, rel_err(p.i, poly(v)));
      ed = std::max(ed, rel_err(p.didv, dpoly(v)));
      most = std::max(most, model.adapt_support(qi(rng)).indices.size());
    }
    const std::string k = "k=" + std::to_string(order);
    c.check(ev <= 1e-8, k + " value reproduction (max rel " + sci(ev) + " <= 1e-8)");
    c.check(ed <= 1e-8, k + " derivative reproduction (max rel " + sci(ed) + " <= 1e-8)");
    c.check(most <= model.min_points(), k + " interior neighbour count " + std::to_string(most) + " <= " + std::to_string(model.min_points()));
  }
  std::vector<IVSample> line;
  for (double v : x) line.push_back({v, 3.0 * v + 2.0});
  const GmlsModel lin = fit_gmls(IVDataset::from_sorted(line), 2);
  double ex = 0.0;
  for (double v : {-5.0, -1.5, -1.0 - 1e-9, 1.0 + 1e-9, 1.25, 7.0}) {
    const auto at_end = lin.eval(v < 0 ? -1.0 : 1.0);
    const double end = v < 0 ? -1.0 : 1.0;
    const auto p = lin.eval(v);
    ex = std::max({ex, rel_err(p.i, at_end.i + (v - end) * at_end.didv), rel_err(p.didv, at_end.didv), rel_err(p.i, 3.0 * v + 2.0)});
  }
  c.check(ex <= 1e-12, "out-of-range linear extrapolation on linear data (max rel " + sci(ex) + " <= 1e-12)");
  return c.finish(5.0);
}

// Smallest |pre-activation| over all hidden units at input x.
double nearest_preactivation(const MlpModel& m, double x) {
  std::vector<double> a{x};
  double nearest = INFINITY;
  const auto& layers = m.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const Layer& L = layers[l];
    std::vector<double> z(static_cast<std::size_t>(L.rows));
    for (int r = 0; r < L.rows; ++r) {
      double s = L.bias[static_cast<std::size_t>(r)];
      for (int c = 0; c < L.cols; ++c) s += L.w(r, c) * a[static_cast<std::size_t>(c)];
      nearest = std::min(nearest, std::abs(s));
      z[static_cast<std::size_t>(r)] = activate(m.arch().activation, s).y;
    }
    a.swap(z);
  }
  return nearest;
}

struct MlpRun {
  MlpModel model;
  double seconds = 0.0;
};

bool mlp_physicality(const IVDataset& ds, MlpRun& run) {
  Criterion c(4, "MLP physicality");
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-12.0, 12.0), pu(-2.0, 2.0);

  // random-parameter constrained networks, every activation and depth
  std::size_t violations = 0, pairs = 0;
  double grad_err = 0.0;
  for (auto act : {Activation::elu, Activation::sigmoid, Activation::tanh}) {
    for (int layers : {1, 2}) {
      MlpArchitecture arch{layers, 10, act, true, TransformMode::vi};
      auto ls = initialize_layers(arch, rng);
      for (auto& L : ls) {
        for (auto& w : L.weights) w = std::abs(pu(rng));
        for (auto& b : L.bias) b = pu(rng);
      }
      const MlpModel m(arch, ls);
      for (int k = 0; k < 10000; ++k, ++pairs) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        violations += m.forward_raw(a).y > m.forward_raw(b).y;
      }
      for (int k = 0; k < 200; ++k) {
        const double x = u(rng) / 4.0;
        if (act == Activation::elu && nearest_preactivation(m, x) < 1e-3) continue;
        const double hs = act == Activation::elu ? 1e-5 : 1e-4;
        auto y = [&](double t) { return m.forward_raw(t).y; };
        const double fd = (8.0 * (y(x + hs) - y(x - hs)) - (y(x + 2 * hs) - y(x - 2 * hs))) / (12.0 * hs);
        const double d = m.forward_raw(x).dydx;
        grad_err = std::max(grad_err, std::abs(d - fd) / std::max(std::abs(d), 1e-12));
      }
    }
  }

  const auto t0 = Clock::now();
  TrainConfig cfg;  // E = 2000, seed 42
  run.model = train(ds, MlpArchitecture::parse("M1-10-T-VI"), cfg);
  run.seconds = seconds_since(t0);

  std::size_t trained_violations = 0;
  for (int k = 0; k < 10000; ++k) {
    std::uniform_real_distribution<double> v(ds.v_min(), ds.v_max());
    double a = v(rng), b = v(rng);
    if (a > b) std::swap(a, b);
    trained_violations += run.model.eval(a).i > run.model.eval(b).i;
  }
  const CurrentFn fn = [&](double v) { return run.model.eval(v); };
  const auto zc = find_zero_crossings(fn, ds.v_min(), ds.v_max());
  const auto oracle = dataset_zero_crossing(ds);
  const double zc_err = zc.first && oracle ? std::abs(*zc.first - *oracle) : INFINITY;

  c.check(violations == 0, "random constrained networks: " + std::to_string(violations) + " violations in " + std::to_string(pairs) + " ordered pairs");
  c.check(trained_violations == 0, "trained M1-10-T-VI: " + std::to_string(trained_violations) + " violations in 10000 ordered pairs");
  c.check(grad_err <= 1e-6, "network slope vs finite differences (max rel " + sci(grad_err) + " <= 1e-6)");
  c.check(run.model.min_weight() >= 0.0, "trained weights non-negative (min " + sci(run.model.min_weight()) + ")");
  c.check(run.model.final_mse() < 1e-3, "M1-10-T-VI transformed-space MSE " + sci(run.model.final_mse()) + " < 1e-3 after " +
                                            std::to_string(cfg.epochs) + " epochs (" + sci(run.seconds) + " s)");
  c.check(zc_err <= 0.05, "zero crossing " + (zc.first ? sci(*zc.first) : std::string("none")) + " V within 0.05 V of the data's " +
                              (oracle ? sci(*oracle) : std::string("none")));
  return c.finish(300.0);
}

// Bridge reduced by symmetry: v(outn) = Vs - v(outp); bisection on v(outp).
double bridge_oracle(const ShockleyParams& d, double vs, double load) {
  auto g = [&](double a) { return d.eval(vs - a).i + d.eval(-a).i - (2.0 * a - vs) / load; };
  double lo = -std::abs(vs) - 10.0, hi = std::abs(vs) + 10.0;  // g(lo) > 0 > g(hi)
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 2.0 * (0.5 * (lo + hi)) - vs;
}

bool circuit_solver(const ShockleyParams& diode) {
  Criterion c(5, "circuit solver");
  // diode in series with 1 kOhm across 5 V dc
  const ShockleyParams ideal{1e-9, 0.02585, 1.0, std::nullopt};
  Netlist dr;
  dr.add_vsource("V1", "a", "0", Waveform::dc(5.0));
  dr.add_resistor("R1", "a", "k", 1000.0);
  dr.add_diode("D1", "k", "0", "d");
  const ModelTable ideal_table{{"d", [&](double v) { return ideal.eval(v); }}};
  const auto sol = dc_solve(dr, ideal_table);
  double lo = 0.0, hi = 5.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (5.0 - mid - 1e3 * ideal.eval(mid).i > 0.0 ? lo : hi) = mid;
  }
  const double dv = std::abs(sol.node_voltage(dr.find_node("k")) - 0.5 * (lo + hi));
  c.check(dv <= 1e-7, "diode-resistor operating point vs bisection (|dv| " + sci(dv) + " V <= 1e-7 V)");

  const BenchParams bench;  // 5 V, 10 Hz, phase pi/1.63, 1 kOhm, 2 periods of 1000 steps
  const Netlist net = build_bridge_rectifier("d", bench);
  const ModelTable table{{"d", [&](double v) { return diode.eval(v); }}};
  TransientResult res;
  bool converged = true;
  std::string why;
  try {
    res = transient(net, table, bench.t_end(), bench.dt());
  } catch (const std::exception& e) {
    converged = false;
    why = e.what();
  }
  c.check(converged, "transient converged at every step" + (why.empty() ? std::string() : ": " + why));
  if (converged) {
    const auto vl = load_voltage(res);
    const int most = *std::max_element(res.newton_iterations.begin(), res.newton_iterations.end());
    double lowest = INFINITY, worst = 0.0;
    for (std::size_t k = 0; k < vl.size(); ++k) {
      lowest = std::min(lowest, vl[k]);
      const double vs = Waveform::sine(0.0, bench.amplitude, bench.freq, bench.phase).at(res.times[k]);
      worst = std::max(worst, std::abs(vl[k] - bridge_oracle(diode, vs, bench.load)));
    }
    c.check(vl.size() == 2001, std::to_string(vl.size() - 1) + " time steps");
    c.check(most <= 25, "max Newton iterations per step " + std::to_string(most) + " <= 25");
    c.check(lowest >= -1e-6, "min load voltage " + sci(lowest) + " V >= -1e-6 V");
    c.check(worst <= 1e-6, "per-step oracle deviation " + sci(worst) + " V <= 1e-6 V");
  }
  return c.finish(30.0);
}

bool interchangeability(const IVDataset& ds, const ShockleyParams& diode, const MlpModel& mlp) {
  Criterion c(6, "model interchangeability");
  const SplineModel spline = fit_spline(ds);
  const GmlsModel gmls = fit_gmls(ds, 2);
  const BenchParams bench;
  const Netlist net = build_bridge_rectifier("d", bench);
  auto run = [&](const DeviceFn& f) { return load_voltage(transient(net, ModelTable{{"d", f}}, bench.t_end(), bench.dt())); };

  struct Series {
    std::string name;
    std::vector<double> v;
  };
  std::vector<Series> fitted;
  std::vector<double> reference;
  try {
    reference = run([&](double v) { return diode.eval(v); });
    fitted.push_back({"spline", run([&](double v) { return spline.eval(v); })});
    fitted.push_back({"gmls", run([&](double v) { return gmls.eval(v); })});
    fitted.push_back({"mlp", run([&](double v) { return mlp.eval(v); })});
  } catch (const std::exception& e) {
    c.check(false, std::string("bench failed: ") + e.what());
    return c.finish(600.0);
  }
  for (const auto& s : fitted) {
    const double r = rms_difference(s.v, reference);
    c.check(r < 1e-3, s.name + " vs analytic diode: RMS " + sci(r) + " V < 1e-3 V (max " + sci(max_abs_difference(s.v, reference)) + " V)");
  }
  for (std::size_t a = 0; a < fitted.size(); ++a) {
    for (std::size_t b = a + 1; b < fitted.size(); ++b) {
      const double r = rms_difference(fitted[a].v, fitted[b].v);
      c.check(r < 5e-3, fitted[a].name + " vs " + fitted[b].name + ": RMS " + sci(r) + " V < 5e-3 V");
    }
  }
  return c.finish(600.0);
}

bool sweep_harness(const IVDataset& ds) {
  Criterion c(7, "sweep harness");
  TrainConfig cfg;
  cfg.epochs = 100;
  std::vector<SweepRow> rows;
  std::string why;
  try {
    rows = sweep_architectures(ds, reference_grid(), cfg, TransformParams{});
  } catch (const std::exception& e) {
    why = e.what();
  }
  c.check(why.empty(), "sweep completed" + (why.empty() ? std::string() : ": " + why));
  c.check(rows.size() == 16, std::to_string(rows.size()) + " of 16 rows present");

  std::size_t incomplete = 0;
  const std::string csv = sweep_to_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split_csv(line);
    incomplete += f.size() != 11 || std::any_of(f.begin(), f.end(), [](std::string_view s) { return trim(s).empty(); });
  }
  c.check(incomplete == 0, std::to_string(incomplete) + " rows with empty columns");
  std::size_t raw = 0, raw_flagged = 0;
  for (const auto& r : rows) {
    if (r.arch.space != TransformMode::raw) continue;
    ++raw;
    raw_flagged += r.status != "ok";
  }
  c.check(true, std::to_string(raw) + " raw-space rows, " + std::to_string(raw_flagged) + " flagged, " +
                    std::to_string(raw - raw_flagged) + " recorded as passing (" + std::to_string(cfg.epochs) + " epochs per row)");
  return c.finish(1800.0);
}

}  // namespace

int main() {
  const ShockleyParams diode = default_synthetic_diode();
  const IVDataset ds = generate_shockley(diode);  // 9682 points on [-125, 0.8]
  std::printf("synthetic dataset: %zu points on [%g, %g] V\n", ds.size(), ds.v_min(), ds.v_max());

  int failed = 0;
  MlpRun mlp;
  failed += !transform_constants();
  failed += !spline_correctness(ds, diode);
  failed += !gmls_reproduction();
  failed += !mlp_physicality(ds, mlp);
  failed += !circuit_solver(diode);
  failed += !interchangeability(ds, diode, mlp.model);
  failed += !sweep_harness(ds);
  std::printf("%d of 7 criteria failed\n", failed);
  return failed ? 1 : 0;
}
