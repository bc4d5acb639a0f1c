#pragma once

// Minimal nonlinear DC/transient circuit simulator for validating two-terminal
// compact models. Modified nodal analysis: unknowns are the non-ground node
// voltages followed by one branch current per voltage source. Diodes are
// memoryless, so a transient is a sequence of warm-started DC solves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dcm/dataset.hpp"
#include "dcm/error.hpp"
#include "dcm/io.hpp"

namespace dcm {

struct Waveform {
  enum class Kind { dc, sine };
  Kind kind = Kind::dc;
  double offset = 0.0;  // the DC value for Kind::dc
  double amplitude = 0.0;
  double freq = 0.0;
  double phase = 0.0;

  static Waveform dc(double v) { return {Kind::dc, v, 0.0, 0.0, 0.0}; }
  static Waveform sine(double offset, double amplitude, double freq, double phase) {
    if (!(freq > 0.0)) throw InvalidArgument("sine source frequency must be > 0");
    return {Kind::sine, offset, amplitude, freq, phase};
  }

  double at(double t) const {
    if (kind == Kind::dc) return offset;
    return offset + amplitude * std::sin(2.0 * std::numbers::pi * freq * t + phase);
  }
};

struct Resistor {
  std::string name;
  int a = 0, b = 0;
  double ohms = 0.0;
};

// Branch current flows from pos through the source to neg.
struct VSource {
  std::string name;
  int pos = 0, neg = 0;
  Waveform wave;
};

// Current flows into the anode, i = f(v_anode - v_cathode).
struct Diode {
  std::string name;
  int anode = 0, cathode = 0;
  std::string model;
};

using Element = std::variant<Resistor, VSource, Diode>;

class Netlist {
 public:
  static constexpr int kGround = 0;

  Netlist() : nodes_{"0"} {}

  /// Index of a named node, creating it on first use. "0" is ground.
  int node(const std::string& name) {
    auto it = std::find(nodes_.begin(), nodes_.end(), name);
    if (it != nodes_.end()) return static_cast<int>(it - nodes_.begin());
    nodes_.push_back(name);
    return static_cast<int>(nodes_.size() - 1);
  }
  int find_node(const std::string& name) const {
    auto it = std::find(nodes_.begin(), nodes_.end(), name);
    if (it == nodes_.end()) throw InvalidArgument("unknown node '" + name + "'");
    return static_cast<int>(it - nodes_.begin());
  }

  void add_resistor(const std::string& name, const std::string& a, const std::string& b, double ohms) {
    if (!(ohms > 0.0)) throw InvalidArgument("resistor " + name + ": resistance must be > 0");
    elements_.push_back(Resistor{name, node(a), node(b), ohms});
  }
  void add_vsource(const std::string& name, const std::string& pos, const std::string& neg, Waveform w) {
    elements_.push_back(VSource{name, node(pos), node(neg), w});
  }
  void add_diode(const std::string& name, const std::string& anode, const std::string& cathode, const std::string& model) {
    elements_.push_back(Diode{name, node(anode), node(cathode), model});
  }

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Element>& elements() const { return elements_; }
  std::vector<Element>& elements() { return elements_; }

  std::size_t node_count() const { return nodes_.size(); }  // including ground

  template <typename T>
  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(elements_.begin(), elements_.end(), [](const Element& e) { return std::holds_alternative<T>(e); }));
  }

  std::vector<std::string> source_names() const {
    std::vector<std::string> out;
    for (const auto& e : elements_) {
      if (auto* v = std::get_if<VSource>(&e)) out.push_back(v->name);
    }
    return out;
  }

  /// Every node must connect to ground through some chain of elements.
  void validate() const {
    std::vector<int> parent(nodes_.size());
    for (std::size_t k = 0; k < parent.size(); ++k) parent[k] = static_cast<int>(k);
    std::function<int(int)> root = [&](int k) { return parent[static_cast<std::size_t>(k)] == k ? k : parent[static_cast<std::size_t>(k)] = root(parent[static_cast<std::size_t>(k)]); };
    auto join = [&](int a, int b) { parent[static_cast<std::size_t>(root(a))] = root(b); };
    for (const auto& e : elements_) {
      std::visit([&](const auto& el) {
        using T = std::decay_t<decltype(el)>;
        if constexpr (std::is_same_v<T, Resistor>) join(el.a, el.b);
        else if constexpr (std::is_same_v<T, VSource>) join(el.pos, el.neg);
        else join(el.anode, el.cathode);
      }, e);
    }
    for (std::size_t k = 1; k < nodes_.size(); ++k) {
      if (root(static_cast<int>(k)) != root(kGround)) throw InvalidArgument("node '" + nodes_[k] + "' is not connected to ground");
    }
  }

 private:
  std::vector<std::string> nodes_;
  std::vector<Element> elements_;
};

/// A two-terminal device model: current and conductance at a junction voltage.
using DeviceFn = std::function<IVPoint(double)>;
using ModelTable = std::map<std::string, DeviceFn>;

struct SolveOptions {
  double reltol = 1e-3;
  double abstol_v = 1e-6;
  double abstol_i = 1e-12;
  int max_newton = 100;
  double junction_limit = 0.5;  // volts per Newton step across any diode
  int source_steps = 10;

  void validate() const {
    if (!(reltol > 0.0) || !(abstol_v > 0.0) || !(abstol_i > 0.0)) throw InvalidArgument("solver tolerances must be > 0");
    if (max_newton < 1 || source_steps < 1 || !(junction_limit > 0.0)) throw InvalidArgument("bad solver limits");
  }
};

struct DcSolution {
  std::vector<double> x;  // node voltages (nodes 1..N-1), then source branch currents
  int iterations = 0;     // Newton updates, summed over source-stepping levels
  double kcl_residual = 0.0;

  double node_voltage(int node) const { return node == Netlist::kGround ? 0.0 : x[static_cast<std::size_t>(node - 1)]; }
};

namespace detail {

class MnaSystem {
 public:
  MnaSystem(const Netlist& net, const ModelTable& models) : net_(net) {
    net.validate();
    n_nodes_ = static_cast<Eigen::Index>(net.node_count()) - 1;
    Eigen::Index branch = n_nodes_;
    for (const auto& e : net.elements()) {
      if (std::holds_alternative<VSource>(e)) ++branch;
      if (auto* d = std::get_if<Diode>(&e)) {
        auto it = models.find(d->model);
        if (it == models.end() || !it->second) throw InvalidArgument("diode " + d->name + ": unknown model '" + d->model + "'");
        diode_fns_.push_back(&it->second);
      }
    }
    size_ = branch;
  }

  Eigen::Index size() const { return size_; }
  Eigen::Index node_unknowns() const { return n_nodes_; }

  double v(const Eigen::VectorXd& x, int node) const { return node == 0 ? 0.0 : x(node - 1); }

  // Residual F(x) and Jacobian J(x) with sources scaled by `scale`.
  void assemble(const Eigen::VectorXd& x, double t, double scale, Eigen::VectorXd& F, Eigen::MatrixXd& J) const {
    F.setZero(size_);
    J.setZero(size_, size_);
    auto add_f = [&](int node, double val) { if (node) F(node - 1) += val; };
    auto add_j = [&](int r, int c, double val) { if (r && c) J(r - 1, c - 1) += val; };
    Eigen::Index branch = n_nodes_;
    std::size_t diode = 0;
    for (const auto& e : net_.elements()) {
      if (auto* r = std::get_if<Resistor>(&e)) {
        const double g = 1.0 / r->ohms;
        const double i = g * (v(x, r->a) - v(x, r->b));
        add_f(r->a, i);
        add_f(r->b, -i);
        add_j(r->a, r->a, g); add_j(r->a, r->b, -g);
        add_j(r->b, r->a, -g); add_j(r->b, r->b, g);
      } else if (auto* s = std::get_if<VSource>(&e)) {
        const double j = x(branch);
        add_f(s->pos, j);
        add_f(s->neg, -j);
        if (s->pos) { J(s->pos - 1, branch) += 1.0; J(branch, s->pos - 1) += 1.0; }
        if (s->neg) { J(s->neg - 1, branch) -= 1.0; J(branch, s->neg - 1) -= 1.0; }
        F(branch) = v(x, s->pos) - v(x, s->neg) - scale * s->wave.at(t);
        ++branch;
      } else {
        const auto& d = std::get<Diode>(e);
        const IVPoint p = (*diode_fns_[diode++])(v(x, d.anode) - v(x, d.cathode));
        add_f(d.anode, p.i);
        add_f(d.cathode, -p.i);
        add_j(d.anode, d.anode, p.didv); add_j(d.anode, d.cathode, -p.didv);
        add_j(d.cathode, d.anode, -p.didv); add_j(d.cathode, d.cathode, p.didv);
      }
    }
  }

  // Largest diode junction-voltage change implied by an update dx.
  double max_junction_step(const Eigen::VectorXd& dx) const {
    double m = 0.0;
    for (const auto& e : net_.elements()) {
      if (auto* d = std::get_if<Diode>(&e)) m = std::max(m, std::abs(v(dx, d->anode) - v(dx, d->cathode)));
    }
    return m;
  }

 private:
  const Netlist& net_;
  std::vector<const DeviceFn*> diode_fns_;
  Eigen::Index n_nodes_ = 0;
  Eigen::Index size_ = 0;
};

struct NewtonOutcome {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

inline NewtonOutcome newton(const MnaSystem& sys, Eigen::VectorXd& x, double t, double scale, const SolveOptions& opts) {
  Eigen::VectorXd F, dx;
  Eigen::MatrixXd J;
  NewtonOutcome out;
  bool small_update = false;
  for (int it = 0;; ++it) {
    sys.assemble(x, t, scale, F, J);
    if (!F.allFinite() || !J.allFinite()) {
      out.residual = std::numeric_limits<double>::infinity();
      return out;
    }
    const double kcl = F.head(sys.node_unknowns()).cwiseAbs().maxCoeff();
    const double src = sys.size() > sys.node_unknowns() ? F.tail(sys.size() - sys.node_unknowns()).cwiseAbs().maxCoeff() : 0.0;
    out.residual = kcl;
    if (small_update && kcl < opts.abstol_i && src < opts.abstol_v) {
      out.converged = true;
      return out;
    }
    if (it == opts.max_newton) return out;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) throw NumericError("singular MNA Jacobian at t=" + fmt_double(t));
    dx = lu.solve(-F);
    const double jstep = sys.max_junction_step(dx);
    if (jstep > opts.junction_limit) dx *= opts.junction_limit / jstep;
    x += dx;
    ++out.iterations;
    small_update = true;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double abstol = k < sys.node_unknowns() ? opts.abstol_v : opts.abstol_i;
      if (std::abs(dx(k)) > abstol + opts.reltol * std::abs(x(k))) {
        small_update = false;
        break;
      }
    }
  }
}

inline DcSolution solve_system(const MnaSystem& sys, double t, const SolveOptions& opts, const std::optional<std::vector<double>>& guess) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.size());
  if (guess) {
    if (static_cast<Eigen::Index>(guess->size()) != sys.size()) throw InvalidArgument("initial guess has the wrong size");
    for (Eigen::Index k = 0; k < sys.size(); ++k) x(k) = (*guess)[static_cast<std::size_t>(k)];
  }
  const Eigen::VectorXd start = x;
  NewtonOutcome r = newton(sys, x, t, 1.0, opts);
  int total = r.iterations;
  if (!r.converged) {
    // source stepping from the starting point
    x = start;
    for (int level = 1; level <= opts.source_steps; ++level) {
      const double scale = static_cast<double>(level) / opts.source_steps;
      r = newton(sys, x, t, scale, opts);
      total += r.iterations;
      if (!r.converged) {
        throw NumericError("Newton failed at t=" + fmt_double(t) + " (source level " + std::to_string(level) + "/" +
                           std::to_string(opts.source_steps) + ", last KCL residual " + fmt_double(r.residual) + " A)");
      }
    }
  }
  DcSolution sol;
  sol.x.assign(x.data(), x.data() + x.size());
  sol.iterations = total;
  sol.kcl_residual = r.residual;
  return sol;
}

}  // namespace detail

/// Operating point at time t (sources evaluated at t).
inline DcSolution dc_solve(const Netlist& net, const ModelTable& models, double t = 0.0, const SolveOptions& opts = {},
                           const std::optional<std::vector<double>>& guess = std::nullopt) {
  opts.validate();
  detail::MnaSystem sys(net, models);
  return detail::solve_system(sys, t, opts, guess);
}

/// Post-hoc KCL check: largest net current into any non-ground node.
inline double kcl_residual(const Netlist& net, const ModelTable& models, const std::vector<double>& x, double t) {
  detail::MnaSystem sys(net, models);
  Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd F;
  Eigen::MatrixXd J;
  sys.assemble(xv, t, 1.0, F, J);
  return sys.node_unknowns() ? F.head(sys.node_unknowns()).cwiseAbs().maxCoeff() : 0.0;
}

struct TransientResult {
  std::vector<double> times;
  std::vector<std::string> node_names;               // non-ground nodes
  std::vector<std::vector<double>> node_voltages;    // [node][step]
  std::vector<std::string> source_names;
  std::vector<std::vector<double>> branch_currents;  // [source][step]
  std::vector<int> newton_iterations;

  const std::vector<double>& voltage(const std::string& node) const {
    auto it = std::find(node_names.begin(), node_names.end(), node);
    if (it == node_names.end()) throw InvalidArgument("no node '" + node + "' in result");
    return node_voltages[static_cast<std::size_t>(it - node_names.begin())];
  }

  /// v(a) - v(b) per step; "0" is ground.
  std::vector<double> difference(const std::string& a, const std::string& b) const {
    std::vector<double> out(times.size(), 0.0);
    if (a != "0") {
      const auto& va = voltage(a);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += va[k];
    }
    if (b != "0") {
      const auto& vb = voltage(b);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] -= vb[k];
    }
    return out;
  }
};

/// Quasi-static sweep t = 0, dt, ..., round(t_end/dt) dt.
inline TransientResult transient(const Netlist& net, const ModelTable& models, double t_end, double dt, const SolveOptions& opts = {},
                                 bool warm_start = true) {
  if (!(dt > 0.0) || !(t_end >= dt)) throw InvalidArgument("transient: need dt > 0 and t_end >= dt");
  opts.validate();
  detail::MnaSystem sys(net, models);
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
  TransientResult res;
  res.node_names.assign(net.nodes().begin() + 1, net.nodes().end());
  res.node_voltages.assign(res.node_names.size(), {});
  res.source_names = net.source_names();
  res.branch_currents.assign(res.source_names.size(), {});
  std::optional<std::vector<double>> guess;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    DcSolution sol;
    try {
      sol = detail::solve_system(sys, t, opts, guess);
    } catch (const NumericError& e) {
      throw NumericError(std::string("transient step failed: ") + e.what());
    }
    res.times.push_back(t);
    for (std::size_t n = 0; n < res.node_names.size(); ++n) res.node_voltages[n].push_back(sol.x[n]);
    for (std::size_t s = 0; s < res.source_names.size(); ++s) res.branch_currents[s].push_back(sol.x[res.node_names.size() + s]);
    res.newton_iterations.push_back(sol.iterations);
    if (warm_start) guess = std::move(sol.x);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Bridge rectifier bench
// ---------------------------------------------------------------------------

struct BenchParams {
  double amplitude = 5.0;  // volts
  double freq = 10.0;      // Hz
  double phase = std::numbers::pi / 1.63;
  double load = 1000.0;    // ohms
  double periods = 2.0;
  int steps_per_period = 1000;

  void validate() const {
    if (!(amplitude >= 0.0) || !(freq > 0.0) || !(load > 0.0) || !(periods > 0.0) || steps_per_period < 1) {
      throw InvalidArgument("bench: amplitude >= 0, freq > 0, load > 0, periods > 0, steps_per_period >= 1 required");
    }
  }
  double t_end() const { return periods / freq; }
  double dt() const { return 1.0 / (freq * steps_per_period); }
};

/// Four-diode full-wave bridge. Source between `in` and ground; load between
/// `outp` and `outn`. With `reversed` every diode is flipped.
inline Netlist build_bridge_rectifier(const std::string& model, const BenchParams& bench = {}, bool reversed = false) {
  bench.validate();
  Netlist net;
  net.add_vsource("V1", "in", "0", Waveform::sine(0.0, bench.amplitude, bench.freq, bench.phase));
  auto diode = [&](const std::string& name, const std::string& a, const std::string& k) {
    if (reversed) net.add_diode(name, k, a, model);
    else net.add_diode(name, a, k, model);
  };
  diode("D1", "in", "outp");
  diode("D2", "0", "outp");
  diode("D3", "outn", "in");
  diode("D4", "outn", "0");
  net.add_resistor("RL", "outp", "outn", bench.load);
  return net;
}

inline std::vector<double> load_voltage(const TransientResult& r) { return r.difference("outp", "outn"); }

// ---------------------------------------------------------------------------
// Netlist text format
//   R<name> n+ n- <ohms>
//   V<name> n+ n- DC <v>
//   V<name> n+ n- SIN <offset> <ampl> <freq> <phase>
//   D<name> p n <model-name>
// '*' starts a comment line; node 0 is ground.
// ---------------------------------------------------------------------------

inline Netlist parse_netlist(const std::string& text) {
  Netlist net;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto num = [&](std::string_view s) {
    double v = 0;
    if (!parse_double(s, v)) throw IoError("netlist line " + std::to_string(lineno) + ": bad number '" + std::string(s) + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty() || body.front() == '*') continue;
    auto f = split_ws(body);
    const std::string name(f[0]);
    const char kind = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    auto fail = [&](const std::string& why) { return IoError("netlist line " + std::to_string(lineno) + ": " + why); };
    if (kind == 'R') {
      if (f.size() != 4) throw fail("expected R<name> n+ n- <ohms>");
      net.add_resistor(name, std::string(f[1]), std::string(f[2]), num(f[3]));
    } else if (kind == 'V') {
      if (f.size() == 5 && (f[3] == "DC" || f[3] == "dc")) {
        net.add_vsource(name, std::string(f[1]), std::string(f[2]), Waveform::dc(num(f[4])));
      } else if (f.size() == 8 && (f[3] == "SIN" || f[3] == "sin")) {
        net.add_vsource(name, std::string(f[1]), std::string(f[2]), Waveform::sine(num(f[4]), num(f[5]), num(f[6]), num(f[7])));
      } else {
        throw fail("expected V<name> n+ n- DC <v> or SIN <offset> <ampl> <freq> <phase>");
      }
    } else if (kind == 'D') {
      if (f.size() != 4) throw fail("expected D<name> p n <model>");
      net.add_diode(name, std::string(f[1]), std::string(f[2]), std::string(f[3]));
    } else {
      throw fail("unknown element '" + name + "'");
    }
  }
  return net;
}

/// CSV columns: t, v(node)..., i(source)..., newton_iters.
inline std::string to_csv(const TransientResult& r, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "t";
  for (const auto& n : r.node_names) os << ",v(" << n << ")";
  for (const auto& s : r.source_names) os << ",i(" << s << ")";
  os << ",newton_iters\n";
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    os << fmt_double(r.times[k]);
    for (const auto& v : r.node_voltages) os << ',' << fmt_double(v[k]);
    for (const auto& i : r.branch_currents) os << ',' << fmt_double(i[k]);
    os << ',' << r.newton_iterations[k] << '\n';
  }
  return os.str();
}

}  // namespace dcm
