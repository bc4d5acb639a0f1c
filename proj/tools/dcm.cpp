// dcm: build, inspect and simulate data-driven diode compact models.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/analysis.hpp"
#include "dcm/config.hpp"
#include "dcm/model.hpp"
#include "dcm/sweep.hpp"

using namespace dcm;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

template <typename T>
void override_with(T& target, const std::optional<T>& value) {
  if (value) target = *value;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Run {
 public:
  explicit Run(const Globals& g) : g_(g) {
    if (!g.config.empty()) cfg = load_config(g.config);
    override_with(cfg.seed, g.seed);
    if (!g.out.empty()) cfg.output = g.out;
  }

  RunConfig cfg;

  std::vector<std::string> header(const std::string& what) const {
    std::vector<std::string> h{"dcm " + what, "seed " + std::to_string(cfg.seed)};
    if (!g_.deterministic) h.push_back("created " + utc_now());
    return h;
  }

  std::string join(const std::vector<std::string>& lines) const {
    std::string s;
    for (const auto& l : lines) s += "# " + l + "\n";
    return s;
  }

  void emit(const std::string& content) const {
    if (cfg.output.empty()) {
      std::cout << content;
    } else {
      write_file_atomic(cfg.output, content);
      std::cerr << "wrote " << cfg.output << '\n';
    }
  }

  TransformParams transform() const { return TransformParams(cfg.transform); }

  CompactModel model(const std::string& ref) const {
    if (ref == "shockley") return cfg.generator.shockley();
    return load_model(ref);
  }

 private:
  Globals g_;
};

IVDataset read_dataset(const std::string& path) {
  const auto c = load_csv(path);
  if (c.duplicates_collapsed) std::cerr << "warning: averaged " << c.duplicates_collapsed << " repeated voltages\n";
  return c.data;
}

std::string bench_summary(const BenchParams& b) {
  std::ostringstream os;
  os << "bench amplitude=" << fmt_double(b.amplitude) << " freq=" << fmt_double(b.freq) << " phase=" << fmt_double(b.phase)
     << " load=" << fmt_double(b.load) << " periods=" << fmt_double(b.periods) << " steps_per_period=" << b.steps_per_period;
  return os.str();
}

std::string solver_summary(const SolveOptions& s) {
  std::ostringstream os;
  os << "solver reltol=" << fmt_double(s.reltol) << " abstol_v=" << fmt_double(s.abstol_v) << " abstol_i=" << fmt_double(s.abstol_i)
     << " max_newton=" << s.max_newton << " junction_limit=" << fmt_double(s.junction_limit)
     << " source_steps=" << s.source_steps;
  return os.str();
}

struct BenchFlags {
  std::optional<double> amplitude, freq, phase, load, periods;
  std::optional<int> steps_per_period;
  std::optional<double> reltol, abstol_v, abstol_i, junction_limit;
  std::optional<int> max_newton, source_steps;

  void add(CLI::App* c) {
    c->add_option("--amplitude", amplitude, "Source amplitude [V]");
    c->add_option("--freq", freq, "Source frequency [Hz]");
    c->add_option("--phase", phase, "Source phase [rad]");
    c->add_option("--load", load, "Load resistance [ohm]");
    c->add_option("--periods", periods, "Simulated source periods");
    c->add_option("--steps-per-period", steps_per_period, "Time steps per period");
    c->add_option("--reltol", reltol, "Newton relative tolerance");
    c->add_option("--abstol-v", abstol_v, "Newton voltage tolerance [V]");
    c->add_option("--abstol-i", abstol_i, "KCL current tolerance [A]");
    c->add_option("--junction-limit", junction_limit, "Largest junction step per Newton update [V]");
    c->add_option("--max-newton", max_newton, "Newton iterations per solve");
    c->add_option("--source-steps", source_steps, "Source-stepping levels on failure");
  }

  void apply(RunConfig& cfg) const {
    override_with(cfg.bench.amplitude, amplitude);
    override_with(cfg.bench.freq, freq);
    override_with(cfg.bench.phase, phase);
    override_with(cfg.bench.load, load);
    override_with(cfg.bench.periods, periods);
    override_with(cfg.bench.steps_per_period, steps_per_period);
    override_with(cfg.solver.reltol, reltol);
    override_with(cfg.solver.abstol_v, abstol_v);
    override_with(cfg.solver.abstol_i, abstol_i);
    override_with(cfg.solver.junction_limit, junction_limit);
    override_with(cfg.solver.max_newton, max_newton);
    override_with(cfg.solver.source_steps, source_steps);
  }
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct GenerateFlags {
  std::optional<long long> n;
  std::optional<double> v_min, v_max;
  bool no_breakdown = false;
};

int cmd_generate(Run& run, const GenerateFlags& f) {
  auto& g = run.cfg.generator;
  override_with(g.n, f.n);
  override_with(g.v_min, f.v_min);
  override_with(g.v_max, f.v_max);
  if (f.no_breakdown) g.breakdown = false;
  if (!(g.v_min < g.v_max)) throw InvalidArgument("generate: need v_min < v_max");
  if (g.n < 4) throw InvalidArgument("generate: need n >= 4");
  const auto ds = generate_shockley(g.shockley(), g.v_min, g.v_max, static_cast<std::size_t>(g.n));
  std::string text = run.join(run.header("generate"));
  text += to_csv(ds);
  run.emit(text);
  std::cerr << "m = " << ds.size() << "\nv in [" << fmt_double(ds.v_min()) << ", " << fmt_double(ds.v_max()) << "] V\ni in ["
            << fmt_double(ds.i_min()) << ", " << fmt_double(ds.i_max()) << "] A\n";
  return 0;
}

struct FitFlags {
  std::string data;
  std::optional<std::string> backend, arch;
  std::optional<int> order, epochs, batch_size;
  std::optional<double> learning_rate;
};

int cmd_fit(Run& run, const FitFlags& f) {
  auto& cfg = run.cfg;
  override_with(cfg.backend, f.backend);
  override_with(cfg.gmls.order, f.order);
  override_with(cfg.mlp_arch, f.arch);
  override_with(cfg.mlp_epochs, f.epochs);
  override_with(cfg.mlp_batch_size, f.batch_size);
  override_with(cfg.mlp_learning_rate, f.learning_rate);
  const IVDataset ds = read_dataset(f.data);
  const TransformParams tp = run.transform();

  CompactModel model;
  if (cfg.backend == "spline") {
    model = fit_spline(ds);
  } else if (cfg.backend == "gmls") {
    model = fit_gmls(ds, cfg.gmls.order, cfg.gmls);
  } else if (cfg.backend == "mlp") {
    const auto arch = MlpArchitecture::parse(cfg.mlp_arch);
    const auto trained = train(ds, arch, cfg.train_config(), tp);
    std::cerr << "mlp " << arch.name() << ": " << cfg.mlp_epochs << " epochs, training-space MSE " << fmt_double(trained.final_mse())
              << '\n';
    model = trained;
  } else {
    throw InvalidArgument("fit: unknown backend '" + cfg.backend + "' (spline, gmls, mlp)");
  }

  double raw = 0.0, scaled = 0.0;
  for (const auto& s : ds.samples()) {
    const double i = model.eval(s.v).i;
    raw += (i - s.i) * (i - s.i);
    const double d = tp.t_i(i) - tp.t_i(s.i);
    scaled += d * d;
  }
  raw /= static_cast<double>(ds.size());
  scaled /= static_cast<double>(ds.size());
  if (!std::isfinite(raw)) throw NumericError("fit: model produced non-finite currents on the data");
  run.emit(serialize(model));
  std::cerr << model.kind() << " fit on " << ds.size() << " samples\nMSE raw " << fmt_double(raw) << " A^2\nMSE transformed "
            << fmt_double(scaled) << '\n';
  return 0;
}

struct SweepIvFlags {
  std::string model;
  std::optional<double> v_min, v_max;
  std::size_t n = 1001;
};

int cmd_sweep_iv(Run& run, const SweepIvFlags& f) {
  override_with(run.cfg.generator.v_min, f.v_min);
  override_with(run.cfg.generator.v_max, f.v_max);
  const auto model = run.model(f.model);
  const CurrentFn fn = [&model](double v) { return model.eval(v); };
  const auto rows = iv_views(fn, run.transform(), run.cfg.generator.v_min, run.cfg.generator.v_max, f.n);
  auto h = run.header("sweep-iv " + f.model);
  h.push_back("model " + model.kind());
  run.emit(views_to_csv(rows, h));
  return 0;
}

struct SimulateFlags {
  std::string model = "shockley";
  std::string netlist;
  std::vector<std::string> bindings;
  bool cold = false;
  BenchFlags bench;
};

int cmd_simulate(Run& run, const SimulateFlags& f) {
  auto& cfg = run.cfg;
  f.bench.apply(cfg);
  cfg.bench.validate();
  cfg.solver.validate();

  Netlist net;
  ModelTable table;
  auto h = run.header("simulate");
  if (f.netlist.empty()) {
    net = build_bridge_rectifier("dut", cfg.bench);
    table["dut"] = run.model(f.model).device();
    h.push_back("circuit bridge rectifier, model " + f.model);
  } else {
    net = parse_netlist(read_file(f.netlist));
    for (const auto& b : f.bindings) {
      const auto eq = b.find('=');
      if (eq == std::string::npos || eq == 0) throw InvalidArgument("simulate: --bind expects name=path, got '" + b + "'");
      table[b.substr(0, eq)] = run.model(b.substr(eq + 1)).device();
    }
    h.push_back("circuit " + f.netlist);
  }
  h.push_back(bench_summary(cfg.bench));
  h.push_back(solver_summary(cfg.solver));

  const auto r = transient(net, table, cfg.bench.t_end(), cfg.bench.dt(), cfg.solver, !f.cold);
  run.emit(to_csv(r, h));
  int worst = 0;
  for (int it : r.newton_iterations) worst = std::max(worst, it);
  std::cerr << r.times.size() << " time points, at most " << worst << " Newton iterations per step\n";
  if (f.netlist.empty()) {
    const auto vl = load_voltage(r);
    std::cerr << "load voltage in [" << fmt_double(*std::min_element(vl.begin(), vl.end())) << ", "
              << fmt_double(*std::max_element(vl.begin(), vl.end())) << "] V\n";
  }
  return 0;
}

struct CompareFlags {
  std::string a, b;
  std::optional<double> max_abs, max_rms;
};

int cmd_compare(Run& run, const CompareFlags& f) {
  const auto ta = parse_csv_table(read_file(f.a), f.a);
  const auto tb = parse_csv_table(read_file(f.b), f.b);
  const auto cmp = compare_tables(ta, tb);
  if (cmp.resampled) std::cerr << "warning: grids differ; " << f.b << " interpolated linearly onto " << f.a << '\n';
  std::ostringstream os;
  os << "column,max_abs,rms,points\n";
  bool exceeded = false;
  for (const auto& c : cmp.columns) {
    os << c.column << ',' << fmt_double(c.max_abs) << ',' << fmt_double(c.rms) << ',' << c.points << '\n';
    if (f.max_abs && c.max_abs > *f.max_abs) exceeded = true;
    if (f.max_rms && c.rms > *f.max_rms) exceeded = true;
  }
  if (cmp.columns.empty()) throw InvalidArgument("compare: no shared columns besides the abscissa");
  run.emit(os.str());
  if (exceeded) {
    std::cerr << "deviation threshold exceeded\n";
    return 2;
  }
  return 0;
}

struct SweepArchFlags {
  std::string data;
  bool full = false;
  std::optional<int> epochs;
};

int cmd_sweep_arch(Run& run, const SweepArchFlags& f) {
  override_with(run.cfg.mlp_epochs, f.epochs);
  const IVDataset ds = read_dataset(f.data);
  SweepOptions opts;
  opts.solver = run.cfg.solver;
  const auto grid = f.full ? full_grid() : reference_grid();
  std::size_t done = 0;
  const auto rows = sweep_architectures(ds, grid, run.cfg.train_config(), run.transform(), opts, [&](const SweepRow& r) {
    std::cerr << '[' << ++done << '/' << grid.size() << "] " << r.arch.name() << ' ' << r.status << '\n';
  });
  auto h = run.header(std::string("sweep-arch") + (f.full ? " --full" : ""));
  h.push_back("epochs " + std::to_string(run.cfg.mlp_epochs) + " learning_rate " + fmt_double(run.cfg.mlp_learning_rate) +
              " batch_size " + std::to_string(run.cfg.mlp_batch_size));
  run.emit(sweep_to_csv(rows, h));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven diode compact models: generate, fit, sweep, simulate, compare"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Run configuration file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output path (stdout when omitted)");
  app.add_flag("--deterministic", g.deterministic, "Omit the timestamp header line");

  GenerateFlags gen;
  auto* c_gen = app.add_subcommand("generate", "Sample the reference diode onto a uniform voltage grid");
  c_gen->add_option("--n", gen.n, "Number of samples");
  c_gen->add_option("--v-min", gen.v_min, "Lowest voltage [V]");
  c_gen->add_option("--v-max", gen.v_max, "Highest voltage [V]");
  c_gen->add_flag("--no-breakdown", gen.no_breakdown, "Drop the reverse breakdown term");

  FitFlags fit;
  auto* c_fit = app.add_subcommand("fit", "Fit a compact model to an I-V dataset");
  c_fit->add_option("--data", fit.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c_fit->add_option("--backend", fit.backend, "spline, gmls or mlp")->check(CLI::IsMember({"spline", "gmls", "mlp"}));
  c_fit->add_option("--order", fit.order, "GMLS polynomial order");
  c_fit->add_option("--arch", fit.arch, "Network architecture, e.g. M1-10-T-VI");
  c_fit->add_option("--epochs", fit.epochs, "Training epochs");
  c_fit->add_option("--learning-rate", fit.learning_rate, "Adam step size");
  c_fit->add_option("--batch-size", fit.batch_size, "Mini-batch size");

  SweepIvFlags siv;
  auto* c_siv = app.add_subcommand("sweep-iv", "Evaluate a model on a voltage grid in all three data views");
  c_siv->add_option("model", siv.model, "Model file or 'shockley'")->required();
  c_siv->add_option("--v-min", siv.v_min, "Lowest voltage [V]");
  c_siv->add_option("--v-max", siv.v_max, "Highest voltage [V]");
  c_siv->add_option("--n", siv.n, "Number of points")->capture_default_str();

  SimulateFlags sim;
  auto* c_sim = app.add_subcommand("simulate", "Run the bridge rectifier or a netlist transient");
  c_sim->add_option("model", sim.model, "Model file or 'shockley' for the bridge")->capture_default_str();
  c_sim->add_option("--netlist", sim.netlist, "Netlist file instead of the built-in bridge")->check(CLI::ExistingFile);
  c_sim->add_option("--bind", sim.bindings, "Netlist model binding name=path or name=shockley (repeatable)");
  c_sim->add_flag("--cold", sim.cold, "Start every step from zero instead of the previous solution");
  sim.bench.add(c_sim);

  CompareFlags cmp;
  auto* c_cmp = app.add_subcommand("compare", "Report deviations between two result CSV files");
  c_cmp->add_option("a", cmp.a, "Reference CSV")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("b", cmp.b, "Candidate CSV")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--max-abs", cmp.max_abs, "Fail (exit 2) above this maximum deviation");
  c_cmp->add_option("--max-rms", cmp.max_rms, "Fail (exit 2) above this RMS deviation");

  SweepArchFlags sar;
  auto* c_sar = app.add_subcommand("sweep-arch", "Train and check a grid of network architectures");
  c_sar->add_option("--data", sar.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  c_sar->add_flag("--full", sar.full, "Use the 240-configuration grid");
  c_sar->add_option("--epochs", sar.epochs, "Training epochs per configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    Run run(g);
    if (c_sim->parsed() && sim.netlist.empty() && !sim.bindings.empty()) throw InvalidArgument("simulate: --bind needs --netlist");
    if (*c_gen) return cmd_generate(run, gen);
    if (*c_fit) return cmd_fit(run, fit);
    if (*c_siv) return cmd_sweep_iv(run, siv);
    if (*c_sim) return cmd_simulate(run, sim);
    if (*c_cmp) return cmd_compare(run, cmp);
    return cmd_sweep_arch(run, sar);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
