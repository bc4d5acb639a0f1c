#pragma once

// Architecture sweep: train a grid of network configurations on one dataset
// and record fit quality plus physicality diagnostics for each.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dcm/analysis.hpp"
#include "dcm/circuit.hpp"
#include "dcm/mlp.hpp"

namespace dcm {

/// The sixteen configurations of the reference architecture table.
inline std::vector<MlpArchitecture> reference_grid() {
  std::vector<MlpArchitecture> grid;
  for (const char* name : {"M1-50-E", "M2-50-E", "M1-50-S", "M2-50-S", "M1-50-T", "M1-50-S-neg", "M2-50-S-neg",
                           "M1-10-E-VI", "M2-10-E-VI", "M1-10-E-VI-neg", "M2-10-E-VI-neg", "M1-10-T-VI", "M2-10-T-VI",
                           "M2-25-T-VI", "M2-50-T-VI", "M2-100-T-VI"}) {
    grid.push_back(MlpArchitecture::parse(name));
  }
  return grid;
}

/// Layers x widths x activations x constraint x (transform v?) x (transform i?).
inline std::vector<MlpArchitecture> full_grid() {
  std::vector<MlpArchitecture> grid;
  for (int layers : {1, 2}) {
    for (int width : {5, 10, 25, 50, 100}) {
      for (Activation act : {Activation::elu, Activation::sigmoid, Activation::tanh}) {
        for (bool nonneg : {true, false}) {
          for (TransformMode space : {TransformMode::raw, TransformMode::v_only, TransformMode::i_only, TransformMode::vi}) {
            grid.push_back({layers, width, act, nonneg, space});
          }
        }
      }
    }
  }
  return grid;
}

struct SweepOptions {
  double zero_crossing_tolerance = 0.05;  // volts from the data's own crossing
  std::size_t check_samples = 4001;
  BenchParams bench{.periods = 1.0, .steps_per_period = 200};
  SolveOptions solver;
};

struct SweepRow {
  MlpArchitecture arch;
  double mse = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> zero_crossing_v;
  bool monotone = false;
  bool rectifier_converged = false;
  std::string status;
};

inline SweepRow evaluate_configuration(const IVDataset& ds, const MlpArchitecture& arch, const TrainConfig& cfg,
                                       const TransformParams& tp, const SweepOptions& opts) {
  SweepRow row;
  row.arch = arch;
  MlpModel model;
  try {
    model = train(ds, arch, cfg, tp);
  } catch (const std::exception& e) {
    row.status = std::string("train-failed: ") + e.what();
    std::replace(row.status.begin(), row.status.end(), ',', ';');
    return row;
  }
  row.mse = model.final_mse();
  const CurrentFn fn = [&model](double v) { return model.eval(v); };
  std::vector<std::string> flags;

  const auto zc = find_zero_crossings(fn, ds.v_min(), ds.v_max(), opts.check_samples);
  row.zero_crossing_v = zc.first;
  const auto oracle = dataset_zero_crossing(ds);
  if (!zc.first) {
    flags.push_back("no-zero-crossing");
  } else if (oracle && std::abs(*zc.first - *oracle) > opts.zero_crossing_tolerance) {
    flags.push_back("nonphysical-zero-crossing");
  }
  if (zc.count > 1) flags.push_back("multiple-zero-crossings");

  row.monotone = monotonicity_violations(fn, ds.v_min(), ds.v_max(), opts.check_samples) == 0;
  if (!row.monotone) flags.push_back("non-monotone");

  try {
    const Netlist net = build_bridge_rectifier("dut", opts.bench);
    const ModelTable table{{"dut", fn}};
    transient(net, table, opts.bench.t_end(), opts.bench.dt(), opts.solver);
    row.rectifier_converged = true;
  } catch (const std::exception&) {
    flags.push_back("rectifier-failed");
  }

  if (flags.empty()) {
    row.status = "ok";
  } else {
    for (std::size_t k = 0; k < flags.size(); ++k) row.status += (k ? ";" : "") + flags[k];
  }
  return row;
}

/// Trains every configuration in turn; failures are recorded per row.
inline std::vector<SweepRow> sweep_architectures(const IVDataset& ds, const std::vector<MlpArchitecture>& grid,
                                                 const TrainConfig& cfg, const TransformParams& tp, const SweepOptions& opts = {},
                                                 const std::function<void(const SweepRow&)>& progress = {}) {
  if (grid.empty()) throw InvalidArgument("sweep: architecture grid is empty");
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const auto& arch : grid) {
    rows.push_back(evaluate_configuration(ds, arch, cfg, tp, opts));
    if (progress) progress(rows.back());
  }
  return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "name,activation,layers,width,space,constraint,mse,zero_crossing_v,monotone,rectifier_converged,status\n";
  for (const auto& r : rows) {
    os << r.arch.name() << ',' << to_string(r.arch.activation) << ',' << r.arch.hidden_layers << ',' << r.arch.width << ','
       << to_string(r.arch.space) << ',' << (r.arch.non_negative ? "non-negative" : "none") << ','
       << (std::isnan(r.mse) ? "" : fmt_double(r.mse)) << ',' << (r.zero_crossing_v ? fmt_double(*r.zero_crossing_v) : "none")
       << ',' << (r.monotone ? "true" : "false") << ',' << (r.rectifier_converged ? "true" : "false") << ',' << r.status << '\n';
  }
  return os.str();
}

}  // namespace dcm
