// Copyright 2026 The slmfg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// slmfg solve|validate|sample
//
// Exit codes: 0 success (solve: converged), 1 configuration or usage error,
// 2 solve finished without converging.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "slmfg/config.hpp"
#include "slmfg/slmfg.hpp"

namespace fs = std::filesystem;
using namespace slmfg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNotConverged = 2;

struct Overrides {
  std::string config_path;
  std::string out_dir;
  int threads = 0;
  long long seed = -1;
  std::string deltas;
  int max_iters = 0;
  long long count = -1;
  bool dump_kernels = false;
  bool dump_values = false;
  bool dump_levelsets = false;
  bool dump_paths = false;
};

std::vector<double> parse_deltas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0') throw ConfigError("--deltas: bad value '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

// Precedence: command-line flag, then SLMFG_THREADS, then the config file.
void apply(RunConfig& c, const Overrides& o) {
  if (const char* env = std::getenv("SLMFG_THREADS")) {
    const int n = std::atoi(env);
    if (n < 1) throw ConfigError("SLMFG_THREADS must be a positive integer");
    c.threads = n;
  }
  if (o.threads > 0) c.threads = o.threads;
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.deltas.empty()) c.deltas = parse_deltas(o.deltas);
  if (o.max_iters > 0) c.max_iters = o.max_iters;
  if (o.count >= 0) c.sample_count = static_cast<std::uint64_t>(o.count);
  c.dump_kernels = c.dump_kernels || o.dump_kernels;
  c.dump_values = c.dump_values || o.dump_values;
  c.dump_levelsets = c.dump_levelsets || o.dump_levelsets;
  c.dump_paths = c.dump_paths || o.dump_paths;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write '" + p.string() + "'");
  return os;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_validation(const ValidationReport& r, const Discretization& d) {
  std::printf("dt = %.6g, dx = %.6g, dx/dt = %.6g\n", d.dt, d.dx, r.dx_over_dt);
  std::printf("c_K estimate = %.6g, admissible dx/dt <= %.6g (max dx %.6g)\n",
              r.c_k_estimate, r.admissible_ratio, r.max_admissible_dx);
  std::printf("min |det B1| = %.6g\n", r.min_abs_det_b1);
  std::printf("m0 mass = %.12g\n", r.m0_mass);
  std::printf("admissible: %s\n", r.in_delta_hat ? "yes" : "no");
}

template <int D, int R>
int solve(const RunConfig& cfg, const ProblemSpec<D, R>& problem) {
  const auto t0 = std::chrono::steady_clock::now();
  const Discretization disc = validated(problem, cfg.discretization());
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  open_out(out / "config.json") << emit_config(cfg);

  const LevelSets<D> levels = build_level_sets(problem, disc);
  std::fprintf(stderr, "level sets: %zu nodes total, |S_0| = %zu, |S_N| = %zu, C_inf = %.6g\n",
               levels.total_nodes(), levels[0].size(), levels[disc.n_t].size(),
               levels.bounding_radius);
  if (cfg.dump_levelsets) {
    auto os = open_out(out / "levelsets.csv");
    write_level_sets_csv(os, levels);
  }

  const BestResponse<D, R> br(problem, disc, levels, cfg.threads);
  FPOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.picard = cfg.picard;
  opts.on_iteration = [](int n, double e) {
    std::fprintf(stderr, "  iteration %d: e = %.6e\n", n, e);
  };
  const FPReport rep = tolerance_schedule_run(br, br.initial_guess(), cfg.deltas, opts);

  {
    auto os = open_out(out / "flow.csv");
    write_flow_csv(os, rep.final_flow, levels, disc.dt);
  }
  {
    auto os = open_out(out / "error_trace.csv");
    os << "iteration,stage,delta,error\n";
    std::size_t i = 0;
    char buf[64];
    for (std::size_t s = 0; s < rep.stages.size(); ++s) {
      for (int n = 1; n <= rep.stages[s].iterations; ++n, ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", rep.error_trace[i]);
        os << n << ',' << s + 1 << ',' << rep.stages[s].delta << ',' << buf << '\n';
      }
    }
  }

  // The kernel induced by the returned flow: the chain whose marginals are
  // br(final flow), used for dumps, sampling and the saturation check.
  const ValuePolicy<D, R> vp = br.sweep(rep.final_flow);
  const double saturation =
      disc.epsilon > 0.0 ? saturation_report(vp, cfg.threads) : 0.0;
  if (cfg.dump_values) {
    auto os = open_out(out / "values.csv");
    write_values_csv(os, vp);
  }
  if (cfg.dump_kernels) {
    auto os = open_out(out / "kernel.csv");
    write_kernel_csv(os, assemble_kernel(vp));
  }
  if (cfg.dump_paths) {
    const auto paths = sample_trajectories<D>(br.initial_marginal(), vp, levels, disc.dt,
                                              cfg.sample_count, cfg.seed, cfg.threads);
    auto os = open_out(out / "paths.csv");
    write_paths_csv(os, paths);
  }

  std::ostringstream report;
  report << "problem: " << problem.name << "\n";
  report << "n_t: " << disc.n_t << "\nn_s: " << disc.n_s << "\nepsilon: " << disc.epsilon
         << "\ncontrol_bound: " << disc.control_bound << "\nc_k_estimate: " << disc.c_k_estimate
         << "\n";
  report << "level_set_nodes: " << levels.total_nodes() << "\nbounding_radius: "
         << levels.bounding_radius << "\n";
  report << format_report(rep);
  report << "saturation: " << saturation << "\n";
  if (saturation >= 0.01) {
    report << "warning: Gibbs mass concentrates on |alpha| >= 0.95 control_bound; "
              "increase control_bound\n";
  }
  report << "rng: " << kRngName << "\n";
  report << "wall_seconds: " << seconds_since(t0) << "\n";
  open_out(out / "report.txt") << report.str();
  std::cout << report.str();
  return rep.converged ? kExitOk : kExitNotConverged;
}

template <int D, int R>
int validate_cmd(const RunConfig& cfg, const ProblemSpec<D, R>& problem) {
  const Discretization d = cfg.discretization();
  const ValidationReport r = inspect(problem, d);
  print_validation(r, d);
  if (!r.m0_normalized) std::printf("initial density is not normalized\n");
  if (!r.ok()) return kExitConfig;
  Discretization dv = d;
  dv.c_k_estimate = r.c_k_estimate;
  const std::vector<double> sizes = forecast_level_sizes(problem, dv);
  double total = 0.0;
  for (double s : sizes) total += s;
  std::printf("forecast |S_0| = %.0f, |S_%d| = %.0f, sum = %.0f\n", sizes.front(), d.n_t,
              sizes.back(), total);
  return kExitOk;
}

template <int D, int R>
int sample_cmd(const RunConfig& cfg, const ProblemSpec<D, R>& problem,
               const fs::path& dir) {
  const Discretization disc = validated(problem, cfg.discretization());
  const LevelSets<D> levels = build_level_sets(problem, disc);
  std::ifstream flow_in(dir / "flow.csv");
  if (!flow_in) throw ConfigError("missing solve artifact '" + (dir / "flow.csv").string() + "'");
  const Flow flow = read_flow_csv<D>(flow_in, levels);
  const std::vector<double> m0 = discretize_initial<D>(problem.m0, levels);

  std::vector<SampledPath<D>> paths;
  std::ifstream ker_in(dir / "kernel.csv");
  if (ker_in) {
    std::vector<std::size_t> sizes;
    for (const auto& s : levels.sets) sizes.push_back(s.size());
    const TransitionKernel ker = read_kernel_csv(ker_in, sizes);
    paths = sample_trajectories<D>(m0, ker, levels, disc.dt, cfg.sample_count, cfg.seed,
                                   cfg.threads);
  } else {
    const ValuePolicy<D, R> vp = backward_sweep(problem, disc, levels, flow, cfg.threads);
    paths = sample_trajectories<D>(m0, vp, levels, disc.dt, cfg.sample_count, cfg.seed,
                                   cfg.threads);
  }
  auto os = open_out(dir / "paths.csv");
  write_paths_csv(os, paths);
  std::printf("wrote %zu paths to %s\n", paths.size(), (dir / "paths.csv").c_str());
  return kExitOk;
}

template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "structural error: %s\n", e.what());
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
  } catch (const CoverageError& e) {
    std::fprintf(stderr, "coverage error: %s\n", e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-Lagrangian solver for deterministic mean field games"};
  app.require_subcommand(1);
  Overrides o;

  auto* solve_cmd = app.add_subcommand("solve", "run the fictitious-play schedule");
  solve_cmd->add_option("--config", o.config_path, "JSON run configuration")->required();
  solve_cmd->add_option("--out", o.out_dir, "output directory");
  solve_cmd->add_option("--threads", o.threads, "worker threads");
  solve_cmd->add_option("--seed", o.seed, "sampling seed");
  solve_cmd->add_option("--deltas", o.deltas, "comma-separated tolerance schedule");
  solve_cmd->add_option("--max-iters", o.max_iters, "iteration cap per stage");
  solve_cmd->add_flag("--dump-kernels", o.dump_kernels, "write kernel.csv");
  solve_cmd->add_flag("--dump-values", o.dump_values, "write values.csv");
  solve_cmd->add_flag("--dump-levelsets", o.dump_levelsets, "write levelsets.csv");
  solve_cmd->add_flag("--dump-paths", o.dump_paths, "write paths.csv");

  auto* validate = app.add_subcommand("validate", "check the configuration only");
  validate->add_option("--config", o.config_path, "JSON run configuration")->required();

  auto* sample = app.add_subcommand("sample", "sample paths from a solve directory");
  sample->add_option("--out", o.out_dir, "solve output directory")->required();
  sample->add_option("--config", o.config_path, "configuration (default: <out>/config.json)");
  sample->add_option("--count", o.count, "number of paths");
  sample->add_option("--seed", o.seed, "sampling seed");
  sample->add_option("--threads", o.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  return guarded([&]() -> int {
    if (sample->parsed() && o.config_path.empty()) {
      o.config_path = (fs::path(o.out_dir) / "config.json").string();
      if (!fs::exists(o.config_path)) {
        throw ConfigError("missing solve artifact '" + o.config_path + "'");
      }
    }
    RunConfig cfg = load_config(o.config_path);
    apply(cfg, o);
    const AnyProblem problem = make_problem(cfg);
    return std::visit(
        [&](const auto& p) -> int {
          if (solve_cmd->parsed()) return solve(cfg, p);
          if (validate->parsed()) return validate_cmd(cfg, p);
          return sample_cmd(cfg, p, fs::path(o.out_dir));
        },
        problem);
  });
}
