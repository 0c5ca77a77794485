#include "gmdyn/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "gmdyn/analysis.hpp"
#include "gmdyn/errors.hpp"
#include "gmdyn/kernel_io.hpp"
#include "gmdyn/parallel.hpp"
#include "gmdyn/rng.hpp"
#include "gmdyn/simulator.hpp"
#include "gmdyn/version.hpp"

namespace gmdyn {

namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

std::vector<const std::vector<double>*> columns(const MetricsSeries& s) {
  return {&s.m, &s.q, &s.train_loss, &s.train_acc, &s.gen_error};
}

std::vector<std::vector<double>*> columns(MetricsSeries& s) {
  return {&s.m, &s.q, &s.train_loss, &s.train_acc, &s.gen_error};
}

constexpr const char* kColumnNames[] = {"m", "q", "train_loss", "train_acc", "gen_err"};

/// Accumulates manifest comment lines.
struct Manifest {
  std::string mode;
  std::vector<std::pair<std::string, std::string>> entries;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void add(std::string key, std::string value) { entries.emplace_back(std::move(key), std::move(value)); }

  void write(const fs::path& dir, const ExperimentConfig& cfg) const {
    std::ostringstream o;
    o << "# gmdyn run manifest\n";
    o << "# version = " << kVersion << '\n';
    o << "# mode = " << mode << '\n';
    o << "# reproduce: gmdyn " << mode << " --config manifest.txt --out <dir>\n";
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o << "# wall_time_s = " << fmt(wall) << '\n';
    for (const auto& [k, v] : entries) o << "# " << k << " = " << v << '\n';
    o << to_text(cfg);
    write_text(dir / "manifest.txt", o.str());
  }
};

void record_diagnostics(Manifest& man, const DmftDiagnostics& diag, const std::string& prefix = "") {
  man.add(prefix + "dmft_iterations", std::to_string(diag.iterations));
  man.add(prefix + "dmft_residual", fmt(diag.residual));
  man.add(prefix + "dmft_converged", diag.converged ? "true" : "false");
  man.add(prefix + "dmft_residual_alert", diag.residual_alert ? "true" : "false");
  if (diag.noise_jitter > 0.0) man.add(prefix + "dmft_noise_jitter", fmt(diag.noise_jitter));
}

void write_audit(const fs::path& path, const std::vector<AuditRow>& rows) {
  std::ostringstream o;
  o << "replica,t,closed_form,monte_carlo,std_error\n";
  for (const auto& r : rows) {
    o << r.replica << ',' << fmt(r.t) << ',' << fmt(r.closed_form) << ',' << fmt(r.monte_carlo) << ','
      << fmt(r.std_error) << '\n';
  }
  write_text(path, o.str());
}

int do_simulate(const ExperimentConfig& cfg, const fs::path& dir, Manifest& man) {
  const SeedAverage avg = simulate_seeds(cfg);
  for (std::size_t k = 0; k < avg.per_seed.size(); ++k) {
    write_curves_csv(dir / ("curves_seed" + std::to_string(k) + ".csv"), avg.per_seed[k]);
  }
  write_curves_csv(dir / "curves.csv", avg.mean, &avg.std_error);
  if (!avg.audit.empty()) write_audit(dir / "audit.csv", avg.audit);
  man.add("n_replicas", std::to_string(avg.per_seed.size()));
  return kExitOk;
}

int do_dmft(const ExperimentConfig& cfg, const fs::path& dir, Manifest& man, DmftResult* out = nullptr) {
  DmftResult res = run_dmft(cfg);
  write_curves_csv(dir / "curves.csv", res.metrics);
  save_kernels(dir / "kernels.bin",
               KernelCheckpoint{KernelFileMeta::from_run(cfg.mixture, cfg.run, cfg.solver.mask_mode),
                                res.kernels});
  if (cfg.kernels_csv) save_kernels_csv(dir / "kernels.csv", res.kernels, cfg.run.eta);
  record_diagnostics(man, res.diagnostics);
  const int status = res.diagnostics.converged ? kExitOk : kExitNonConvergence;
  if (out) *out = std::move(res);
  return status;
}

int do_compare(const ExperimentConfig& cfg, const fs::path& dir, Manifest& man) {
  ensure_dir(dir / "simulate");
  ensure_dir(dir / "dmft");
  Manifest sim_man{"simulate", {}, man.start};
  do_simulate(cfg, dir / "simulate", sim_man);
  sim_man.write(dir / "simulate", cfg);

  Manifest dmft_man{"dmft", {}, man.start};
  DmftResult res;
  const int status = do_dmft(cfg, dir / "dmft", dmft_man, &res);
  dmft_man.write(dir / "dmft", cfg);
  record_diagnostics(man, res.diagnostics);

  const MetricsSeries sim = read_curves_csv(dir / "simulate" / "curves.csv");
  std::ostringstream o;
  o << "observable,max_abs_dev,mean_abs_dev,argmax_time\n";
  const auto report = [&](const char* name, const std::vector<double>& a, const std::vector<double>& b) {
    const CurveDeviation dev = curve_compare(CurvePair{res.metrics.times, a, b, name});
    o << name << ',' << fmt(dev.max_abs_dev) << ',' << fmt(dev.mean_abs_dev) << ','
      << fmt(dev.argmax_time) << '\n';
    return dev;
  };
  const CurveDeviation gen = report("gen_err", sim.gen_error, res.metrics.gen_error);
  report("m", sim.m, res.metrics.m);
  report("q", sim.q, res.metrics.q);
  report("train_acc", sim.train_acc, res.metrics.train_acc);
  write_text(dir / "compare.txt", o.str());
  man.add("gen_err_max_abs_dev", fmt(gen.max_abs_dev));
  return status;
}

int do_oracle(const ExperimentConfig& cfg, const fs::path& dir, Manifest& man, std::ostream& log) {
  const double err = oracle_error(cfg.mixture.delta, cfg.mixture.rho);
  std::ostringstream o;
  o << "delta = " << fmt(cfg.mixture.delta) << '\n';
  o << "rho = " << fmt(cfg.mixture.rho) << '\n';
  o << "oracle_error = " << fmt(err) << '\n';
  write_text(dir / "oracle.txt", o.str());
  log << "oracle_error = " << fmt(err) << '\n';
  man.add("oracle_error", fmt(err));
  return kExitOk;
}

int dispatch(RunMode mode, const ExperimentConfig& cfg, const fs::path& dir, Manifest& man,
             std::ostream& log) {
  switch (mode) {
    case RunMode::Simulate:
      return do_simulate(cfg, dir, man);
    case RunMode::Dmft:
      return do_dmft(cfg, dir, man);
    case RunMode::Compare:
      return do_compare(cfg, dir, man);
    case RunMode::Oracle:
      return do_oracle(cfg, dir, man, log);
    case RunMode::Sweep:
      break;
  }
  throw ConfigError("nested sweeps are not supported");
}

int do_sweep(const ExperimentConfig& cfg, const fs::path& dir, Manifest& man, std::ostream& log) {
  if (cfg.sweep_key.empty()) throw ConfigError("sweep mode needs sweep_key and sweep_values");
  int status = kExitOk;
  for (const auto& value : cfg.sweep_values) {
    ExperimentConfig point = cfg;
    point.sweep_key.clear();
    point.sweep_values.clear();
    set_config_value(point, cfg.sweep_key, value);
    point.validate();
    const fs::path sub = dir / (cfg.sweep_key + "=" + value);
    ensure_dir(sub);
    Manifest point_man{std::string(mode_name(cfg.sweep_mode)), {}, std::chrono::steady_clock::now()};
    const int s = dispatch(cfg.sweep_mode, point, sub, point_man, log);
    point_man.write(sub, point);
    man.add("point " + cfg.sweep_key + "=" + value, s == kExitOk ? "ok" : "non-converged");
    log << cfg.sweep_key << " = " << value << (s == kExitOk ? ": ok\n" : ": not converged\n");
    if (s != kExitOk) status = s;
  }
  return status;
}

}  // namespace

std::uint64_t replica_seed(std::uint64_t master, std::size_t k) {
  return derive_seed(master, Stream::Seed, k);
}

SeedAverage simulate_seeds(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_seeds;
  SeedAverage out;
  out.per_seed.resize(n);
  std::vector<std::vector<AuditRow>> audits(n);
  const std::size_t steps = cfg.run.n_steps();

  parallel_for(n, cfg.workers, [&](std::size_t k) {
    RunParams params = cfg.run;
    params.seed = replica_seed(cfg.run.seed, k);
    StepObserver observer;
    if (cfg.n_test > 0) {
      observer = [&, k, params](std::size_t step, const Eigen::VectorXd& w) {
        if (step % cfg.audit_stride != 0 && step != steps) return;
        RandomStream rng(params.seed, Stream::Test, step);
        const McEstimate mc = mc_generalization(w, cfg.mixture, cfg.n_test, rng);
        const double d = static_cast<double>(w.size());
        audits[k].push_back(AuditRow{k, static_cast<double>(step) * params.eta,
                                     gen_error(cfg.mixture, w.sum() / d, w.squaredNorm() / d),
                                     mc.value, mc.std_error});
      };
    }
    out.per_seed[k] = run_training(cfg.mixture, params, observer).metrics;
  });
  for (auto& rows : audits) out.audit.insert(out.audit.end(), rows.begin(), rows.end());

  const std::size_t len = out.per_seed.front().size();
  out.mean.resize(len);
  out.std_error.resize(len);
  out.mean.times = out.per_seed.front().times;
  out.std_error.times = out.mean.times;
  const auto mean_cols = columns(out.mean);
  const auto se_cols = columns(out.std_error);
  const double count = static_cast<double>(n);
  for (std::size_t c = 0; c < mean_cols.size(); ++c) {
    for (std::size_t i = 0; i < len; ++i) {
      double sum = 0.0;
      for (const auto& s : out.per_seed) sum += (*columns(s)[c])[i];
      const double mean = sum / count;
      double ss = 0.0;
      for (const auto& s : out.per_seed) {
        const double dv = (*columns(s)[c])[i] - mean;
        ss += dv * dv;
      }
      (*mean_cols[c])[i] = mean;
      (*se_cols[c])[i] = n > 1 ? std::sqrt(ss / (count - 1.0) / count) : 0.0;
    }
  }
  return out;
}

DmftResult run_dmft(const ExperimentConfig& cfg) {
  cfg.validate();
  SolverConfig solver = cfg.solver;
  solver.workers = cfg.workers;
  if (cfg.warm_start) {
    const KernelCheckpoint cp = load_kernels(*cfg.warm_start);
    const KernelFileMeta want = KernelFileMeta::from_run(cfg.mixture, cfg.run, solver.mask_mode);
    if (!(cp.meta == want)) {
      throw ConfigError("warm_start: kernel file " + *cfg.warm_start +
                        " was produced with different run constants");
    }
    return solve_dmft(cfg.mixture, cfg.run, solver, &cp.kernels);
  }
  return solve_dmft(cfg.mixture, cfg.run, solver);
}

void write_curves_csv(const fs::path& path, const MetricsSeries& s, const MetricsSeries* se) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  std::fprintf(f, "# gmdyn-curves v%d\n", kCurvesSchemaVersion);
  std::fprintf(f, "t");
  for (const char* name : kColumnNames) std::fprintf(f, ",%s", name);
  if (se) {
    for (const char* name : kColumnNames) std::fprintf(f, ",%s_stderr", name);
  }
  std::fprintf(f, "\n");
  const auto cols = columns(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::fprintf(f, "%.17g", s.times[i]);
    for (const auto* c : cols) std::fprintf(f, ",%.17g", (*c)[i]);
    if (se) {
      for (const auto* c : columns(*se)) std::fprintf(f, ",%.17g", (*c)[i]);
    }
    std::fprintf(f, "\n");
  }
  const bool ok = std::ferror(f) == 0;
  if (std::fclose(f) != 0 || !ok) throw IoError("write failed for " + path.string());
}

MetricsSeries read_curves_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "# gmdyn-curves v" + std::to_string(kCurvesSchemaVersion)) {
    throw IoError(path.string() + ": unsupported curves schema '" + line + "'");
  }
  std::getline(in, line);
  if (!line.starts_with("t,m,q,train_loss,train_acc,gen_err")) {
    throw IoError(path.string() + ": unexpected header '" + line + "'");
  }
  MetricsSeries s;
  std::size_t row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path.string() + ": bad number on line " + std::to_string(row));
      }
    }
    if (vals.size() < 6) throw IoError(path.string() + ": short row on line " + std::to_string(row));
    s.times.push_back(vals[0]);
    auto cols = columns(s);
    for (std::size_t c = 0; c < cols.size(); ++c) cols[c]->push_back(vals[c + 1]);
  }
  return s;
}

int run_mode(RunMode mode, const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  try {
    cfg.validate();
    ensure_dir(out_dir);
    Manifest man{std::string(mode_name(mode)), {}, std::chrono::steady_clock::now()};
    int status = kExitOk;
    try {
      status = mode == RunMode::Sweep ? do_sweep(cfg, out_dir, man, log)
                                      : dispatch(mode, cfg, out_dir, man, log);
    } catch (const DivergenceError& e) {
      man.add("error", e.what());
      man.write(out_dir, cfg);
      throw;
    } catch (const NonPsdKernelError& e) {
      man.add("error", e.what());
      man.write(out_dir, cfg);
      throw;
    }
    man.add("status", status == kExitOk ? "ok" : "non-converged");
    man.write(out_dir, cfg);
    if (status == kExitNonConvergence) {
      log << "error: DMFT did not converge; outputs written, see manifest.txt\n";
    }
    return status;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    log << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    log << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DivergenceError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kExitNonConvergence;
  } catch (const NonPsdKernelError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kExitNonConvergence;
  } catch (const std::domain_error& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace gmdyn
