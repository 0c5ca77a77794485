#include "gmdyn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "gmdyn/errors.hpp"

namespace gmdyn {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw ConfigError(std::string(key) + " = " + std::string(value) + ": " + std::string(why));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "expected a finite number");
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    bad_value(key, v, "expected a non-negative integer");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "expected true or false");
}

double positive(std::string_view key, std::string_view v) {
  const double x = to_double(key, v);
  if (!(x > 0.0)) bad_value(key, v, "must be > 0");
  return x;
}

double non_negative(std::string_view key, std::string_view v) {
  const double x = to_double(key, v);
  if (!(x >= 0.0)) bad_value(key, v, "must be >= 0");
  return x;
}

std::size_t at_least_one(std::string_view key, std::string_view v) {
  const std::uint64_t x = to_uint(key, v);
  if (x < 1) bad_value(key, v, "must be >= 1");
  return static_cast<std::size_t>(x);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"model",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v == "two_cluster") {
           c.mixture.kind = ClusterKind::TwoCluster;
         } else if (v == "three_cluster") {
           c.mixture.kind = ClusterKind::ThreeCluster;
         } else {
           bad_value(k, v, "expected two_cluster or three_cluster");
         }
       }},
      {"delta", [](ExperimentConfig& c, auto k, auto v) { c.mixture.delta = positive(k, v); }},
      {"door_onset",
       [](ExperimentConfig& c, auto k, auto v) { c.mixture.door_onset = positive(k, v); }},
      {"rho",
       [](ExperimentConfig& c, auto k, auto v) {
         const double x = to_double(k, v);
         if (!(x > 0.0 && x < 1.0)) bad_value(k, v, "must lie in (0, 1)");
         c.mixture.rho = x;
       }},
      {"alpha", [](ExperimentConfig& c, auto k, auto v) { c.run.alpha = non_negative(k, v); }},
      {"d", [](ExperimentConfig& c, auto k, auto v) { c.run.d = at_least_one(k, v); }},
      {"lambda", [](ExperimentConfig& c, auto k, auto v) { c.run.lambda = non_negative(k, v); }},
      {"eta", [](ExperimentConfig& c, auto k, auto v) { c.run.eta = positive(k, v); }},
      {"b",
       [](ExperimentConfig& c, auto k, auto v) {
         const double x = to_double(k, v);
         if (!(x > 0.0 && x <= 1.0)) bad_value(k, v, "must lie in (0, 1]");
         c.run.b = x;
       }},
      {"tau", [](ExperimentConfig& c, auto k, auto v) { c.run.tau = positive(k, v); }},
      {"inv_tau", [](ExperimentConfig& c, auto k, auto v) { c.run.tau = 1.0 / positive(k, v); }},
      {"R", [](ExperimentConfig& c, auto k, auto v) { c.run.R = non_negative(k, v); }},
      {"horizon", [](ExperimentConfig& c, auto k, auto v) { c.run.horizon = positive(k, v); }},
      {"mask",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v == "full_batch") {
           c.run.mask_scheme = MaskScheme::FullBatch;
         } else if (v == "sgd") {
           c.run.mask_scheme = MaskScheme::SGD;
         } else if (v == "persistent") {
           c.run.mask_scheme = MaskScheme::PersistentSGD;
         } else {
           bad_value(k, v, "expected full_batch, sgd or persistent");
         }
         c.solver.mask_mode = dmft_mask_mode(c.run.mask_scheme);
       }},
      {"tau_policy",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v == "strict") {
           c.run.tau_policy = TauPolicy::Strict;
         } else if (v == "clamp") {
           c.run.tau_policy = TauPolicy::Clamp;
         } else {
           bad_value(k, v, "expected strict or clamp");
         }
       }},
      {"seed", [](ExperimentConfig& c, auto k, auto v) { c.run.seed = to_uint(k, v); }},
      {"n_seeds", [](ExperimentConfig& c, auto k, auto v) { c.n_seeds = at_least_one(k, v); }},
      {"n_test",
       [](ExperimentConfig& c, auto k, auto v) { c.n_test = static_cast<std::size_t>(to_uint(k, v)); }},
      {"audit_stride",
       [](ExperimentConfig& c, auto k, auto v) { c.audit_stride = at_least_one(k, v); }},
      {"workers",
       [](ExperimentConfig& c, auto k, auto v) {
         c.workers = at_least_one(k, v);
         c.solver.workers = c.workers;
       }},
      {"n_paths", [](ExperimentConfig& c, auto k, auto v) { c.solver.n_paths = at_least_one(k, v); }},
      {"damping",
       [](ExperimentConfig& c, auto k, auto v) {
         const double x = to_double(k, v);
         if (!(x > 0.0 && x <= 1.0)) bad_value(k, v, "must lie in (0, 1]");
         c.solver.damping = x;
       }},
      {"tol", [](ExperimentConfig& c, auto k, auto v) { c.solver.tol = positive(k, v); }},
      {"max_iters",
       [](ExperimentConfig& c, auto k, auto v) { c.solver.max_iters = at_least_one(k, v); }},
      {"m0", [](ExperimentConfig& c, auto k, auto v) { c.solver.m0 = to_double(k, v); }},
      {"d_ref", [](ExperimentConfig& c, auto k, auto v) { c.solver.d_ref = positive(k, v); }},
      {"antithetic",
       [](ExperimentConfig& c, auto k, auto v) { c.solver.antithetic = to_bool(k, v); }},
      {"kernels_csv", [](ExperimentConfig& c, auto k, auto v) { c.kernels_csv = to_bool(k, v); }},
      {"warm_start",
       [](ExperimentConfig& c, auto, auto v) { c.warm_start = std::string(v); }},
      {"sweep_key",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v.starts_with("sweep_") || !setters().contains(v)) {
           bad_value(k, v, "not a sweepable key");
         }
         c.sweep_key = std::string(v);
       }},
      {"sweep_values",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         std::vector<std::string> values;
         std::string_view rest = v;
         while (true) {
           const auto comma = rest.find(',');
           const std::string_view item = trim(rest.substr(0, comma));
           if (item.empty()) bad_value(k, v, "empty entry in comma-separated list");
           values.emplace_back(item);
           if (comma == std::string_view::npos) break;
           rest = rest.substr(comma + 1);
         }
         c.sweep_values = std::move(values);
       }},
      {"sweep_mode",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const auto mode = parse_mode(v);
         if (!mode || *mode == RunMode::Sweep || *mode == RunMode::Oracle) {
           bad_value(k, v, "expected simulate, dmft or compare");
         }
         c.sweep_mode = *mode;
       }},
  };
  return table;
}

}  // namespace

std::string_view mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Simulate:
      return "simulate";
    case RunMode::Dmft:
      return "dmft";
    case RunMode::Compare:
      return "compare";
    case RunMode::Oracle:
      return "oracle";
    case RunMode::Sweep:
      return "sweep";
  }
  return "simulate";
}

std::optional<RunMode> parse_mode(std::string_view name) {
  for (RunMode m : {RunMode::Simulate, RunMode::Dmft, RunMode::Compare, RunMode::Oracle,
                    RunMode::Sweep}) {
    if (mode_name(m) == name) return m;
  }
  return std::nullopt;
}

const std::vector<std::string>& required_keys() {
  static const std::vector<std::string> keys = {"model", "delta", "alpha", "d", "eta", "R", "horizon"};
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  if (value.empty()) throw ConfigError(std::string(key) + ": missing value");
  it->second(cfg, key, value);
}

void ExperimentConfig::validate() const {
  if (run.mask_scheme == MaskScheme::FullBatch && run.b != 1.0) {
    throw ConfigError("b = " + fmt(run.b) + " needs mask = sgd or persistent (full_batch requires b = 1)");
  }
  mixture.validate();
  run.validate();
  const double steps = std::round(run.horizon / run.eta);
  if (steps < 1.0 || steps > 1e6) {
    throw ConfigError("horizon / eta = " + fmt(run.horizon / run.eta) +
                      " steps; expected between 1 and 1e6");
  }
  solver.validate();
  if (solver.mask_mode != dmft_mask_mode(run.mask_scheme)) {
    throw ConfigError("solver mask mode disagrees with mask");
  }
  if (!sweep_key.empty() || !sweep_values.empty()) {
    if (sweep_key.empty()) throw ConfigError("sweep_values given without sweep_key");
    if (sweep_values.empty()) throw ConfigError("sweep_key given without sweep_values");
    for (const auto& v : sweep_values) {
      ExperimentConfig point = *this;
      point.sweep_key.clear();
      point.sweep_values.clear();
      try {
        set_config_value(point, sweep_key, v);
        point.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("sweep point " + sweep_key + " = " + v + ": " + e.what());
      }
    }
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key before '='");
    if (seen.contains(key)) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    if ((key == "tau" && seen.contains("inv_tau")) || (key == "inv_tau" && seen.contains("tau"))) {
      throw ConfigError(where + "tau and inv_tau are mutually exclusive");
    }
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    seen.emplace(key);
  }

  std::string missing;
  for (const auto& k : required_keys()) {
    if (!seen.contains(k)) missing += (missing.empty() ? "" : ", ") + k;
  }
  if (!missing.empty()) throw ConfigError("missing required key(s): " + missing);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto line = [&o](std::string_view k, const std::string& v) { o << k << " = " << v << '\n'; };
  line("model", c.mixture.kind == ClusterKind::TwoCluster ? "two_cluster" : "three_cluster");
  line("delta", fmt(c.mixture.delta));
  if (c.mixture.door_onset > 0.0) line("door_onset", fmt(c.mixture.door_onset));
  line("rho", fmt(c.mixture.rho));
  line("alpha", fmt(c.run.alpha));
  line("d", std::to_string(c.run.d));
  line("lambda", fmt(c.run.lambda));
  line("eta", fmt(c.run.eta));
  line("b", fmt(c.run.b));
  line("tau", fmt(c.run.tau));
  line("R", fmt(c.run.R));
  line("horizon", fmt(c.run.horizon));
  switch (c.run.mask_scheme) {
    case MaskScheme::FullBatch:
      line("mask", "full_batch");
      break;
    case MaskScheme::SGD:
      line("mask", "sgd");
      break;
    case MaskScheme::PersistentSGD:
      line("mask", "persistent");
      break;
  }
  line("tau_policy", c.run.tau_policy == TauPolicy::Strict ? "strict" : "clamp");
  line("seed", std::to_string(c.run.seed));
  line("n_seeds", std::to_string(c.n_seeds));
  line("n_test", std::to_string(c.n_test));
  line("audit_stride", std::to_string(c.audit_stride));
  line("workers", std::to_string(c.workers));
  line("n_paths", std::to_string(c.solver.n_paths));
  line("damping", fmt(c.solver.damping));
  line("tol", fmt(c.solver.tol));
  line("max_iters", std::to_string(c.solver.max_iters));
  if (c.solver.m0) line("m0", fmt(*c.solver.m0));
  if (c.solver.d_ref) line("d_ref", fmt(*c.solver.d_ref));
  line("antithetic", c.solver.antithetic ? "true" : "false");
  line("kernels_csv", c.kernels_csv ? "true" : "false");
  if (c.warm_start) line("warm_start", *c.warm_start);
  if (!c.sweep_key.empty()) {
    line("sweep_key", c.sweep_key);
    std::string joined;
    for (const auto& v : c.sweep_values) joined += (joined.empty() ? "" : ",") + v;
    line("sweep_values", joined);
    line("sweep_mode", std::string(mode_name(c.sweep_mode)));
  }
  return o.str();
}

}  // namespace gmdyn
