#include "dbpi/cli/commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "dbpi/io.hpp"
#include "dbpi/spectral.hpp"

namespace dbpi::cli {

namespace fs = std::filesystem;

namespace {

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();
constexpr double oracle_tolerance = 1e-12;

struct Check {
  std::string name;
  std::string status;  // pass, fail or skip
  std::string detail;
};

/// Graph, system, gauge and the centralized oracle for one config, with the
/// outcome of each validation check.
struct Setup {
  std::optional<CommGraph> graph;
  std::optional<AgentSystem<double>> sys;
  std::optional<GaugeMatrix<double>> gauge;
  std::optional<FixedPointCertificate<double>> cert;  // present when a fixed point was located
  std::vector<Check> checks;
  bool structural_ok = false;

  bool attractor() const { return cert && cert->is_attractor; }
  Index d() const { return sys->dim(); }
  Index n() const { return sys->agents(); }
};

std::string describe(const Error& e) { return e.what(); }

double beta_of(const ParamsSpec& p) { return std::sqrt(p.beta2); }

/// Picard at a tight tolerance, then Newton polish. Newton also locates
/// repelling fixed points the Picard iteration cannot reach.
std::optional<FixedPointCertificate<double>> locate_fixed_point(const ExperimentConfig& cfg,
                                                               const AgentSystem<double>& sys)
{
  Vector<double> x0 = Vector<double>::Zero(sys.dim());
  if (cfg.oracle_start) {
    require_dimension(static_cast<Index>(cfg.oracle_start->size()), sys.dim(), "oracle.start");
    x0 = Eigen::Map<const Vector<double>>(cfg.oracle_start->data(), sys.dim());
  }
  PicardOptions<double> opts;
  opts.tol = oracle_tolerance;
  opts.max_iters = 100000;
  const auto picard = centralized_picard(sys, x0, opts);
  Vector<double> x = picard.status == RunStatus::converged ? picard.certificate.x_star : x0;
  const Vector<double> polished = newton_fixed_point(sys, x);
  if (polished.allFinite()) x = polished;
  auto cert = certify_fixed_point(sys, x);
  if (!(cert.residual_norm <= default_fixed_point_tolerance * std::max(1.0, x.norm()))) return std::nullopt;
  return cert;
}

Setup prepare(const ExperimentConfig& cfg)
{
  Setup s;
  auto record = [&](std::string name, bool ok, std::string detail) {
    s.checks.push_back({std::move(name), ok ? "pass" : "fail", std::move(detail)});
    return ok;
  };
  auto skip = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) s.checks.push_back({n, "skip", "earlier check failed"});
  };

  try {
    s.graph = build_graph(cfg);
    record("graph", true,
           "connected, " + std::to_string(s.graph->size()) + " agents, " + std::to_string(s.graph->edges().size()) +
               " edges");
  } catch (const Error& e) {
    record("graph", false, describe(e));
    skip({"system", "gauge", "root_conditions", "fixed_point", "attractor"});
    return s;
  }
  try {
    s.sys = build_system(cfg.system, s.graph->size());
    record("system", true, std::to_string(s.sys->agents()) + " agents of dimension " + std::to_string(s.sys->dim()));
  } catch (const Error& e) {
    record("system", false, describe(e));
    skip({"gauge", "root_conditions", "fixed_point", "attractor"});
    return s;
  }
  try {
    s.gauge = build_gauge(cfg, *s.graph, s.sys->dim());
    record("gauge", true, "symmetric PSD, spectral radius below 2, consensus kernel, graph sparsity");
  } catch (const Error& e) {
    record("gauge", false, describe(e));
    skip({"root_conditions", "fixed_point", "attractor"});
    return s;
  }
  const auto roots = check_theorem1(*s.gauge, cfg.params.eta, beta_of(cfg.params));
  const bool roots_ok = record("root_conditions", roots.ok,
                               "eta = " + io::format_number(cfg.params.eta) + ", beta2 = " +
                                   io::format_number(cfg.params.beta2) + ", margin " +
                                   io::format_number(roots.margin));
  s.structural_ok = roots_ok;

  try {
    s.cert = locate_fixed_point(cfg, *s.sys);
  } catch (const Error& e) {
    record("fixed_point", false, describe(e));
    skip({"attractor"});
    return s;
  }
  if (!s.cert) {
    record("fixed_point", false, "no fixed point of the averaged map found");
    skip({"attractor"});
    return s;
  }
  record("fixed_point", true, "residual " + io::format_number(s.cert->residual_norm));
  record("attractor", s.cert->is_attractor, "rho(J_H) = " + io::format_number(s.cert->spectral_radius));
  return s;
}

void print_checks(const Setup& s, std::ostream& log)
{
  for (const auto& c : s.checks) {
    std::string tag = c.status == "pass" ? "PASS" : c.status == "fail" ? "FAIL" : "SKIP";
    log << tag << ' ' << c.name << ": " << c.detail << '\n';
  }
}

Json checks_json(const Setup& s)
{
  Json out = Json::array();
  for (const auto& c : s.checks) out.push_back({{"name", c.name}, {"status", c.status}, {"detail", c.detail}});
  return out;
}

Json base_report(const ExperimentConfig& cfg, std::string_view command)
{
  return {{"command", std::string(command)}, {"config_hash", config_hash(cfg.source)}};
}

void write_json(const fs::path& dir, const std::string& name, const Json& j, std::ostream& log)
{
  io::write_atomic(dir / name, io::dump(j));
  log << "wrote " << (dir / name).string() << '\n';
}

void write_text(const fs::path& dir, const std::string& name, const std::string& text, std::ostream& log)
{
  io::write_atomic(dir / name, text);
  log << "wrote " << (dir / name).string() << '\n';
}

ReducedJacobian<double> reduced_jacobian(const Setup& s, const ParamsSpec& p)
{
  return ReducedJacobian<double>(*s.sys, *s.gauge, p.eta, beta_of(p), s.cert->x_star);
}

AlphaSearchOptions<double> search_options(const ExperimentConfig& cfg)
{
  AlphaSearchOptions<double> o;
  o.alpha_max = cfg.alpha_max;
  return o;
}

struct AlphaChoice {
  double alpha = nan_value;
  std::string source;  // given or auto
  std::optional<AlphaStarResult<double>> search;
  std::string failure;  // nonempty when auto selection is impossible
};

/// The configured alpha, or half the certified threshold for "auto".
AlphaChoice choose_alpha(const ExperimentConfig& cfg, const Setup& s)
{
  AlphaChoice c;
  if (cfg.params.alpha) {
    c.alpha = *cfg.params.alpha;
    c.source = "given";
    return c;
  }
  c.source = "auto";
  if (!s.attractor()) {
    c.failure = "alpha \"auto\" needs an attracting fixed point of the averaged map";
    return c;
  }
  try {
    c.search = find_alpha_star(reduced_jacobian(s, cfg.params), search_options(cfg));
    c.alpha = c.search->alpha_star / 2;
  } catch (const Error& e) {
    c.failure = describe(e);
  }
  return c;
}

Json alpha_json(const AlphaChoice& c)
{
  return {{"value", io::to_json(c.alpha)},
          {"source", c.source},
          {"alpha_star", c.search ? io::to_json(c.search->alpha_star) : Json(nullptr)},
          {"saturated", c.search ? Json(c.search->saturated) : Json(nullptr)}};
}

/// rho(J_F~(psi(x*))) at alpha, NaN without a fixed point.
double theoretical_rho(const Setup& s, const ParamsSpec& p, double alpha)
{
  if (!s.cert) return nan_value;
  return reduced_jacobian(s, p).spectral_radius(alpha);
}

Trajectory<double> execute(const ExperimentConfig& cfg, const Setup& s, double alpha)
{
  StoppingRule<double> rule = cfg.stopping;
  Vector<double> center;
  if (s.cert) {
    rule.reference = s.cert->x_star;
    center = stack_copies(s.cert->x_star, s.n());
  }
  const Index stacked = s.sys->stacked_dim();
  const Vector<double> z0 = build_vector(cfg.z0, stacked, s.cert ? &center : nullptr, "init.z0");
  const bool has_w0 = cfg.w0.kind != VectorInit::Kind::zeros;
  const auto params = iteration_params(cfg.params, alpha);

  switch (cfg.params.variant) {
    case Variant::algorithm1: {
      if (has_w0) throw Error(ErrorKind::InvalidParams, "algorithm1 has no dual initialization");
      const Matrix<double> w = Matrix<double>::Identity(s.n(), s.n()) - s.gauge->l_tilde();
      return run_algorithm1(*s.sys, WeightMatrix<double>(w, s.d()), alpha, z0, rule);
    }
    case Variant::parametric: {
      std::optional<Vector<double>> w0;
      if (has_w0) w0 = build_vector(cfg.w0, stacked, nullptr, "init.w0");
      return run_parametric(*s.sys, *s.gauge, params, z0, rule, w0);
    }
    case Variant::lifted:
      return run_lifted(*s.sys, *s.gauge, params, z0, build_vector(cfg.w0, stacked, nullptr, "init.w0"), rule);
    case Variant::reduced:
      return run_reduced(*s.sys, *s.gauge, params, z0,
                         build_vector(cfg.w0, s.gauge->range_dim(), nullptr, "init.w0"), rule);
  }
  throw Error(ErrorKind::InvalidParams, "unknown variant");
}

double rate_scale(const Setup& s) { return std::max(1.0, stack_copies(s.cert->x_star, s.n()).norm()); }

int status_exit(RunStatus st) { return st == RunStatus::converged ? exit_ok : exit_reported; }

/// Common prelude of spectrum, run and rate: structural checks must pass.
bool gate(const Setup& s, CommandResult& res, std::ostream& log)
{
  if (s.structural_ok) return true;
  print_checks(s, log);
  res.exit_code = exit_validation;
  res.report["status"] = "invalid_config";
  res.report["checks"] = checks_json(s);
  return false;
}

struct RunOutcome {
  AlphaChoice alpha;
  std::optional<Trajectory<double>> traj;
  double rho = nan_value;
};

/// Shared by run and rate. Fills res and returns the trajectory on success.
RunOutcome run_inline(const ExperimentConfig& cfg, const Setup& s, CommandResult& res, std::ostream& log)
{
  RunOutcome out;
  out.alpha = choose_alpha(cfg, s);
  res.report["alpha"] = alpha_json(out.alpha);
  res.report["variant"] = std::string(to_string(cfg.params.variant));
  res.report["certificate"] = s.cert ? io::to_json(*s.cert) : Json(nullptr);
  if (!out.alpha.failure.empty()) {
    log << "FAIL alpha: " << out.alpha.failure << '\n';
    res.exit_code = exit_validation;
    res.report["status"] = "invalid_config";
    res.report["error"] = out.alpha.failure;
    return out;
  }
  out.rho = theoretical_rho(s, cfg.params, out.alpha.alpha);
  res.report["rho"] = io::to_json(out.rho);
  out.traj = execute(cfg, s, out.alpha.alpha);
  res.report["status"] = std::string(to_string(out.traj->status));
  res.report["iterations"] = out.traj->iterations();
  res.exit_code = status_exit(out.traj->status);
  log << "alpha " << io::format_number(out.alpha.alpha) << " (" << out.alpha.source << "), variant "
      << to_string(cfg.params.variant) << '\n';
  log << "status " << to_string(out.traj->status) << " after " << out.traj->iterations() << " iterations\n";
  return out;
}

void write_trajectory(const ExperimentConfig& cfg, const Trajectory<double>& traj, const fs::path& dir,
                      CommandResult& res, std::ostream& log)
{
  write_text(dir, "trajectory.csv", io::trajectory_csv(traj), log);
  res.report["files"]["trajectory"] = "trajectory.csv";
  if (cfg.outputs.states) {
    write_json(dir, "states.json", io::states_json(traj), log);
    res.report["files"]["states"] = "states.json";
  }
}

std::optional<RateReport<double>> try_rate(const ExperimentConfig& cfg, const Setup& s, const Trajectory<double>& traj,
                                           double rho, std::string& failure)
{
  if (!s.cert) {
    failure = "NotFixedPoint: no reference fixed point for the error sequence";
    return std::nullopt;
  }
  if (traj.status == RunStatus::diverged) {
    failure = "diverged";
    return std::nullopt;
  }
  try {
    return empirical_rate<double>(traj, cfg.window_fraction, rate_scale(s), rho);
  } catch (const Error& e) {
    failure = describe(e);
    return std::nullopt;
  }
}

}  // namespace

fs::path output_dir(const CommandOptions& opts, const ExperimentConfig& cfg)
{
  if (opts.out) return *opts.out;
  if (const char* env = std::getenv("DBPI_OUT"); env && *env) return env;
  if (cfg.outputs.dir) return *cfg.outputs.dir;
  return ".";
}

CommandResult cmd_validate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log)
{
  CommandResult res;
  res.report = base_report(cfg, "validate");
  const Setup s = prepare(cfg);
  print_checks(s, log);
  bool ok = true;
  for (const auto& c : s.checks) ok = ok && c.status == "pass";
  res.report["checks"] = checks_json(s);
  res.report["status"] = ok ? "pass" : "fail";
  res.exit_code = ok ? exit_ok : exit_validation;
  write_json(output_dir(opts, cfg), "validate.json", res.report, log);
  return res;
}

CommandResult cmd_spectrum(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log)
{
  CommandResult res;
  res.report = base_report(cfg, "spectrum");
  const Setup s = prepare(cfg);
  const fs::path dir = output_dir(opts, cfg);
  if (!gate(s, res, log) || !s.cert) {
    if (res.exit_code == exit_ok) {
      print_checks(s, log);
      res.exit_code = exit_validation;
      res.report["status"] = "invalid_config";
      res.report["checks"] = checks_json(s);
    }
    write_json(dir, "spectrum.json", res.report, log);
    return res;
  }
  const auto jac = reduced_jacobian(s, cfg.params);
  SpectralOptions<double> so;
  so.search = search_options(cfg);
  so.curve_points = cfg.curve_points;
  const auto rep = spectral_report(jac, *s.gauge, s.cert->jacobian_H, cfg.params.eta, beta_of(cfg.params), so);

  res.report["spectral"] = io::to_json(rep);
  res.report["certificate"] = io::to_json(*s.cert);
  res.report["status"] = rep.alpha_status;
  res.report["files"]["eigencurves"] = "eigencurves.csv";
  res.exit_code = rep.alpha_status == "NoPositiveAlpha" ? exit_reported : exit_ok;

  log << "alpha* status " << rep.alpha_status;
  if (rep.alpha_star) log << ", alpha* = " << io::format_number(rep.alpha_star->alpha_star);
  log << '\n';
  if (rep.semisimple) log << "semisimple unit eigenvalue: " << (rep.semisimple->ok ? "yes" : "no") << '\n';
  log << "derivative check distance " << io::format_number(rep.derivative.finest_distance)
      << (rep.derivative.mismatch ? " (mismatch)" : "") << '\n';
  write_text(dir, "eigencurves.csv", io::eigencurves_csv(rep.curves), log);
  write_json(dir, "spectrum.json", res.report, log);
  return res;
}

CommandResult cmd_run(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log)
{
  CommandResult res;
  res.report = base_report(cfg, "run");
  const Setup s = prepare(cfg);
  const fs::path dir = output_dir(opts, cfg);
  if (gate(s, res, log)) {
    const auto out = run_inline(cfg, s, res, log);
    if (out.traj) {
      std::string failure;
      const auto rate = out.traj->status == RunStatus::converged ? try_rate(cfg, s, *out.traj, out.rho, failure)
                                                                 : std::nullopt;
      res.report["rate"] = rate ? io::to_json(*rate) : Json(nullptr);
      write_trajectory(cfg, *out.traj, dir, res, log);
    }
  }
  write_json(dir, "run.json", res.report, log);
  return res;
}

CommandResult cmd_rate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log)
{
  CommandResult res;
  res.report = base_report(cfg, "rate");
  const Setup s = prepare(cfg);
  const fs::path dir = output_dir(opts, cfg);
  if (gate(s, res, log)) {
    const auto out = run_inline(cfg, s, res, log);
    if (out.traj) {
      std::string failure;
      const auto rate = try_rate(cfg, s, *out.traj, out.rho, failure);
      res.report["rate"] = rate ? io::to_json(*rate) : Json(nullptr);
      if (rate) {
        log << "sigma_hat " << io::format_number(rate->empirical_rate) << ", rho "
            << io::format_number(rate->theoretical_rate) << '\n';
      } else {
        res.report["rate_status"] = failure;
        res.exit_code = exit_reported;
        log << "rate unavailable: " << failure << '\n';
      }
      write_trajectory(cfg, *out.traj, dir, res, log);
    }
  }
  write_json(dir, "rate.json", res.report, log);
  return res;
}

namespace {

struct SweepRow {
  double value = nan_value;
  double rho = nan_value;
  double sigma_hat = nan_value;
  std::string status = "invalid_config";
  std::string detail;
};

SweepRow sweep_point(const ExperimentConfig& base, const std::string& parameter, double value, double alpha_scale)
{
  SweepRow row;
  row.value = value;
  try {
    ExperimentConfig cfg = base;
    cfg.stopping.record_states = false;
    if (parameter == "alpha") {
      cfg.params.alpha = value * alpha_scale;
    } else if (parameter == "eta") {
      cfg.params.eta = value;
    } else if (parameter == "beta2") {
      cfg.params.beta2 = value;
    } else {
      auto* named = std::get_if<NamedGraph>(&cfg.graph);
      if (!named) throw Error(ErrorKind::InvalidConfig, "sweeping n needs a named graph family");
      named->n = static_cast<Index>(value);
      if (cfg.system.maps.size() != 1) throw Error(ErrorKind::InvalidConfig, "sweeping n needs a replicated system");
      cfg.system.replicate = named->n;
    }
    const Setup s = prepare(cfg);
    if (!s.structural_ok) {
      for (const auto& c : s.checks) {
        if (c.status == "fail") row.detail = c.name + ": " + c.detail;
      }
      return row;
    }
    const AlphaChoice alpha = choose_alpha(cfg, s);
    if (!alpha.failure.empty()) {
      row.detail = alpha.failure;
      return row;
    }
    row.rho = theoretical_rho(s, cfg.params, alpha.alpha);
    const auto traj = execute(cfg, s, alpha.alpha);
    row.status = std::string(to_string(traj.status));
    if (traj.status == RunStatus::converged) {
      std::string failure;
      if (const auto rate = try_rate(cfg, s, traj, row.rho, failure)) {
        row.sigma_hat = rate->empirical_rate;
      } else {
        row.detail = failure;
      }
    }
  } catch (const Error& e) {
    row.status = "invalid_config";
    row.detail = describe(e);
  }
  return row;
}

}  // namespace

CommandResult cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log)
{
  CommandResult res;
  res.report = base_report(cfg, "sweep");
  const fs::path dir = output_dir(opts, cfg);
  if (!cfg.sweep) {
    log << "FAIL sweep: config has no sweep section\n";
    res.exit_code = exit_validation;
    res.report["status"] = "invalid_config";
    write_json(dir, "sweep.json", res.report, log);
    return res;
  }
  const SweepSpec& sw = *cfg.sweep;

  double alpha_scale = 1;
  if (sw.relative_to_alpha_star) {
    const Setup s = prepare(cfg);
    std::optional<AlphaStarResult<double>> search;
    std::string failure = "structural checks failed";
    if (s.structural_ok && s.cert) {
      try {
        search = find_alpha_star(reduced_jacobian(s, cfg.params), search_options(cfg));
      } catch (const Error& e) {
        failure = describe(e);
      }
    }
    if (!search) {
      print_checks(s, log);
      log << "FAIL sweep: alpha* unavailable (" << failure << ")\n";
      res.exit_code = exit_validation;
      res.report["status"] = "invalid_config";
      res.report["error"] = failure;
      write_json(dir, "sweep.json", res.report, log);
      return res;
    }
    alpha_scale = search->alpha_star;
    res.report["alpha_star"] = io::to_json(*search);
  }

  std::vector<SweepRow> rows(sw.values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      rows[i] = sweep_point(cfg, sw.parameter, sw.values[i], alpha_scale);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(rows.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string csv = "param_value,rho,sigma_hat,status\n";
  Json table = Json::array();
  for (const auto& r : rows) {
    csv += io::format_number(r.value) + ',' + io::format_number(r.rho) + ',' + io::format_number(r.sigma_hat) + ',' +
           r.status + '\n';
    table.push_back({{"param_value", io::to_json(r.value)},
                     {"rho", io::to_json(r.rho)},
                     {"sigma_hat", io::to_json(r.sigma_hat)},
                     {"status", r.status},
                     {"detail", r.detail}});
    log << sw.parameter << ' ' << io::format_number(r.value) << ": " << r.status << '\n';
  }
  res.report["parameter"] = sw.parameter;
  res.report["relative_to_alpha_star"] = sw.relative_to_alpha_star;
  res.report["rows"] = std::move(table);
  res.report["status"] = "complete";
  res.report["files"]["table"] = "sweep.csv";
  write_text(dir, "sweep.csv", csv, log);
  write_json(dir, "sweep.json", res.report, log);
  return res;
}

int run_command(std::string_view command, const fs::path& config_path, const CommandOptions& opts, std::ostream& out,
                std::ostream& err)
{
  ExperimentConfig cfg;
  try {
    Json doc = read_json_file(config_path);
    if (opts.seed) apply_seed_override(doc, *opts.seed);
    cfg = parse_config(doc);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_parse;
  }
  try {
    CommandResult res;
    if (command == "validate") {
      res = cmd_validate(cfg, opts, out);
    } else if (command == "spectrum") {
      res = cmd_spectrum(cfg, opts, out);
    } else if (command == "run") {
      res = cmd_run(cfg, opts, out);
    } else if (command == "rate") {
      res = cmd_rate(cfg, opts, out);
    } else if (command == "sweep") {
      res = cmd_sweep(cfg, opts, out);
    } else {
      err << "error: unknown command \"" << command << "\"\n";
      return exit_parse;
    }
    return res.exit_code;
  } catch (const Error& e) {
    err << "error: " << describe(e) << '\n';
    return e.kind() == ErrorKind::InvalidConfig ? exit_parse : exit_validation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_validation;
  }
}

}  // namespace dbpi::cli
