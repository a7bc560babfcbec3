// Acceptance suite. One line per criterion: PASS/FAIL, the measured value
// against its tolerance, and wall time against its budget.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "corpus.hpp"
#include "dbpi/cli/commands.hpp"
#include "dbpi/cli/config.hpp"
#include "dbpi/iteration.hpp"
#include "dbpi/spectral.hpp"
#include "oracles.hpp"

using namespace dbpi;
using namespace dbpi::testing;
namespace fs = std::filesystem;

namespace {

using Cplx = std::complex<double>;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> body;
};

std::string sci(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Accumulates a worst-case value and a list of failure notes.
struct Tally {
  double worst = 0;
  bool ok = true;
  std::vector<std::string> notes;

  void value(double v) { worst = std::max(worst, std::isnan(v) ? HUGE_VAL : v); }
  void fail(const std::string& note)
  {
    ok = false;
    notes.push_back(note);
  }
  void check(bool cond, const std::string& note)
  {
    if (!cond) fail(note);
  }
  Outcome outcome(const std::string& summary) const
  {
    Outcome o{ok, summary};
    for (std::size_t i = 0; i < notes.size() && i < 4; ++i) o.detail += "; " + notes[i];
    if (notes.size() > 4) o.detail += "; +" + std::to_string(notes.size() - 4) + " more";
    return o;
  }
};

// ---------------------------------------------------------------- oracles

/// Metropolis Laplacian built directly from the edge list.
Mat metropolis_laplacian(const CommGraph& g)
{
  const Index n = g.size();
  std::vector<Index> deg(n, 0);
  for (const auto& [s, t] : g.edges()) {
    ++deg[s];
    ++deg[t];
  }
  Mat w = Mat::Zero(n, n);
  for (const auto& [s, t] : g.edges()) {
    const double v = 1.0 / (1.0 + double(std::max(deg[s], deg[t])));
    w(s, t) = w(t, s) = v;
  }
  for (Index i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return Mat::Identity(n, n) - w;
}

/// (L^{1/2})^+ by eigendecomposition of the dense L = L~ (x) I_d.
Mat sqrt_pinv_dense(const Mat& l)
{
  Eigen::SelfAdjointEigenSolver<Mat> eig(l);
  Vec s = eig.eigenvalues();
  for (Index i = 0; i < s.size(); ++i) s(i) = s(i) > 1e-10 ? 1.0 / std::sqrt(s(i)) : 0.0;
  return eig.eigenvectors() * s.asDiagonal() * eig.eigenvectors().transpose();
}

Vec block_average_copies(const Vec& w, Index d)
{
  const Index n = w.size() / d;
  Vec mean = Vec::Zero(d);
  for (Index i = 0; i < n; ++i) mean += w.segment(i * d, d) / double(n);
  return mean.replicate(n, 1);
}

Vec reference_point(const CorpusCase& c)
{
  if (c.affine) return affine_fixed_point(c);
  return Vec::Constant(1, 9.0 / 14.0);  // mean r = 2.8 logistic
}

Vec residual_dense(const CorpusCase& c, const Vec& z)
{
  const Index d = c.system.dim();
  Vec r(z.size());
  for (Index i = 0; i < c.system.agents(); ++i) {
    const Vec zi = z.segment(i * d, d);
    r.segment(i * d, d) = c.system.map(i).evaluate(zi) - zi;
  }
  return r;
}

Mat central_difference(const std::function<Vec(const Vec&)>& f, const Vec& x)
{
  const Vec fx = f(x);
  Mat j(fx.size(), x.size());
  for (Index k = 0; k < x.size(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(k)));
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (f(xp) - f(xm)) / (2 * h);
  }
  return j;
}

/// Sine of the largest principal angle between the column spans of orthonormal a and b.
double largest_angle_sine(const Mat& a, const Mat& b)
{
  if (a.cols() == 0 && b.cols() == 0) return 0;
  const Mat residual = b - a * (a.transpose() * b);
  return Eigen::JacobiSVD<Mat>(residual).singularValues()(0);
}

/// Symmetric Hausdorff distance between two finite point sets in C.
double hausdorff(const std::vector<Cplx>& a, const std::vector<Cplx>& b)
{
  auto directed = [](const std::vector<Cplx>& x, const std::vector<Cplx>& y) {
    double worst = 0;
    for (const auto& p : x) {
      double best = HUGE_VAL;
      for (const auto& q : y) best = std::min(best, std::abs(p - q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

// ---------------------------------------------------------------- helpers

constexpr double kEta = 1.0;
const double kBeta = 1.0 / std::sqrt(2.0);

GaugeMatrix<double> gauge_of(const CorpusCase& c)
{
  return gauge_from_weights(metropolis_weights<double>(c.graph, c.system.dim()));
}

IterationParams<double> params_with(double alpha)
{
  IterationParams<double> p;
  p.alpha = alpha;
  p.eta = kEta;
  p.beta = kBeta;
  return p;
}

double half_alpha_star(const CorpusCase& c, const GaugeMatrix<double>& gauge)
{
  const ReducedJacobian<double> jac(c.system, gauge, kEta, kBeta, reference_point(c));
  return find_alpha_star(jac).alpha_star / 2;
}

StoppingRule<double> fixed_length(Index iters)
{
  StoppingRule<double> rule;
  rule.tol_step = -1;
  rule.max_iters = iters;
  return rule;
}

StoppingRule<double> tight(const Vec& x_star)
{
  StoppingRule<double> rule;
  rule.tol_step = 1e-13;
  rule.tol_cons = 1e-12;
  rule.max_iters = 200000;
  rule.record_states = false;
  rule.reference = x_star;
  return rule;
}

double relative_gap(const Vec& a, const Vec& b)
{
  const double scale = b.norm();
  return scale > 0 ? (a - b).norm() / scale : (a - b).norm();
}

/// Largest per-iterate relative gap between two recorded z-sequences.
double sequence_gap(const Trajectory<double>& a, const Trajectory<double>& b, Tally& t, const std::string& name)
{
  if (a.states.size() != b.states.size()) {
    t.fail(name + ": lengths " + std::to_string(a.states.size()) + " vs " + std::to_string(b.states.size()));
    return HUGE_VAL;
  }
  double worst = 0;
  for (std::size_t i = 0; i < a.states.size(); ++i) worst = std::max(worst, relative_gap(a.states[i].z, b.states[i].z));
  return worst;
}

Vec start_near(std::mt19937_64& rng, const CorpusCase& c, double scale)
{
  return stack_copies(reference_point(c), c.system.agents()) + random_vector(rng, c.system.stacked_dim(), scale);
}

/// The same parametric run in long double, for systems whose double-precision
/// tail is too short for the rate fit, fitted over the whole usable tail.
/// Affine cases only.
double extended_precision_rate(const CorpusCase& c, double alpha, const Vec& z0, const Vec& w0)
{
  using LD = long double;
  std::vector<AgentMap<LD>> maps;
  for (std::size_t n = 0; n < c.a.size(); ++n) maps.push_back(affine_map<LD>(c.a[n].cast<LD>(), c.b[n].cast<LD>()));
  const AgentSystem<LD> sys(std::move(maps));
  const Index d = sys.dim();
  const auto gauge = gauge_from_weights(metropolis_weights<LD>(c.graph, d));
  IterationParams<LD> params;
  params.alpha = alpha;
  params.eta = kEta;
  params.beta = LD(1) / std::sqrt(LD(2));
  const Matrix<LD> mean_a = affine_mean_jacobian(c).cast<LD>();
  const Vector<LD> x_star = (Matrix<LD>::Identity(d, d) - mean_a).partialPivLu().solve(average_map(sys, Vector<LD>::Zero(d)));
  const LD rho = ReducedJacobian<LD>(sys, gauge, params.eta, params.beta, x_star, LD(1e-14)).spectral_radius(params.alpha);

  StoppingRule<LD> rule;
  rule.tol_step = -1;
  rule.max_iters = 2000;
  rule.record_states = false;
  rule.reference = x_star;
  const auto traj = run_parametric(sys, gauge, params, Vector<LD>(z0.cast<LD>()), rule,
                                   std::optional<Vector<LD>>(w0.cast<LD>()));
  const LD scale = std::max(LD(1), stack_copies(x_star, sys.agents()).norm());
  return double(empirical_rate(traj, LD(1), scale, rho).empirical_rate);
}

// ---------------------------------------------------------------- criteria

Outcome modulus_identity()
{
  const std::vector<std::pair<std::string, CommGraph>> graphs = {
      {"path3", path_graph(3)}, {"cycle5", cycle_graph(5)}, {"complete4", complete_graph(4)}, {"star6", star_graph(6)}};
  Tally t;
  for (const auto& [name, g] : graphs) {
    for (Index d : {1, 3}) {
      const auto gauge = gauge_from_weights(metropolis_weights<double>(g, d));
      const Mat l_oracle = kron_dense(metropolis_laplacian(g), Mat::Identity(d, d));
      t.check(max_abs_diff(gauge.matrix(), l_oracle) <= 1e-14, name + ": gauge differs from the edge-list Laplacian");
      Vec lambdas = gauge.eigenvalues();
      std::sort(lambdas.begin(), lambdas.end());
      const Vec oracle = Eigen::SelfAdjointEigenSolver<Mat>(l_oracle).eigenvalues();
      t.check((lambdas - oracle).cwiseAbs().maxCoeff() <= 1e-13, name + ": eigenvalues differ from the oracle");
      for (Index s = 0; s < lambdas.size(); ++s) {
        const double lambda = std::max(0.0, lambdas(s));
        const auto roots = gamma_roots(lambda, kEta, kBeta);
        for (const Cplx g1 : {roots.gamma1, roots.gamma2}) {
          const double dev = std::abs(std::norm(1.0 + g1) - (1.0 - lambda / 2));
          t.value(dev);
        }
      }
    }
  }
  t.check(t.worst <= 1e-12, "deviation above tolerance");
  return t.outcome("max deviation " + sci(t.worst) + " (tol 1e-12) over 8 gauges");
}

Outcome algorithm_recovery()
{
  const auto cases = corpus();
  Tally t;
  std::mt19937_64 rng(2024);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& c = cases[i];
    const auto w = metropolis_weights<double>(c.graph, c.system.dim());
    const auto gauge = gauge_from_weights(w);
    const double alpha = half_alpha_star(c, gauge);
    const Vec z0 = start_near(rng, c, 0.5);
    const auto rule = fixed_length(500);
    const auto a1 = run_algorithm1(c.system, w, alpha, z0, rule);
    const auto par = run_parametric(c.system, gauge, params_with(alpha), z0, rule);
    t.check(a1.iterations() == 500 && par.iterations() == 500, c.name + ": run stopped early");
    const double gap = sequence_gap(a1, par, t, c.name);
    t.value(gap);
    t.check(gap <= 1e-12, c.name + " gap " + sci(gap));
  }
  return t.outcome("max relative gap " + sci(t.worst) + " (tol 1e-12) over 5 systems x 500 iterations");
}

Outcome elimination_equivalence()
{
  Tally t;
  std::mt19937_64 rng(77);
  for (const auto& c : corpus()) {
    const auto gauge = gauge_of(c);
    const double alpha = half_alpha_star(c, gauge);
    const Vec z0 = start_near(rng, c, 0.5);
    const auto rule = fixed_length(200);
    const auto par = run_parametric(c.system, gauge, params_with(alpha), z0, rule);
    const auto lift = run_lifted(c.system, gauge, params_with(alpha), z0, std::nullopt, rule);
    const double gap = sequence_gap(lift, par, t, c.name);
    t.value(gap);
    t.check(gap <= 1e-9, c.name + " gap " + sci(gap));
  }
  return t.outcome("max relative gap " + sci(t.worst) + " (tol 1e-9) over 7 systems x 200 iterations");
}

Outcome unit_eigenvalue_structure()
{
  Tally t;
  double worst_angle = 0, worst_other = 0;
  for (const auto& c : corpus()) {
    const auto gauge = gauge_of(c);
    const Index d = c.system.dim(), n = c.system.agents();
    const Mat m = unperturbed_jacobian(gauge, kEta, kBeta);
    const Index size = m.rows();

    const Eigen::VectorXcd ev = Eigen::ComplexEigenSolver<Mat>(m).eigenvalues();
    Index unit = 0;
    double other = 0;
    for (Index i = 0; i < ev.size(); ++i) {
      if (std::abs(ev(i) - 1.0) <= 1e-8)
        ++unit;
      else
        other = std::max(other, std::abs(ev(i)));
    }
    worst_other = std::max(worst_other, other);
    t.check(unit == d, c.name + ": unit multiplicity " + std::to_string(unit) + " != " + std::to_string(d));
    t.check(other <= 1 - 1e-6, c.name + ": other modulus " + sci(other));

    // Geometric multiplicity and eigenspace.
    const Mat shifted = m - Mat::Identity(size, size);
    Eigen::JacobiSVD<Mat> svd(shifted, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    Index nullity = 0;
    for (Index i = 0; i < sv.size(); ++i) nullity += sv(i) <= 1e-10 * std::max(1.0, sv(0));
    t.check(nullity == d, c.name + ": geometric multiplicity " + std::to_string(nullity));
    const Mat null_basis = svd.matrixV().rightCols(d);
    Mat expected = Mat::Zero(size, d);
    for (Index i = 0; i < n; ++i) expected.block(i * d, 0, d, d) = Mat::Identity(d, d) / std::sqrt(double(n));
    const double angle = std::asin(std::min(1.0, largest_angle_sine(null_basis, expected)));
    worst_angle = std::max(worst_angle, angle);
    t.check(angle <= 1e-8, c.name + ": principal angle " + sci(angle));

    const auto lib = semisimple_check(gauge, kEta, kBeta);
    t.check(lib.ok && lib.unit_multiplicity == d, c.name + ": library semisimple check disagrees");
  }
  return t.outcome("max principal angle " + sci(worst_angle) + " (tol 1e-8), max other modulus " + sci(worst_other) +
                   " (tol 1-1e-6), 7 gauges");
}

Outcome slope_limit()
{
  // Extended precision keeps eigenvalue roundoff below the O(h^2) truncation at h = 1e-6.
  using LD = long double;
  using LMat = Matrix<LD>;
  using LCplx = std::complex<LD>;
  const CorpusCase c = hetero_affine_cycle5();
  const Index d = c.system.dim();
  std::vector<AgentMap<LD>> maps;
  for (std::size_t n = 0; n < c.a.size(); ++n)
    maps.push_back(affine_map<LD>(c.a[n].cast<LD>(), c.b[n].cast<LD>()));
  const AgentSystem<LD> sys(std::move(maps));
  const auto gauge = gauge_from_weights(metropolis_weights<LD>(c.graph, d));
  const LMat jh = affine_mean_jacobian(c).cast<LD>();
  const Vector<LD> x_star = (LMat::Identity(d, d) - jh).partialPivLu().solve(average_map(sys, Vector<LD>::Zero(d)));
  const ReducedJacobian<LD> jac(sys, gauge, LD(kEta), LD(1) / std::sqrt(LD(2)), x_star, LD(1e-14));

  std::vector<Cplx> target;
  const auto te = Eigen::ComplexEigenSolver<LMat>(jh - LMat::Identity(d, d)).eigenvalues();
  for (Index i = 0; i < te.size(); ++i) target.emplace_back(double(te(i).real()), double(te(i).imag()));

  Tally t;
  std::vector<double> distances;
  const std::vector<LD> steps = {1e-2L, 1e-3L, 1e-4L, 1e-5L, 1e-6L};
  for (LD h : steps) {
    const auto ev = Eigen::ComplexEigenSolver<LMat>(jac.matrix(h)).eigenvalues();
    std::vector<LCplx> all(ev.data(), ev.data() + ev.size());
    std::sort(all.begin(), all.end(), [](LCplx a, LCplx b) { return std::abs(a - LD(1)) < std::abs(b - LD(1)); });
    std::vector<Cplx> slopes;
    for (Index i = 0; i < d; ++i) {
      const LCplx s = (all[i] - LD(1)) / h;
      slopes.emplace_back(double(s.real()), double(s.imag()));
    }
    distances.push_back(hausdorff(slopes, target));
  }
  for (std::size_t i = 1; i < distances.size(); ++i)
    t.check(distances[i] < distances[i - 1], "not decreasing at h=" + sci(double(steps[i])));
  const double finest = distances.back();
  t.check(finest <= 1e-4, "distance at h=1e-6 is " + sci(finest));
  double max_re = -HUGE_VAL;
  for (const auto& z : target) max_re = std::max(max_re, z.real());
  t.check(max_re < 0, "limiting real part " + sci(max_re));

  const auto lib = derivative_check(jac, jh, steps);
  t.check(lib.decreasing && lib.negative_real_parts && !lib.mismatch, "library derivative check disagrees");
  t.check(std::abs(double(lib.hausdorff.back()) - finest) <= 1e-9, "library distance " + sci(double(lib.hausdorff.back())));

  std::string seq;
  for (double v : distances) seq += (seq.empty() ? "" : " > ") + sci(v);
  return t.outcome("Hausdorff " + seq + " (tol 1e-4 at h=1e-6), max limiting Re " + sci(max_re));
}

Outcome local_stability()
{
  Tally t;
  std::mt19937_64 rng(99);
  double worst_err = 0, worst_excess = -HUGE_VAL, min_growth = HUGE_VAL;
  std::string extended;
  for (const auto& c : corpus()) {
    const auto gauge = gauge_of(c);
    const Vec x_star = reference_point(c);
    const Vec ref = stack_copies(x_star, c.system.agents());
    const ReducedJacobian<double> jac(c.system, gauge, kEta, kBeta, x_star);
    const auto search = find_alpha_star(jac);

    // Stable side.
    const double alpha = search.alpha_star / 2;
    const double rho = jac.spectral_radius(alpha);
    const auto params = params_with(alpha);
    const auto psi = psi_map(c.system, gauge, params, x_star);
    const Mat range = gauge.range_basis();
    const Vec z0 = psi.z + random_vector(rng, psi.z.size(), 1e-3);
    const Vec w0 = range * (psi.w_tilde + random_vector(rng, psi.w_tilde.size(), 1e-3));
    auto horizon = fixed_length(20000);
    horizon.record_states = false;
    horizon.reference = x_star;
    const auto traj = run_parametric(c.system, gauge, params, z0, horizon, std::optional<Vec>(w0));
    const double err = (traj.final_state.z - ref).cwiseAbs().maxCoeff();
    worst_err = std::max(worst_err, err);
    t.check(traj.status != RunStatus::diverged && err <= 1e-8,
            c.name + ": " + std::string(to_string(traj.status)) + " err " + sci(err) + " at rho " + sci(rho));
    try {
      const double scale = std::max(1.0, ref.norm());
      double sigma;
      try {
        sigma = empirical_rate(traj, 0.5, scale, rho).empirical_rate;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::WindowTooShort || !c.affine) throw;
        sigma = extended_precision_rate(c, alpha, z0, w0);
        extended += (extended.empty() ? "" : ", ") + c.name + " sigma " + sci(sigma) + " rho " + sci(rho);
      }
      worst_excess = std::max(worst_excess, sigma - rho);
      t.check(sigma <= rho + 0.05, c.name + ": sigma " + sci(sigma) + " vs rho " + sci(rho));
    } catch (const Error& e) {
      t.fail(c.name + ": " + e.what());
    }

    // Unstable side: first alpha above the threshold with rho >= 1.05.
    double a_bad = std::isnan(search.bracket_high) ? search.alpha_star : search.bracket_high;
    while (jac.spectral_radius(a_bad) < 1.05 && a_bad < 1e4) a_bad *= 1.05;
    const double rho_bad = jac.spectral_radius(a_bad);
    if (rho_bad < 1.05) {
      t.fail(c.name + ": no alpha with rho >= 1.05 found");
      continue;
    }
    const auto bad = params_with(a_bad);
    const auto psi_bad = psi_map(c.system, gauge, bad, x_star);
    const Vec zb = psi_bad.z + random_vector(rng, psi_bad.z.size(), 1e-9);
    const Vec wb = range * (psi_bad.w_tilde + random_vector(rng, psi_bad.w_tilde.size(), 1e-9));
    auto rule = fixed_length(500);
    rule.record_states = false;
    rule.reference = x_star;
    const auto grow = run_parametric(c.system, gauge, bad, zb, rule, std::optional<Vec>(wb));
    double peak = 0;
    for (double e : grow.dist_to_ref) peak = std::max(peak, std::isfinite(e) ? e : HUGE_VAL);
    if (grow.status == RunStatus::diverged) peak = HUGE_VAL;
    const double growth = peak / grow.dist_to_ref.front();
    min_growth = std::min(min_growth, growth);
    t.check(growth >= 10, c.name + ": growth " + sci(growth) + " at rho " + sci(rho_bad));
  }
  return t.outcome("max error " + sci(worst_err) + " (tol 1e-8), max sigma-rho " + sci(worst_excess) +
                   " (tol 0.05), min growth " + sci(min_growth) + "x (need 10x), 7 systems" +
                   (extended.empty() ? "" : "; long double rate for " + extended));
}

Outcome dual_limit()
{
  Tally t;
  std::mt19937_64 rng(5150);
  const std::vector<CorpusCase> cases = {hetero_affine_cycle5(), rotation_path4(), hetero_quadratic_star6()};
  for (const auto& c : cases) {
    const auto gauge = gauge_of(c);
    const Index d = c.system.dim();
    const Vec x_star = affine_fixed_point(c);
    const Vec ref = stack_copies(x_star, c.system.agents());
    const double alpha = half_alpha_star(c, gauge);
    const auto params = params_with(alpha);
    const Mat l = kron_dense(metropolis_laplacian(c.graph), Mat::Identity(d, d));
    const Vec r_star = residual_dense(c, ref);
    for (int trial = 0; trial < 3; ++trial) {
      const Vec w0 = random_vector(rng, c.system.stacked_dim(), 1.0);
      const Vec z0 = start_near(rng, c, 0.5);
      auto rule = tight(x_star);
      rule.record_states = false;
      const auto traj = run_lifted(c.system, gauge, params, z0, std::optional<Vec>(w0), rule);
      if (traj.status != RunStatus::converged || !traj.final_state.w) {
        t.fail(c.name + ": lifted run " + std::string(to_string(traj.status)));
        continue;
      }
      const Vec expected = block_average_copies(w0, d) - (alpha / kBeta) * sqrt_pinv_dense(l) * r_star;
      const double gap = (*traj.final_state.w - expected).cwiseAbs().maxCoeff();
      t.value(gap);
      t.check(gap <= 1e-5, c.name + " trial " + std::to_string(trial) + " gap " + sci(gap));
      const double lib_gap = (limit_dual(w0, gauge, params, c.system, x_star) - expected).cwiseAbs().maxCoeff();
      t.check(lib_gap <= 1e-10, c.name + ": library limit differs by " + sci(lib_gap));
    }
  }
  return t.outcome("max |w^K - limit| " + sci(t.worst) + " (tol 1e-5) over 3 systems x 3 duals");
}

Outcome centralized_agreement()
{
  Tally t;
  std::mt19937_64 rng(31337);
  for (const auto& c : corpus()) {
    const auto gauge = gauge_of(c);
    const Index d = c.system.dim(), n = c.system.agents();
    PicardOptions<double> popts;
    popts.tol = 1e-14;
    popts.max_iters = 1000000;
    const auto central = centralized_picard(c.system, c.start, popts);
    const Vec x_central = central.trajectory.back();
    t.check(central.status == RunStatus::converged, c.name + ": centralized Picard " +
                                                        std::string(to_string(central.status)));

    const double alpha = half_alpha_star(c, gauge);
    const Vec z0 = start_near(rng, c, 0.5);
    const auto traj = run_parametric(c.system, gauge, params_with(alpha), z0,
                                     tight(x_central));
    t.check(traj.status == RunStatus::converged, c.name + ": distributed " + std::string(to_string(traj.status)));
    for (Index i = 0; i < n; ++i) {
      const Vec block = traj.final_state.z.segment(i * d, d);
      const double gap = (block - x_central).cwiseAbs().maxCoeff();
      t.value(gap);
      t.check(gap <= 1e-7, c.name + ": agent " + std::to_string(i) + " vs Picard " + sci(gap));
      const Vec exact = reference_point(c);
      const double gap_exact = (block - exact).cwiseAbs().maxCoeff();
      t.value(gap_exact);
      t.check(gap_exact <= 1e-7, c.name + ": agent " + std::to_string(i) + " vs exact " + sci(gap_exact));
    }
  }
  return t.outcome("max agent deviation " + sci(t.worst) + " (tol 1e-7) from Picard and exact solutions, 7 systems");
}

Outcome jacobian_correctness()
{
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tally t;

  struct Family {
    std::string name;
    AgentMap<double> map;
    double lo, hi;
  };
  std::vector<Family> families;
  families.push_back({"affine", affine_map<double>(random_matrix(rng, 3, 3, 1.0), random_vector(rng, 3, 1.0)), -2, 2});
  {
    Mat q = random_matrix(rng, 3, 3, 1.0);
    q = (q + q.transpose()).eval() / 2.0;
    families.push_back({"quadratic_gradient", quadratic_gradient_map<double>(q, random_vector(rng, 3, 1.0)), -2, 2});
  }
  families.push_back({"logistic", logistic_map<double>(3.2, 1), 0, 1});
  families.push_back({"logistic_d3", logistic_map<double>(2.7, 3), 0, 1});

  for (const auto& f : families) {
    const Index dim = f.map.dim;
    for (int p = 0; p < 10; ++p) {
      Vec x(dim);
      for (Index i = 0; i < dim; ++i) x(i) = f.lo + (f.hi - f.lo) * unit(rng);
      if (!f.map.has_jacobian()) {
        t.fail(f.name + ": no analytic Jacobian");
        break;
      }
      const double gap = max_abs_diff(f.map.jacobian(x), central_difference(f.map.evaluate, x));
      t.value(gap);
      t.check(gap <= 1e-6, f.name + " gap " + sci(gap));
    }
  }
  return t.outcome("max |analytic - FD| " + sci(t.worst) + " (tol 1e-6), 4 families x 10 points");
}

Outcome determinism()
{
  using namespace dbpi::cli;
  const std::string text = R"({
    "graph": {"family": "cycle", "n": 5},
    "system": {"family": "affine", "A": [[0.4, 0.2], [-0.1, 0.6]], "b": [0.5, -0.25],
               "replicate": 5, "perturbation": 0.3, "seed": 11},
    "params": {"alpha": "auto"},
    "init": {"z0": {"random": {"seed": 1, "scale": 0.5}}, "w0": {"random": {"seed": 2, "scale": 0.1}}},
    "stopping": {"tol_step": 1e-13, "tol_cons": 1e-11, "max_iters": 100000},
    "outputs": {"thinning": 1}
  })";
  const fs::path root = fs::temp_directory_path() / "dbpi_acceptance_determinism";
  fs::remove_all(root);

  auto run_once = [&](std::uint64_t seed, const std::string& tag) {
    Json doc = parse_json(text);
    apply_seed_override(doc, seed);
    const ExperimentConfig cfg = parse_config(doc);
    CommandOptions opts;
    opts.out = root / tag;
    std::ostringstream log;
    const auto res = cmd_run(cfg, opts, log);
    std::ifstream in(root / tag / "trajectory.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return std::pair<int, std::string>(res.exit_code, ss.str());
  };

  Tally t;
  const auto a = run_once(42, "a");
  const auto b = run_once(42, "b");
  const auto c = run_once(43, "c");
  t.check(a.first == 0 && b.first == 0, "run exit codes " + std::to_string(a.first) + ", " + std::to_string(b.first));
  t.check(!a.second.empty(), "empty trajectory");
  t.check(a.second == b.second, "same seed produced different bytes");
  t.check(a.second != c.second, "a different seed produced identical bytes");
  fs::remove_all(root);
  return t.outcome("seed 42 twice: " + std::string(a.second == b.second ? "identical" : "different") + " (" +
                   std::to_string(a.second.size()) + " bytes); seed 43: " +
                   (a.second != c.second ? "differs" : "identical"));
}

}  // namespace

#ifdef NDEBUG
constexpr bool kEnforceBudgets = true;
#else
constexpr bool kEnforceBudgets = false;  // unoptimized builds report timings only
#endif

int main()
{
  const std::vector<Criterion> criteria = {
      {1, "modulus identity of the gain roots", 1, modulus_identity},
      {2, "Algorithm 1 recovered by the parametric family", 5, algorithm_recovery},
      {3, "lifted iteration matches the parametric sequence", 5, elimination_equivalence},
      {4, "unit eigenvalue of the unperturbed Jacobian", 5, unit_eigenvalue_structure},
      {5, "eigencurve slopes converge to eig(J_H - I)", 10, slope_limit},
      {6, "local convergence below alpha*, growth above", 30, local_stability},
      {7, "limit of the lifted dual variable", 30, dual_limit},
      {8, "distributed limits match centralized solutions", 10, centralized_agreement},
      {9, "analytic Jacobians match finite differences", 1, jacobian_correctness},
      {10, "seeded runs write byte-identical trajectories", 5, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && (in_budget || !kEnforceBudgets);
    failures += !pass;
    std::printf("%s  %2d  %-50s %s [%.2fs / %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, c.budget_s,
                in_budget ? "" : kEnforceBudgets ? " over budget" : " over budget, not enforced");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed%s\n", int(criteria.size()) - failures, criteria.size(),
              kEnforceBudgets ? "" : " (time budgets not enforced in this build)");
  return failures == 0 ? 0 : 1;
}
