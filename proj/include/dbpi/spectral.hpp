#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dbpi/graph.hpp"
#include "dbpi/iteration.hpp"
#include "dbpi/linalg.hpp"
#include "dbpi/operators.hpp"
#include "dbpi/types.hpp"

namespace dbpi {

/// Turns the strict inequalities of the convergence conditions into predicates.
inline constexpr double strictness_margin = 1e-12;

template <typename Scalar>
struct RootPair {
  Scalar lambda = 0;
  std::complex<Scalar> gamma1, gamma2;
  Scalar magnitude1 = 1;  // |1 + gamma1|
  Scalar magnitude2 = 1;  // |1 + gamma2|
};

/// Roots of x^2 + lambda eta x + lambda beta^2 = 0.
template <typename Scalar>
RootPair<Scalar> gamma_roots(Scalar lambda, Scalar eta, Scalar beta)
{
  using C = std::complex<Scalar>;
  RootPair<Scalar> out;
  out.lambda = lambda;
  const Scalar b = lambda * eta;
  const Scalar c = lambda * beta * beta;
  const Scalar disc = b * b - Scalar(4) * c;
  if (disc >= 0) {
    // Cancellation-free real pair.
    const Scalar q = -(b + std::copysign(std::sqrt(disc), b)) / Scalar(2);
    out.gamma1 = C(q, 0);
    out.gamma2 = q != Scalar(0) ? C(c / q, 0) : C(0, 0);
  } else {
    const Scalar im = std::sqrt(-disc) / Scalar(2);
    out.gamma1 = C(-b / Scalar(2), im);
    out.gamma2 = C(-b / Scalar(2), -im);
  }
  out.magnitude1 = std::abs(C(1) + out.gamma1);
  out.magnitude2 = std::abs(C(1) + out.gamma2);
  return out;
}

template <typename Scalar>
struct Theorem1Entry {
  RootPair<Scalar> roots;
  bool zero_eigenvalue = false;
  bool condition1 = false;  // |1 + gamma_j| <= 1
  bool condition2 = false;  // |1 + gamma_j| == 1 iff lambda == 0
};

template <typename Scalar>
struct Theorem1Report {
  std::vector<Theorem1Entry<Scalar>> entries;  // one per eigenvalue of L (dN)
  bool ok = false;
  /// min over nonzero eigenvalues of 1 - max_j |1 + gamma_j|.
  Scalar margin = std::numeric_limits<Scalar>::infinity();
};

/// Checks both root conditions for every eigenvalue of L. Nonzero eigenvalues
/// must give |1 + gamma_j| <= 1 - 1e-12; zero eigenvalues must give equality.
template <typename Scalar>
Theorem1Report<Scalar> check_theorem1(const GaugeMatrix<Scalar>& gauge, Scalar eta, Scalar beta)
{
  const Scalar margin = Scalar(strictness_margin);
  Theorem1Report<Scalar> report;
  report.ok = true;
  const Vector<Scalar> lambdas = gauge.eigenvalues();
  for (Index s = 0; s < lambdas.size(); ++s) {
    Theorem1Entry<Scalar> e;
    e.roots = gamma_roots(lambdas(s), eta, beta);
    e.zero_eigenvalue = lambdas(s) == Scalar(0);
    const Scalar worst = std::max(e.roots.magnitude1, e.roots.magnitude2);
    if (e.zero_eigenvalue) {
      e.condition1 = worst <= Scalar(1) + margin;
      e.condition2 = std::abs(e.roots.magnitude1 - 1) <= margin && std::abs(e.roots.magnitude2 - 1) <= margin;
    } else {
      e.condition1 = worst <= Scalar(1) - margin;
      e.condition2 = std::abs(e.roots.magnitude1 - 1) > margin && std::abs(e.roots.magnitude2 - 1) > margin;
      report.margin = std::min(report.margin, Scalar(1) - worst);
    }
    report.ok = report.ok && e.condition1 && e.condition2;
    report.entries.push_back(e);
  }
  return report;
}

/// I + A^(eta, beta) = [[I - eta L, beta L^{1/2} U~], [-beta U~^T L^{1/2}, I]].
template <typename Scalar>
Matrix<Scalar> unperturbed_jacobian(const GaugeMatrix<Scalar>& gauge, Scalar eta, Scalar beta)
{
  const Index n = gauge.size(), m = gauge.range_dim();
  const Matrix<Scalar> coupling =
      beta * kron_identity(Matrix<Scalar>(gauge.sqrt_tilde() * gauge.range_tilde()), gauge.dim());
  Matrix<Scalar> c = Matrix<Scalar>::Identity(n + m, n + m);
  c.topLeftCorner(n, n) -= eta * gauge.matrix();
  c.topRightCorner(n, m) = coupling;
  c.bottomLeftCorner(m, n) = -coupling.transpose();
  return c;
}

/// J_F~(psi(x*)) as a function of alpha: C(alpha) = I + A^ + B(alpha), where
/// B(alpha) carries alpha J_R(1_N (x) x*) in its top-left block.
template <typename Scalar>
class ReducedJacobian {
 public:
  ReducedJacobian(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge, Scalar eta, Scalar beta,
                  const VectorArg<Scalar>& x_star, Scalar fixed_point_tol = Scalar(1e-8))
      : d_(sys.dim()), primal_(sys.stacked_dim())
  {
    require_dimension(gauge.size(), sys.stacked_dim(), "gauge size");
    require_fixed_point(sys, x_star, fixed_point_tol);
    base_ = unperturbed_jacobian(gauge, eta, beta);
    jr_ = jacobian_of_residual(sys, stack_copies(x_star, sys.agents()));
  }

  Index dim() const noexcept { return d_; }
  Index size() const noexcept { return base_.rows(); }
  const Matrix<Scalar>& base() const noexcept { return base_; }
  /// J_R(1_N (x) x*), i.e. dC/dalpha restricted to the primal block.
  const Matrix<Scalar>& residual_jacobian() const noexcept { return jr_; }

  Matrix<Scalar> matrix(Scalar alpha) const
  {
    Matrix<Scalar> c = base_;
    c.topLeftCorner(primal_, primal_) += alpha * jr_;
    return c;
  }

  ComplexList<Scalar> eigenvalues(Scalar alpha) const { return dbpi::eigenvalues(matrix(alpha)); }
  Scalar spectral_radius(Scalar alpha) const { return dbpi::spectral_radius(matrix(alpha)); }

 private:
  Index d_;
  Index primal_;
  Matrix<Scalar> base_;
  Matrix<Scalar> jr_;
};

template <typename Scalar>
Matrix<Scalar> assemble_jf_tilde(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge,
                                 const IterationParams<Scalar>& params, const VectorArg<Scalar>& x_star)
{
  return ReducedJacobian<Scalar>(sys, gauge, params.eta, params.beta, x_star).matrix(params.alpha);
}

template <typename Scalar>
struct SemisimpleReport {
  Index expected_multiplicity = 0;  // d
  Index unit_multiplicity = 0;      // eigenvalues within 1e-9 of 1
  Scalar max_other_magnitude = 0;
  Scalar gap = 0;  // 1 - max_other_magnitude
  Scalar principal_angle = 0;
  Index rank = 0;  // rank of (I + A^) - I
  Index size = 0;
  ComplexList<Scalar> eigenvalues;
  bool ok = false;
};

/// Verifies that 1 is a semisimple eigenvalue of I + A^ of multiplicity d with
/// eigenspace ker(L) x {0}, and that every other eigenvalue lies inside the unit disk.
template <typename Scalar>
SemisimpleReport<Scalar> semisimple_check(const GaugeMatrix<Scalar>& gauge, Scalar eta, Scalar beta,
                                          Scalar unit_tol = Scalar(1e-9), Scalar angle_tol = Scalar(1e-8))
{
  if (!check_theorem1(gauge, eta, beta).ok) {
    throw Error(ErrorKind::ConditionsNotMet, "root conditions fail for the given (eta, beta)");
  }
  const Matrix<Scalar> c = unperturbed_jacobian(gauge, eta, beta);
  const Index size = c.rows(), d = gauge.dim();

  SemisimpleReport<Scalar> rep;
  rep.size = size;
  rep.expected_multiplicity = d;
  rep.eigenvalues = eigenvalues(c);
  canonical_sort(rep.eigenvalues);
  for (const auto& v : rep.eigenvalues) {
    if (std::abs(v - Scalar(1)) <= unit_tol) {
      ++rep.unit_multiplicity;
    } else {
      rep.max_other_magnitude = std::max(rep.max_other_magnitude, std::abs(v));
    }
  }
  rep.gap = Scalar(1) - rep.max_other_magnitude;

  // Null space of A^ = C - I from the smallest right singular vectors.
  const Matrix<Scalar> a_hat = c - Matrix<Scalar>::Identity(size, size);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(a_hat, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  rep.rank = 0;
  for (Index i = 0; i < sv.size(); ++i) rep.rank += sv(i) > unit_tol;
  const Matrix<Scalar> null_basis = svd.matrixV().rightCols(d);

  Matrix<Scalar> expected = Matrix<Scalar>::Zero(size, d);
  expected.topRows(gauge.size()) = gauge.kernel_basis();
  rep.principal_angle = largest_principal_angle(null_basis, expected);

  rep.ok = rep.unit_multiplicity == d && rep.max_other_magnitude < Scalar(1) && rep.rank == size - d &&
           rep.principal_angle <= angle_tol;
  return rep;
}

template <typename Scalar>
struct AlphaSearchOptions {
  Scalar alpha_max = Scalar(4);
  Index grid = 64;
  /// Smallest probe is alpha_max * min_fraction.
  Scalar min_fraction = Scalar(1e-6);
  Index bisection_steps = 40;
  Scalar refine_tol = Scalar(1e-12);
};

template <typename Scalar>
struct AlphaStarResult {
  Scalar alpha_star = 0;  // certified lower end of the boundary bracket
  Scalar bracket_high = std::numeric_limits<Scalar>::quiet_NaN();
  bool saturated = false;  // every probe up to alpha_max passed
  std::vector<Scalar> grid_alpha;
  std::vector<Scalar> grid_rho;
};

/// Largest probed alpha with rho(C(a)) < 1 for every probe a <= alpha: a
/// log-spaced grid in (0, alpha_max] up to the first failure, then bisection
/// on the bracketing interval.
template <typename Scalar>
AlphaStarResult<Scalar> find_alpha_star(const ReducedJacobian<Scalar>& jac, const AlphaSearchOptions<Scalar>& opts = {})
{
  const Scalar threshold = Scalar(1) - Scalar(strictness_margin);
  auto passes = [&](Scalar a) { return jac.spectral_radius(a) < threshold; };

  AlphaStarResult<Scalar> out;
  const Index grid = std::max<Index>(opts.grid, 2);
  const Scalar lo = opts.alpha_max * opts.min_fraction;
  const Scalar ratio = std::pow(opts.alpha_max / lo, Scalar(1) / Scalar(grid - 1));
  Scalar last_pass = 0;
  std::optional<Scalar> first_fail;
  for (Index i = 0; i < grid; ++i) {
    const Scalar a = i == grid - 1 ? opts.alpha_max : lo * std::pow(ratio, Scalar(i));
    const Scalar rho = jac.spectral_radius(a);
    out.grid_alpha.push_back(a);
    out.grid_rho.push_back(rho);
    if (!(rho < threshold)) {
      first_fail = a;
      break;
    }
    last_pass = a;
  }
  if (!first_fail) {
    out.alpha_star = opts.alpha_max;
    out.saturated = true;
    return out;
  }
  if (last_pass == Scalar(0)) {
    throw Error(ErrorKind::NoPositiveAlpha,
                "rho(J) = " + std::to_string(double(out.grid_rho.front())) + " at the smallest probe alpha = " +
                    std::to_string(double(lo)));
  }
  Scalar a_lo = last_pass, a_hi = *first_fail;
  for (Index i = 0; i < opts.bisection_steps && a_hi - a_lo > opts.refine_tol; ++i) {
    const Scalar mid = (a_lo + a_hi) / Scalar(2);
    (passes(mid) ? a_lo : a_hi) = mid;
  }
  out.alpha_star = a_lo;
  out.bracket_high = a_hi;
  return out;
}

template <typename Scalar>
struct Eigencurves {
  std::vector<Scalar> alphas;
  std::vector<ComplexList<Scalar>> curves;  // curves[c][i] = lambda_c(alphas[i])
  Index unit_curves = 0;                    // curves 0..unit_curves-1 start at 1
  bool ambiguous = false;
  std::vector<Index> ambiguous_steps;
};

/// Eigenvalues of C(alpha) along the grid, linked by greedy nearest-neighbor
/// matching (curves in index order, ties to the smallest candidate index).
/// Curves starting at 1 come first; the others are ordered by (real, imag).
/// Near-ties (within 1e-12) are recorded in ambiguous_steps.
template <typename Scalar>
Eigencurves<Scalar> trace_eigencurves(const ReducedJacobian<Scalar>& jac, const std::vector<Scalar>& alphas,
                                      Scalar unit_tol = Scalar(1e-9), Scalar tie_tol = Scalar(1e-12))
{
  Eigencurves<Scalar> out;
  out.alphas = alphas;
  if (alphas.empty()) return out;

  ComplexList<Scalar> start = jac.eigenvalues(alphas.front());
  canonical_sort(start);
  std::stable_partition(start.begin(), start.end(), [&](const auto& v) { return std::abs(v - Scalar(1)) <= unit_tol; });
  for (const auto& v : start) {
    out.unit_curves += std::abs(v - Scalar(1)) <= unit_tol;
    out.curves.push_back({v});
  }

  const std::size_t count = start.size();
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    const ComplexList<Scalar> next = jac.eigenvalues(alphas[i]);
    std::vector<bool> taken(count, false);
    bool tie = false;
    for (std::size_t c = 0; c < count; ++c) {
      const auto& prev = out.curves[c].back();
      std::size_t pick = count;
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (std::size_t j = 0; j < count; ++j) {
        if (!taken[j] && std::abs(next[j] - prev) < best) {
          best = std::abs(next[j] - prev);
          pick = j;
        }
      }
      // A tie only matters between distinct candidates.
      for (std::size_t j = 0; j < count; ++j) {
        if (!taken[j] && j != pick && std::abs(next[j] - prev) - best <= tie_tol &&
            std::abs(next[j] - next[pick]) > tie_tol) {
          tie = true;
        }
      }
      taken[pick] = true;
      out.curves[c].push_back(next[pick]);
    }
    if (tie) {
      out.ambiguous = true;
      out.ambiguous_steps.push_back(static_cast<Index>(i));
    }
  }
  return out;
}

template <typename Scalar>
struct DerivativeReport {
  std::vector<Scalar> steps;
  std::vector<ComplexList<Scalar>> slopes;  // (lambda_s(h) - 1) / h for the unit curves
  std::vector<Scalar> distances;            // bottleneck distance to the target multiset
  std::vector<Scalar> hausdorff;
  ComplexList<Scalar> target;  // spectrum of J_H(x*) - I
  Scalar finest_distance = std::numeric_limits<Scalar>::infinity();
  bool decreasing = false;
  bool negative_real_parts = false;
  bool mismatch = true;
  bool ambiguous = false;
};

inline std::vector<double> default_slope_steps() { return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}; }

/// Finite-difference slopes of the eigencurves leaving 1, compared with the
/// spectrum of J_H(x*) - I. Mismatch is reported, not thrown.
template <typename Scalar>
DerivativeReport<Scalar> derivative_check(const ReducedJacobian<Scalar>& jac, const Matrix<Scalar>& jacobian_H,
                                          const std::vector<Scalar>& steps, Scalar tol = Scalar(1e-4),
                                          Scalar noise_floor = Scalar(1e-8))
{
  DerivativeReport<Scalar> rep;
  rep.steps = steps;
  rep.target = eigenvalues(Matrix<Scalar>(jacobian_H - Matrix<Scalar>::Identity(jacobian_H.rows(), jacobian_H.cols())));
  canonical_sort(rep.target);
  for (Scalar h : steps) {
    const Eigencurves<Scalar> curves = trace_eigencurves(jac, std::vector<Scalar>{Scalar(0), h});
    rep.ambiguous = rep.ambiguous || curves.ambiguous;
    ComplexList<Scalar> s;
    for (Index c = 0; c < curves.unit_curves; ++c) s.push_back((curves.curves[c][1] - Scalar(1)) / h);
    canonical_sort(s);
    rep.distances.push_back(multiset_distance(s, rep.target));
    rep.hausdorff.push_back(hausdorff_distance(s, rep.target));
    rep.slopes.push_back(std::move(s));
  }
  if (steps.empty()) return rep;
  rep.finest_distance = rep.distances.back();
  rep.decreasing = true;
  for (std::size_t i = 1; i < rep.distances.size(); ++i) {
    rep.decreasing = rep.decreasing && rep.distances[i] <= rep.distances[i - 1] + noise_floor;
  }
  rep.negative_real_parts = !rep.slopes.back().empty();
  for (const auto& v : rep.slopes.back()) rep.negative_real_parts = rep.negative_real_parts && v.real() < 0;
  rep.mismatch = !(rep.finest_distance <= tol);
  return rep;
}

template <typename Scalar>
struct PsiPoint {
  Vector<Scalar> z;        // 1_N (x) x*
  Vector<Scalar> w_tilde;  // -(alpha/beta) U~^T (L^{1/2})^+ R(1_N (x) x*)
};

/// The fixed point of F~ corresponding to a fixed point x* of H.
template <typename Scalar>
PsiPoint<Scalar> psi_map(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge,
                         const IterationParams<Scalar>& params, const VectorArg<Scalar>& x_star,
                         Scalar fixed_point_tol = Scalar(1e-8))
{
  require_fixed_point(sys, x_star, fixed_point_tol);
  PsiPoint<Scalar> out;
  out.z = stack_copies(x_star, sys.agents());
  const Vector<Scalar> r = stacked_residual(sys, out.z);
  out.w_tilde = -(params.alpha / params.beta) * gauge.project_range(gauge.apply_sqrt_pinv(r));
  return out;
}

template <typename Scalar>
struct RateReport {
  Scalar empirical_rate = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar theoretical_rate = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar slope = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar r_squared = std::numeric_limits<Scalar>::quiet_NaN();
  Index window_begin = 0;  // first iterate index in the fit
  Index window_end = 0;    // one past the last
  Index usable_points = 0;
};

inline constexpr Index min_rate_window = 20;

/// Least-squares slope of log(error_k) over the last window_fraction of the
/// iterates preceding the floor 1e2 * eps * scale; sigma = exp(slope).
template <typename Scalar>
RateReport<Scalar> empirical_rate(std::span<const Scalar> errors, Scalar window_fraction = Scalar(0.5),
                                  Scalar scale = Scalar(1),
                                  Scalar theoretical = std::numeric_limits<Scalar>::quiet_NaN())
{
  const Scalar floor = Scalar(1e2) * std::numeric_limits<Scalar>::epsilon() * scale;
  Index usable = 0;
  while (usable < static_cast<Index>(errors.size()) && std::isfinite(double(errors[usable])) &&
         errors[usable] > floor) {
    ++usable;
  }
  const Index window = static_cast<Index>(std::ceil(double(window_fraction) * double(usable)));
  if (window < min_rate_window) {
    throw Error(ErrorKind::WindowTooShort, std::to_string(window) + " usable points in the fit window (need " +
                                               std::to_string(min_rate_window) + ")");
  }
  RateReport<Scalar> rep;
  rep.theoretical_rate = theoretical;
  rep.usable_points = usable;
  rep.window_end = usable;
  rep.window_begin = usable - window;

  Scalar mk = 0, ml = 0;
  for (Index k = rep.window_begin; k < rep.window_end; ++k) {
    mk += Scalar(k);
    ml += std::log(errors[k]);
  }
  mk /= Scalar(window);
  ml /= Scalar(window);
  Scalar skk = 0, skl = 0, sll = 0;
  for (Index k = rep.window_begin; k < rep.window_end; ++k) {
    const Scalar dk = Scalar(k) - mk, dl = std::log(errors[k]) - ml;
    skk += dk * dk;
    skl += dk * dl;
    sll += dl * dl;
  }
  rep.slope = skl / skk;
  rep.empirical_rate = std::exp(rep.slope);
  rep.r_squared = sll > 0 ? (skl * skl) / (skk * sll) : Scalar(1);
  return rep;
}

template <typename Scalar>
RateReport<Scalar> empirical_rate(const Trajectory<Scalar>& traj, Scalar window_fraction = Scalar(0.5),
                                  Scalar scale = Scalar(1),
                                  Scalar theoretical = std::numeric_limits<Scalar>::quiet_NaN())
{
  return empirical_rate(std::span<const Scalar>(traj.dist_to_ref), window_fraction, scale, theoretical);
}

template <typename Scalar>
struct SpectralOptions {
  AlphaSearchOptions<Scalar> search;
  Index curve_points = 101;
  std::vector<Scalar> slope_steps = {Scalar(1e-2), Scalar(1e-3), Scalar(1e-4), Scalar(1e-5), Scalar(1e-6)};
  Scalar slope_tol = Scalar(1e-4);
};

template <typename Scalar>
struct SpectralReport {
  Vector<Scalar> laplacian_eigenvalues;
  Theorem1Report<Scalar> roots;
  std::optional<SemisimpleReport<Scalar>> semisimple;  // absent when the root conditions fail
  std::optional<AlphaStarResult<Scalar>> alpha_star;
  std::string alpha_status;  // "ok", "saturated" or "NoPositiveAlpha"
  Eigencurves<Scalar> curves;
  DerivativeReport<Scalar> derivative;
};

/// Everything the spectrum command reports for one configuration. Curves span
/// [0, 2 alpha*], capped at alpha_max.
template <typename Scalar>
SpectralReport<Scalar> spectral_report(const ReducedJacobian<Scalar>& jac, const GaugeMatrix<Scalar>& gauge,
                                       const Matrix<Scalar>& jacobian_H, Scalar eta, Scalar beta,
                                       const SpectralOptions<Scalar>& opts = {})
{
  SpectralReport<Scalar> rep;
  rep.laplacian_eigenvalues = gauge.eigenvalues();
  rep.roots = check_theorem1(gauge, eta, beta);
  if (rep.roots.ok) rep.semisimple = semisimple_check(gauge, eta, beta);

  Scalar upper = opts.search.alpha_max;
  try {
    rep.alpha_star = find_alpha_star(jac, opts.search);
    rep.alpha_status = rep.alpha_star->saturated ? "saturated" : "ok";
    if (!rep.alpha_star->saturated) upper = std::min(upper, Scalar(2) * rep.alpha_star->alpha_star);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoPositiveAlpha) throw;
    rep.alpha_status = "NoPositiveAlpha";
  }

  const Index points = std::max<Index>(opts.curve_points, 2);
  std::vector<Scalar> alphas;
  for (Index i = 0; i < points; ++i) alphas.push_back(upper * Scalar(i) / Scalar(points - 1));
  rep.curves = trace_eigencurves(jac, alphas);
  rep.derivative = derivative_check(jac, jacobian_H, opts.slope_steps, opts.slope_tol);
  return rep;
}

}  // namespace dbpi
