#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dbpi/graph.hpp"
#include "dbpi/linalg.hpp"
#include "dbpi/operators.hpp"
#include "dbpi/types.hpp"

namespace dbpi {

enum class Variant { algorithm1, parametric, lifted, reduced };

inline std::string_view to_string(Variant v)
{
  switch (v) {
    case Variant::algorithm1: return "algorithm1";
    case Variant::parametric: return "parametric";
    case Variant::lifted: return "lifted";
    case Variant::reduced: return "reduced";
  }
  return "unknown";
}

/// Step size alpha, dual gain beta (the recursions use beta^2) and primal
/// consensus gain eta.
template <typename Scalar>
struct IterationParams {
  Scalar alpha = Scalar(0.5);
  Scalar beta = Scalar(1) / std::sqrt(Scalar(2));
  Scalar eta = Scalar(1);
  Variant variant = Variant::parametric;

  /// eta = 1, beta^2 = 1/2, for use with L = I - W.
  static IterationParams algorithm1(Scalar alpha)
  {
    return {alpha, Scalar(1) / std::sqrt(Scalar(2)), Scalar(1), Variant::algorithm1};
  }

  Scalar beta_squared() const { return beta * beta; }

  void validate() const
  {
    if (!(alpha > 0) || !(beta > 0) || !(eta > 0) || !std::isfinite(double(alpha)) ||
        !std::isfinite(double(beta)) || !std::isfinite(double(eta))) {
      throw Error(ErrorKind::InvalidParams, "alpha, beta and eta must be finite and positive");
    }
  }
};

template <typename Scalar>
struct StoppingRule {
  Scalar tol_step = Scalar(1e-10);
  Scalar tol_cons = Scalar(1e-8);
  Index max_iters = 50000;
  Scalar divergence_guard = Scalar(1e12);
  /// Keep every k-th state (plus the last); metrics are always dense.
  Index thinning = 1;
  bool record_states = true;
  /// x* for the dist_to_ref metric, when known.
  std::optional<Vector<Scalar>> reference;
};

enum class StepDecision { proceed, converged, diverged };

/// Converged when ||z^{k+1} - z^k||_inf <= tol_step and the consensus error
/// is at most tol_cons; diverged on non-finite iterates or ||z||_inf above the guard.
template <typename Scalar>
StepDecision evaluate_stop(Scalar step_inf, Scalar consensus_error, Scalar iterate_inf,
                           const StoppingRule<Scalar>& rule)
{
  if (!std::isfinite(double(iterate_inf)) || !std::isfinite(double(step_inf)) ||
      iterate_inf > rule.divergence_guard) {
    return StepDecision::diverged;
  }
  if (step_inf <= rule.tol_step && consensus_error <= rule.tol_cons) return StepDecision::converged;
  return StepDecision::proceed;
}

template <typename Scalar>
struct StackedState {
  Index k = 0;
  Vector<Scalar> z;
  std::optional<Vector<Scalar>> w;        // lifted dual, R^{dN}
  std::optional<Vector<Scalar>> w_tilde;  // reduced dual, R^{d(N-1)}
};

template <typename Scalar>
struct Trajectory {
  Variant variant = Variant::parametric;
  RunStatus status = RunStatus::not_converged;
  std::vector<StackedState<Scalar>> states;
  StackedState<Scalar> final_state;
  // Dense per-iterate metrics, index k for z^k, k = 0..iterations().
  std::vector<Scalar> residual_norm;
  std::vector<Scalar> consensus_error;
  std::vector<Scalar> dist_to_ref;  // NaN when no reference was supplied
  std::vector<Scalar> step_norm;    // ||z^k - z^{k-1}||_inf, NaN at k = 0

  Index iterations() const { return static_cast<Index>(residual_norm.size()) - 1; }
};

namespace detail {

template <typename Scalar>
class Recorder {
 public:
  Recorder(Variant variant, Index d, const StoppingRule<Scalar>& rule) : d_(d), rule_(rule)
  {
    if (rule.reference) require_dimension(rule.reference->size(), d, "stopping reference");
    traj_.variant = variant;
  }

  /// Records z^k and its residual; returns the stopping decision against z^{k-1}.
  StepDecision record(const VectorArg<Scalar>& z, const VectorArg<Scalar>& residual,
                      const Vector<Scalar>* w = nullptr, const Vector<Scalar>* w_tilde = nullptr)
  {
    const Index k = static_cast<Index>(traj_.residual_norm.size());
    const Scalar nan = std::numeric_limits<Scalar>::quiet_NaN();
    const Scalar consensus = disagreement(z, d_).norm();
    traj_.residual_norm.push_back(residual.norm());
    traj_.consensus_error.push_back(consensus);
    traj_.dist_to_ref.push_back(rule_.reference ? (z - stack_copies(*rule_.reference, z.size() / d_)).norm()
                                                : nan);

    StepDecision decision = StepDecision::proceed;
    if (k == 0) {
      traj_.step_norm.push_back(nan);
      if (!z.allFinite() || max_abs(z) > rule_.divergence_guard) decision = StepDecision::diverged;
    } else {
      const Scalar step = max_abs(Vector<Scalar>(z - last_z_));
      traj_.step_norm.push_back(step);
      decision = evaluate_stop(step, consensus, max_abs(z), rule_);
    }
    last_z_ = z;

    StackedState<Scalar> state{k, z, {}, {}};
    if (w) state.w = *w;
    if (w_tilde) state.w_tilde = *w_tilde;
    if (rule_.record_states && k % std::max<Index>(1, rule_.thinning) == 0) traj_.states.push_back(state);
    traj_.final_state = std::move(state);
    return decision;
  }

  bool exhausted() const { return static_cast<Index>(traj_.residual_norm.size()) - 1 >= rule_.max_iters; }

  Trajectory<Scalar> finish(StepDecision last)
  {
    traj_.status = last == StepDecision::converged  ? RunStatus::converged
                   : last == StepDecision::diverged ? RunStatus::diverged
                                                    : RunStatus::not_converged;
    if (rule_.record_states && (traj_.states.empty() || traj_.states.back().k != traj_.final_state.k)) {
      traj_.states.push_back(traj_.final_state);
    }
    return std::move(traj_);
  }

 private:
  Index d_;
  const StoppingRule<Scalar>& rule_;
  Vector<Scalar> last_z_;
  Trajectory<Scalar> traj_;
};

}  // namespace detail

/// Two-term recursion with W:
///   z^1     = W z^0 + alpha R(z^0)
///   z^{k+2} = (I + W) z^{k+1} - (I + W)/2 z^k + alpha (R(z^{k+1}) - R(z^k)).
template <typename Scalar>
Trajectory<Scalar> run_algorithm1(const AgentSystem<Scalar>& sys, const WeightMatrix<Scalar>& w, Scalar alpha,
                                  const VectorArg<Scalar>& z0, const StoppingRule<Scalar>& rule = {})
{
  require_dimension(z0.size(), sys.stacked_dim(), "run_algorithm1 z0");
  require_dimension(w.agents() * w.dim(), sys.stacked_dim(), "run_algorithm1 weights");
  if (!(alpha > 0)) throw Error(ErrorKind::InvalidParams, "alpha must be positive");

  detail::Recorder<Scalar> rec(Variant::algorithm1, sys.dim(), rule);
  Vector<Scalar> z_prev = z0;
  Vector<Scalar> r_prev = stacked_residual(sys, z_prev);
  StepDecision decision = rec.record(z_prev, r_prev);
  if (decision != StepDecision::proceed || rec.exhausted()) return rec.finish(decision);

  Vector<Scalar> z = w.apply(z_prev) + alpha * r_prev;
  Vector<Scalar> r = stacked_residual(sys, z);
  decision = rec.record(z, r);
  while (decision == StepDecision::proceed && !rec.exhausted()) {
    const Vector<Scalar> mix = z + w.apply(z);
    const Vector<Scalar> mix_prev = z_prev + w.apply(z_prev);
    Vector<Scalar> next = mix - mix_prev / Scalar(2) + alpha * (r - r_prev);
    z_prev = std::move(z);
    r_prev = std::move(r);
    z = std::move(next);
    r = stacked_residual(sys, z);
    decision = rec.record(z, r);
  }
  return rec.finish(decision);
}

/// Parametric family
///   z^1     = z^0 + alpha R(z^0) - eta L z^0 [+ beta L^{1/2} w^0]
///   z^{k+2} = (2I - eta L) z^{k+1} - (I + beta^2 L - eta L) z^k + alpha (R(z^{k+1}) - R(z^k)).
/// The optional w0 term reproduces the lifted iteration started from a nonzero
/// dual; omitting it gives the standard initialization (w^0 = 0).
template <typename Scalar>
Trajectory<Scalar> run_parametric(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge,
                                  const IterationParams<Scalar>& params, const VectorArg<Scalar>& z0,
                                  const StoppingRule<Scalar>& rule = {},
                                  const std::optional<VectorArg<Scalar>>& w0 = std::nullopt)
{
  params.validate();
  require_dimension(z0.size(), sys.stacked_dim(), "run_parametric z0");
  require_dimension(gauge.size(), sys.stacked_dim(), "run_parametric gauge");
  const Scalar alpha = params.alpha, eta = params.eta, beta2 = params.beta_squared();

  detail::Recorder<Scalar> rec(Variant::parametric, sys.dim(), rule);
  Vector<Scalar> z_prev = z0;
  Vector<Scalar> r_prev = stacked_residual(sys, z_prev);
  StepDecision decision = rec.record(z_prev, r_prev);
  if (decision != StepDecision::proceed || rec.exhausted()) return rec.finish(decision);

  Vector<Scalar> z = z_prev + alpha * r_prev - eta * gauge.apply(z_prev);
  if (w0) {
    require_dimension(w0->size(), sys.stacked_dim(), "run_parametric w0");
    z += params.beta * gauge.apply_sqrt(*w0);
  }
  Vector<Scalar> r = stacked_residual(sys, z);
  decision = rec.record(z, r);
  while (decision == StepDecision::proceed && !rec.exhausted()) {
    const Vector<Scalar> lz = gauge.apply(z);
    const Vector<Scalar> lz_prev = gauge.apply(z_prev);
    Vector<Scalar> next = (Scalar(2) * z - eta * lz) - (z_prev + beta2 * lz_prev - eta * lz_prev) +
                          alpha * (r - r_prev);
    z_prev = std::move(z);
    r_prev = std::move(r);
    z = std::move(next);
    r = stacked_residual(sys, z);
    decision = rec.record(z, r);
  }
  return rec.finish(decision);
}

/// One application of the lifted primal-dual map
///   F(z, w) = (z + alpha R(z) + beta L^{1/2} w - eta L z,  w - beta L^{1/2} z).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> lifted_step(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge,
                                                      const IterationParams<Scalar>& params, const VectorArg<Scalar>& z,
                                                      const VectorArg<Scalar>& w)
{
  const Vector<Scalar> r = stacked_residual(sys, z);
  return {z + params.alpha * r + params.beta * gauge.apply_sqrt(w) - params.eta * gauge.apply(z),
          w - params.beta * gauge.apply_sqrt(z)};
}

/// One application of the reduced map
///   F~(z, w~) = (z + alpha R(z) + beta L^{1/2} U~ w~ - eta L z,  w~ - beta U~^T L^{1/2} z).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> reduced_step(const AgentSystem<Scalar>& sys,
                                                       const GaugeMatrix<Scalar>& gauge,
                                                       const IterationParams<Scalar>& params,
                                                       const VectorArg<Scalar>& z, const VectorArg<Scalar>& w_tilde)
{
  const Vector<Scalar> r = stacked_residual(sys, z);
  return {z + params.alpha * r + params.beta * gauge.apply_sqrt(gauge.lift_range(w_tilde)) -
              params.eta * gauge.apply(z),
          w_tilde - params.beta * gauge.project_range(gauge.apply_sqrt(z))};
}

/// Picard iteration of F. w0 defaults to zero, matching the parametric initialization.
template <typename Scalar>
Trajectory<Scalar> run_lifted(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge,
                              const IterationParams<Scalar>& params, const VectorArg<Scalar>& z0,
                              const std::optional<VectorArg<Scalar>>& w0 = std::nullopt,
                              const StoppingRule<Scalar>& rule = {})
{
  params.validate();
  require_dimension(z0.size(), sys.stacked_dim(), "run_lifted z0");
  require_dimension(gauge.size(), sys.stacked_dim(), "run_lifted gauge");
  Vector<Scalar> z = z0;
  Vector<Scalar> w = w0 ? *w0 : Vector<Scalar>::Zero(sys.stacked_dim());
  require_dimension(w.size(), sys.stacked_dim(), "run_lifted w0");

  detail::Recorder<Scalar> rec(Variant::lifted, sys.dim(), rule);
  Vector<Scalar> r = stacked_residual(sys, z);
  StepDecision decision = rec.record(z, r, &w);
  while (decision == StepDecision::proceed && !rec.exhausted()) {
    Vector<Scalar> z_next = z + params.alpha * r + params.beta * gauge.apply_sqrt(w) - params.eta * gauge.apply(z);
    w -= params.beta * gauge.apply_sqrt(z);
    z = std::move(z_next);
    r = stacked_residual(sys, z);
    decision = rec.record(z, r, &w);
  }
  return rec.finish(decision);
}

/// Picard iteration of F~ on R^{dN} x R^{d(N-1)}.
template <typename Scalar>
Trajectory<Scalar> run_reduced(const AgentSystem<Scalar>& sys, const GaugeMatrix<Scalar>& gauge,
                               const IterationParams<Scalar>& params, const VectorArg<Scalar>& z0,
                               const std::optional<VectorArg<Scalar>>& w_tilde0 = std::nullopt,
                               const StoppingRule<Scalar>& rule = {})
{
  params.validate();
  require_dimension(z0.size(), sys.stacked_dim(), "run_reduced z0");
  require_dimension(gauge.size(), sys.stacked_dim(), "run_reduced gauge");
  Vector<Scalar> z = z0;
  Vector<Scalar> wt = w_tilde0 ? *w_tilde0 : Vector<Scalar>::Zero(gauge.range_dim());
  require_dimension(wt.size(), gauge.range_dim(), "run_reduced w_tilde0");

  detail::Recorder<Scalar> rec(Variant::reduced, sys.dim(), rule);
  Vector<Scalar> r = stacked_residual(sys, z);
  StepDecision decision = rec.record(z, r, nullptr, &wt);
  while (decision == StepDecision::proceed && !rec.exhausted()) {
    Vector<Scalar> z_next = z + params.alpha * r + params.beta * gauge.apply_sqrt(gauge.lift_range(wt)) -
                            params.eta * gauge.apply(z);
    wt -= params.beta * gauge.project_range(gauge.apply_sqrt(z));
    z = std::move(z_next);
    r = stacked_residual(sys, z);
    decision = rec.record(z, r, nullptr, &wt);
  }
  return rec.finish(decision);
}

/// Throws NotFixedPoint unless ||H(x*) - x*|| <= tol * max(1, ||x*||).
template <typename Scalar>
void require_fixed_point(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& x_star, Scalar tol)
{
  require_dimension(x_star.size(), sys.dim(), "fixed point");
  const Scalar defect = (average_map(sys, x_star) - x_star).norm();
  if (!(defect <= tol * std::max<Scalar>(Scalar(1), x_star.norm()))) {
    throw Error(ErrorKind::NotFixedPoint, "||H(x) - x|| = " + std::to_string(double(defect)));
  }
}

/// Limit of the lifted dual: U^ U^T w^0 - (alpha/beta) (L^{1/2})^+ R(1_N (x) x*).
template <typename Scalar>
Vector<Scalar> limit_dual(const VectorArg<Scalar>& w0, const GaugeMatrix<Scalar>& gauge,
                          const IterationParams<Scalar>& params, const AgentSystem<Scalar>& sys,
                          const VectorArg<Scalar>& x_star, Scalar tol = Scalar(1e-8))
{
  require_dimension(w0.size(), sys.stacked_dim(), "limit_dual w0");
  require_fixed_point(sys, x_star, tol);
  const Vector<Scalar> r = stacked_residual(sys, stack_copies(x_star, sys.agents()));
  const Vector<Scalar> kernel_part = stack_copies(block_mean(w0, sys.dim()), sys.agents());
  return kernel_part - (params.alpha / params.beta) * gauge.apply_sqrt_pinv(r);
}

}  // namespace dbpi
