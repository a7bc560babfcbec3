#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dbpi/linalg.hpp"
#include "dbpi/types.hpp"

namespace dbpi {

/// One agent's map H_n : R^d -> R^d. Evaluation must be reentrant.
template <typename Scalar>
struct AgentMap {
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  Index dim = 0;
  std::function<Vec(const Vec&)> evaluate;
  /// Optional; when empty the Jacobian is taken by central differences.
  std::function<Mat(const Vec&)> jacobian;
  std::string family = "custom";

  bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

template <typename Scalar>
class AgentSystem {
 public:
  explicit AgentSystem(std::vector<AgentMap<Scalar>> maps) : maps_(std::move(maps))
  {
    if (maps_.empty()) throw Error(ErrorKind::DimensionMismatch, "agent system needs at least one map");
    d_ = maps_.front().dim;
    if (d_ < 1) throw Error(ErrorKind::DimensionMismatch, "map dimension must be positive");
    for (const auto& m : maps_) require_dimension(m.dim, d_, "agent map dimension");
  }

  Index agents() const noexcept { return static_cast<Index>(maps_.size()); }
  Index dim() const noexcept { return d_; }
  Index stacked_dim() const noexcept { return d_ * agents(); }
  const AgentMap<Scalar>& map(Index n) const { return maps_.at(n); }
  const std::vector<AgentMap<Scalar>>& maps() const noexcept { return maps_; }

 private:
  std::vector<AgentMap<Scalar>> maps_;
  Index d_ = 0;
};

/// H(x) = (1/N) sum_n H_n(x), summed in agent order then scaled.
template <typename Scalar>
Vector<Scalar> average_map(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& x)
{
  require_dimension(x.size(), sys.dim(), "average_map argument");
  Vector<Scalar> sum = Vector<Scalar>::Zero(sys.dim());
  for (const auto& m : sys.maps()) sum += m.evaluate(x);
  return sum / Scalar(sys.agents());
}

/// R(z): block n is H_n(z_n) - z_n.
template <typename Scalar>
Vector<Scalar> stacked_residual(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& z)
{
  require_dimension(z.size(), sys.stacked_dim(), "stacked_residual argument");
  const Index d = sys.dim();
  Vector<Scalar> r(z.size());
  for (Index n = 0; n < sys.agents(); ++n) {
    const Vector<Scalar> zn = z.segment(n * d, d);
    r.segment(n * d, d) = sys.map(n).evaluate(zn) - zn;
  }
  return r;
}

/// Central differences with h_s = sqrt(eps) * max(1, |x_s|).
template <typename Scalar>
Matrix<Scalar> finite_difference_jacobian(const std::function<Vector<Scalar>(const Vector<Scalar>&)>& f,
                                          const Vector<Scalar>& x)
{
  const Scalar root_eps = std::sqrt(std::numeric_limits<Scalar>::epsilon());
  const Vector<Scalar> f0 = f(x);
  Matrix<Scalar> jac(f0.size(), x.size());
  for (Index s = 0; s < x.size(); ++s) {
    const Scalar h = root_eps * std::max<Scalar>(Scalar(1), std::abs(x(s)));
    Vector<Scalar> forward = x, backward = x;
    forward(s) += h;
    backward(s) -= h;
    // Use the representable step actually taken.
    jac.col(s) = (f(forward) - f(backward)) / (forward(s) - backward(s));
  }
  return jac;
}

enum class JacobianMode { analytic, finite_difference };

template <typename Scalar>
Matrix<Scalar> map_jacobian(const AgentMap<Scalar>& m, const Vector<Scalar>& x,
                            JacobianMode mode = JacobianMode::analytic)
{
  if (mode == JacobianMode::analytic && m.has_jacobian()) return m.jacobian(x);
  return finite_difference_jacobian<Scalar>(m.evaluate, x);
}

/// J_H(x) = (1/N) sum_n J_{H_n}(x). Analytic mode falls back to finite
/// differences for maps without an analytic Jacobian.
template <typename Scalar>
Matrix<Scalar> jacobian_of_average(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& x,
                                   JacobianMode mode = JacobianMode::analytic)
{
  require_dimension(x.size(), sys.dim(), "jacobian_of_average argument");
  Matrix<Scalar> sum = Matrix<Scalar>::Zero(sys.dim(), sys.dim());
  for (const auto& m : sys.maps()) sum += map_jacobian(m, x, mode);
  return sum / Scalar(sys.agents());
}

/// Block-diagonal J_R(z) with blocks J_{H_n}(z_n) - I_d.
template <typename Scalar>
Matrix<Scalar> jacobian_of_residual(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& z,
                                    JacobianMode mode = JacobianMode::analytic)
{
  require_dimension(z.size(), sys.stacked_dim(), "jacobian_of_residual argument");
  const Index d = sys.dim();
  Matrix<Scalar> jac = Matrix<Scalar>::Zero(z.size(), z.size());
  for (Index n = 0; n < sys.agents(); ++n) {
    const Vector<Scalar> zn = z.segment(n * d, d);
    jac.block(n * d, n * d, d, d) = map_jacobian(sys.map(n), zn, mode) - Matrix<Scalar>::Identity(d, d);
  }
  return jac;
}

template <typename Scalar>
struct FixedPointCertificate {
  Vector<Scalar> x_star;
  Scalar residual_norm = 0;
  Matrix<Scalar> jacobian_H;
  Scalar spectral_radius = 0;
  bool is_attractor = false;
};

inline constexpr double default_fixed_point_tolerance = 1e-10;

/// Evaluates the attractor condition rho(J_H(x)) < 1 at a candidate fixed point.
template <typename Scalar>
FixedPointCertificate<Scalar> certify_fixed_point(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& x,
                                                  Scalar tol = Scalar(default_fixed_point_tolerance))
{
  FixedPointCertificate<Scalar> cert;
  cert.x_star = x;
  cert.residual_norm = (average_map(sys, x) - x).norm();
  cert.jacobian_H = jacobian_of_average(sys, x);
  cert.spectral_radius = spectral_radius(cert.jacobian_H);
  cert.is_attractor = cert.spectral_radius < Scalar(1) && cert.residual_norm <= tol;
  return cert;
}

template <typename Scalar>
struct PicardOptions {
  Index max_iters = 50000;
  Scalar tol = Scalar(default_fixed_point_tolerance);
  Scalar divergence_guard = Scalar(1e12);
  Scalar fixed_point_tol = Scalar(default_fixed_point_tolerance);
};

template <typename Scalar>
struct PicardResult {
  FixedPointCertificate<Scalar> certificate;
  std::vector<Vector<Scalar>> trajectory;
  RunStatus status = RunStatus::not_converged;
  Index iterations = 0;
};

/// x^{k+1} = H(x^k), stopping when ||x^{k+1} - x^k|| <= tol.
template <typename Scalar>
PicardResult<Scalar> centralized_picard(const AgentSystem<Scalar>& sys, const VectorArg<Scalar>& x0,
                                        const PicardOptions<Scalar>& opts = {})
{
  require_dimension(x0.size(), sys.dim(), "centralized_picard start");
  PicardResult<Scalar> out;
  out.trajectory.push_back(x0);
  Vector<Scalar> x = x0;
  for (Index k = 0; k < opts.max_iters; ++k) {
    Vector<Scalar> next = average_map(sys, x);
    out.trajectory.push_back(next);
    out.iterations = k + 1;
    if (!next.allFinite() || max_abs(next) > opts.divergence_guard) {
      out.status = RunStatus::diverged;
      out.certificate.x_star = next;
      out.certificate.residual_norm = std::numeric_limits<Scalar>::infinity();
      out.certificate.spectral_radius = std::numeric_limits<Scalar>::infinity();
      return out;
    }
    const Scalar step = (next - x).norm();
    x = std::move(next);
    if (step <= opts.tol) {
      out.status = RunStatus::converged;
      break;
    }
  }
  out.certificate = certify_fixed_point(sys, x, opts.fixed_point_tol);
  return out;
}

/// Newton polish of a fixed point: solves (J_H - I) delta = x - H(x). Used to
/// obtain reference points accurate to machine precision for rate estimates,
/// and to locate repelling fixed points the Picard iteration cannot reach.
template <typename Scalar>
Vector<Scalar> newton_fixed_point(const AgentSystem<Scalar>& sys, VectorArg<Scalar> x, Index max_steps = 50,
                                  Scalar tol = Scalar(0))
{
  const Matrix<Scalar> eye = Matrix<Scalar>::Identity(sys.dim(), sys.dim());
  for (Index k = 0; k < max_steps; ++k) {
    const Vector<Scalar> residual = average_map(sys, x) - x;
    if (!residual.allFinite()) break;
    const Matrix<Scalar> jac = jacobian_of_average(sys, x) - eye;
    const Vector<Scalar> delta = jac.fullPivLu().solve(-residual);
    if (!delta.allFinite()) break;
    const Vector<Scalar> candidate = x + delta;
    if ((average_map(sys, candidate) - candidate).norm() > residual.norm() && k > 0) break;
    x = candidate;
    if (delta.norm() <= tol * std::max<Scalar>(Scalar(1), x.norm())) break;
  }
  return x;
}

// Example families. Each attaches its analytic Jacobian.

/// H(x) = A x + b.
template <typename Scalar>
AgentMap<Scalar> affine_map(const Matrix<Scalar>& a, const Vector<Scalar>& b)
{
  require_dimension(a.cols(), a.rows(), "affine A columns");
  require_dimension(b.size(), a.rows(), "affine b");
  AgentMap<Scalar> m;
  m.dim = a.rows();
  m.family = "affine";
  m.evaluate = [a, b](const Vector<Scalar>& x) -> Vector<Scalar> { return a * x + b; };
  m.jacobian = [a](const Vector<Scalar>&) -> Matrix<Scalar> { return a; };
  return m;
}

/// H = I - grad f with f(x) = x^T Q x / 2 - c^T x, i.e. one unit gradient step.
template <typename Scalar>
AgentMap<Scalar> quadratic_gradient_map(const Matrix<Scalar>& q, const Vector<Scalar>& c)
{
  require_dimension(q.cols(), q.rows(), "quadratic Q columns");
  require_dimension(c.size(), q.rows(), "quadratic c");
  const Scalar scale = std::max<Scalar>(Scalar(1), max_abs(q));
  if (max_abs(Matrix<Scalar>(q - q.transpose())) > Scalar(1e-12) * scale) {
    throw Error(ErrorKind::NonSymmetricQ, "Q must be symmetric");
  }
  AgentMap<Scalar> m;
  m.dim = q.rows();
  m.family = "quadratic_gradient";
  m.evaluate = [q, c](const Vector<Scalar>& x) -> Vector<Scalar> { return x - (q * x - c); };
  const Matrix<Scalar> jac = Matrix<Scalar>::Identity(q.rows(), q.rows()) - q;
  m.jacobian = [jac](const Vector<Scalar>&) -> Matrix<Scalar> { return jac; };
  return m;
}

/// H(x)_i = r x_i (1 - x_i) coordinatewise.
template <typename Scalar>
AgentMap<Scalar> logistic_map(Scalar r, Index d = 1)
{
  if (d < 1) throw Error(ErrorKind::DimensionMismatch, "logistic dimension must be positive");
  AgentMap<Scalar> m;
  m.dim = d;
  m.family = "logistic";
  m.evaluate = [r](const Vector<Scalar>& x) -> Vector<Scalar> {
    return (r * x.array() * (Scalar(1) - x.array())).matrix();
  };
  m.jacobian = [r](const Vector<Scalar>& x) -> Matrix<Scalar> {
    return (r * (Scalar(1) - Scalar(2) * x.array())).matrix().asDiagonal();
  };
  return m;
}

}  // namespace dbpi
