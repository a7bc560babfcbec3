#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "dbpi/types.hpp"

namespace dbpi {

// Stacked vectors in R^{dN} are stored agent-major: block n occupies
// entries [n*d, (n+1)*d). Reshaped as a d x N column-major matrix, column n
// is agent n's block, so (M (x) I_d) v == vec(reshape(v) * M^T).

/// Applies (M (x) I_d) to v without forming the Kronecker product.
template <typename Scalar>
Vector<Scalar> kron_apply(const Matrix<Scalar>& m, Index d, const Vector<Scalar>& v)
{
  require_dimension(v.size(), d * m.cols(), "kron_apply operand");
  Eigen::Map<const Matrix<Scalar>> blocks(v.data(), d, m.cols());
  Matrix<Scalar> out = blocks * m.transpose();
  return Eigen::Map<const Vector<Scalar>>(out.data(), out.size());
}

/// Materializes M (x) I_d.
template <typename Scalar>
Matrix<Scalar> kron_identity(const Matrix<Scalar>& m, Index d)
{
  Matrix<Scalar> out = Matrix<Scalar>::Zero(m.rows() * d, m.cols() * d);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != Scalar(0)) {
        out.block(i * d, j * d, d, d).diagonal().setConstant(m(i, j));
      }
    }
  }
  return out;
}

/// 1_N (x) x.
template <typename Scalar>
Vector<Scalar> stack_copies(const Vector<Scalar>& x, Index n_agents)
{
  return x.replicate(n_agents, 1);
}

/// (1/N) sum_n z_n, i.e. the block average of a stacked vector.
template <typename Scalar>
Vector<Scalar> block_mean(const Vector<Scalar>& z, Index d)
{
  const Index n_agents = z.size() / d;
  Eigen::Map<const Matrix<Scalar>> blocks(z.data(), d, n_agents);
  return blocks.rowwise().sum() / Scalar(n_agents);
}

/// z - 1_N (x) mean(z): the component of z orthogonal to the consensus subspace.
template <typename Scalar>
Vector<Scalar> disagreement(const Vector<Scalar>& z, Index d)
{
  return z - stack_copies(block_mean(z, d), z.size() / d);
}

template <typename Derived>
typename Derived::RealScalar max_abs(const Eigen::MatrixBase<Derived>& m)
{
  if (m.size() == 0) return 0;
  return m.cwiseAbs().maxCoeff();
}

template <typename Scalar>
ComplexList<Scalar> eigenvalues(const Matrix<Scalar>& m)
{
  if (m.rows() == 0) return {};
  Eigen::EigenSolver<Matrix<Scalar>> solver(m, false);
  const auto& values = solver.eigenvalues();
  return ComplexList<Scalar>(values.data(), values.data() + values.size());
}

template <typename Scalar>
Scalar spectral_radius(const Matrix<Scalar>& m)
{
  Scalar rho = 0;
  for (const auto& v : eigenvalues(m)) rho = std::max(rho, std::abs(v));
  return rho;
}

/// Lexicographic (real, imag) order; used to canonicalize spectra for comparison.
template <typename Scalar>
void canonical_sort(ComplexList<Scalar>& values)
{
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

/// Symmetric Hausdorff distance between two finite point sets in C.
template <typename Scalar>
Scalar hausdorff_distance(const ComplexList<Scalar>& a, const ComplexList<Scalar>& b)
{
  if (a.empty() && b.empty()) return 0;
  if (a.empty() || b.empty()) return std::numeric_limits<Scalar>::infinity();
  auto directed = [](const ComplexList<Scalar>& from, const ComplexList<Scalar>& to) {
    Scalar worst = 0;
    for (const auto& p : from) {
      Scalar best = std::numeric_limits<Scalar>::infinity();
      for (const auto& q : to) best = std::min(best, std::abs(p - q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

/// Bottleneck distance between equal-size multisets: min over bijections of the
/// largest matched gap. Exhaustive up to 8 points, greedy beyond.
template <typename Scalar>
Scalar multiset_distance(const ComplexList<Scalar>& a, const ComplexList<Scalar>& b)
{
  if (a.size() != b.size()) return std::numeric_limits<Scalar>::infinity();
  if (a.empty()) return 0;
  const std::size_t n = a.size();
  if (n <= 8) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Scalar best = std::numeric_limits<Scalar>::infinity();
    do {
      Scalar worst = 0;
      for (std::size_t i = 0; i < n && worst < best; ++i) {
        worst = std::max(worst, std::abs(a[i] - b[perm[i]]));
      }
      best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  std::vector<bool> used(n, false);
  Scalar worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pick = n;
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!used[j] && std::abs(a[i] - b[j]) < best) {
        best = std::abs(a[i] - b[j]);
        pick = j;
      }
    }
    used[pick] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

/// Largest principal angle between the column spans of two orthonormal bases.
template <typename Scalar>
Scalar largest_principal_angle(const Matrix<Scalar>& q1, const Matrix<Scalar>& q2)
{
  if (q1.cols() == 0 && q2.cols() == 0) return 0;
  if (q1.cols() != q2.cols()) return std::numeric_limits<Scalar>::infinity();
  // sin of the largest angle is the spectral norm of (I - Q2 Q2^T) Q1.
  Matrix<Scalar> residual = q1 - q2 * (q2.transpose() * q1);
  Eigen::JacobiSVD<Matrix<Scalar>> svd(residual);
  const Scalar s = std::min<Scalar>(svd.singularValues()(0), Scalar(1));
  return std::asin(s);
}

}  // namespace dbpi
