#pragma once

#include <Eigen/SVD>

#include "sparsechan/core.hpp"

namespace sparsechan {

/// Rank-revealing least squares: x = A^+ b with singular values below
/// cutoff * sigma_max dropped.
struct LeastSquaresResult {
  CVector x;
  int rank = 0;
};

inline Eigen::BDCSVD<CMatrix> rank_revealing_svd(const CMatrix& a, double cutoff = kRankCutoff) {
  Eigen::BDCSVD<CMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(cutoff);
  return svd;
}

inline LeastSquaresResult least_squares(const CMatrix& a, const CVector& b,
                                        double cutoff = kRankCutoff) {
  if (a.cols() == 0) return {CVector(0), 0};
  auto svd = rank_revealing_svd(a, cutoff);
  return {svd.solve(b), static_cast<int>(svd.rank())};
}

inline int numerical_rank(const CMatrix& a, double cutoff = kRankCutoff) {
  if (a.cols() == 0 || a.rows() == 0) return 0;
  Eigen::BDCSVD<CMatrix> svd(a);
  svd.setThreshold(cutoff);
  return static_cast<int>(svd.rank());
}

/// Moore-Penrose pseudo-inverse with the library's relative cutoff.
inline CMatrix pseudo_inverse(const CMatrix& a, double cutoff = kRankCutoff) {
  if (a.cols() == 0) return CMatrix(0, a.rows());
  auto svd = rank_revealing_svd(a, cutoff);
  const auto r = svd.rank();
  const auto& s = svd.singularValues();
  CMatrix v = svd.matrixV().leftCols(r);
  for (Eigen::Index i = 0; i < r; ++i) v.col(i) /= s(i);
  return v * svd.matrixU().leftCols(r).adjoint();
}

/// Orthogonal projector onto range(a): a a^+.
inline CMatrix range_projector(const CMatrix& a, double cutoff = kRankCutoff) {
  if (a.cols() == 0) return CMatrix::Zero(a.rows(), a.rows());
  auto svd = rank_revealing_svd(a, cutoff);
  const CMatrix u = svd.matrixU().leftCols(svd.rank());
  return u * u.adjoint();
}

/// Count of eigenvalues of a Hermitian PSD matrix above rel * max eigenvalue.
inline int hermitian_rank(const CMatrix& h, double rel) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
  const RVector& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  int r = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > rel * top) ++r;
  return r;
}

}  // namespace sparsechan
