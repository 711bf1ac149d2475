#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace sparsechan {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Relative singular-value cutoff used by every pseudo-inverse in the library.
inline constexpr double kRankCutoff = 1e-8;

// Delays closer than this (in units of the sample period) are one delay.
inline constexpr double kDuplicateDelayFraction = 1e-6;

/// Raised when a pseudo-inverse would need to drop directions that the
/// caller requires to be present (e.g. genie LS on a rank-deficient P).
class numerical_rank_error : public std::runtime_error {
 public:
  numerical_rank_error(const std::string& what, int rank, int columns)
      : std::runtime_error(what), rank_(rank), columns_(columns) {}
  int rank() const noexcept { return rank_; }
  int columns() const noexcept { return columns_; }

 private:
  int rank_;
  int columns_;
};

/// Iterative solver ran out of iterations; carries the last iterate.
class convergence_error : public std::runtime_error {
 public:
  convergence_error(const std::string& what, CVector last_iterate)
      : std::runtime_error(what), last_(std::move(last_iterate)) {}
  const CVector& last_iterate() const noexcept { return last_; }

 private:
  CVector last_;
};

class invalid_state_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration failed validation. `path()` is the dotted key of the
/// offending field, e.g. "channel.amplitude.sigma_alpha2".
class schema_error : public std::invalid_argument {
 public:
  schema_error(std::string path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

inline double to_db(double x) { return 10.0 * std::log10(x); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace sparsechan
