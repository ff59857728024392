#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "llp/common.hpp"

namespace llp {

/// Determinant threshold below which the 2x2 normal-equation matrix is
/// treated as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

/// Per-group class proportions. Row g is (share of targets, share of
/// non-targets) among the epochs of group g; rows sum to 1.
struct MixingMatrix {
  std::vector<std::array<double, 2>> rows;

  std::size_t group_count() const { return rows.size(); }

  /// The two-group matrix realised by the modified speller paradigm:
  /// 3 of 8 highlights are targets in group 1, 2 of 18 in group 2.
  static MixingMatrix speller() {
    return MixingMatrix{{{3.0 / 8.0, 5.0 / 8.0}, {2.0 / 18.0, 16.0 / 18.0}}};
  }

  /// Fully pure groups: group 1 all targets, group 2 all non-targets.
  /// Mean reconstruction degenerates to the supervised class means.
  static MixingMatrix identity() {
    return MixingMatrix{{{1.0, 0.0}, {0.0, 1.0}}};
  }
};

struct MixingReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

namespace detail {

/// Normal-equation matrix Pi^T Pi of a G x 2 mixing matrix.
inline Eigen::Matrix2d normal_matrix(const MixingMatrix& m) {
  Eigen::Matrix2d n = Eigen::Matrix2d::Zero();
  for (const auto& row : m.rows) {
    n(0, 0) += row[0] * row[0];
    n(0, 1) += row[0] * row[1];
    n(1, 1) += row[1] * row[1];
  }
  n(1, 0) = n(0, 1);
  return n;
}

}  // namespace detail

/// Checks that a mixing matrix is usable for mean reconstruction:
/// at least two groups, entries in [0, 1], rows summing to 1, full
/// column rank. Returns all violations instead of stopping at the first.
inline MixingReport validate_mixing(const MixingMatrix& m) {
  MixingReport report;
  if (m.group_count() < 2) {
    report.violations.push_back("needs at least 2 groups, got " +
                                std::to_string(m.group_count()));
    return report;
  }
  for (std::size_t g = 0; g < m.rows.size(); ++g) {
    const auto& row = m.rows[g];
    for (int c = 0; c < 2; ++c) {
      if (!(row[c] >= 0.0 && row[c] <= 1.0)) {
        std::ostringstream os;
        os << "entry (" << g << ", " << c << ") = " << row[c]
           << " outside [0, 1]";
        report.violations.push_back(os.str());
      }
    }
    const double sum = row[0] + row[1];
    if (std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "row " << g << " sums to " << sum << ", expected 1";
      report.violations.push_back(os.str());
    }
  }
  const double det = detail::normal_matrix(m).determinant();
  if (!(det > kRankTolerance)) {
    std::ostringstream os;
    os << "rank deficient: det of normal matrix = " << det
       << " (all rows proportional?)";
    report.violations.push_back(os.str());
  }
  return report;
}

/// Reconstruction weights nu: a 2 x G matrix with
/// mu_plus = sum_g nu(0, g) * group_mean_g and mu_minus likewise.
/// Equals the Moore-Penrose pseudoinverse (Pi^T Pi)^-1 Pi^T.
struct InverseCoefficients {
  Eigen::MatrixXd nu;

  std::size_t group_count() const {
    return static_cast<std::size_t>(nu.cols());
  }
};

/// Least-squares inverse of the mixing system. Throws SingularMatrixError
/// when the two columns of the matrix are (numerically) proportional.
inline InverseCoefficients pseudoinverse(const MixingMatrix& m) {
  if (m.group_count() < 2) {
    throw ValueError("pseudoinverse: needs at least 2 groups");
  }
  const Eigen::Matrix2d n = detail::normal_matrix(m);
  const double det = n.determinant();
  if (!(det > kRankTolerance)) {
    std::ostringstream os;
    os << "pseudoinverse: mixing matrix is rank deficient (det = " << det
       << ")";
    throw SingularMatrixError(os.str());
  }
  Eigen::Matrix2d inv;
  inv << n(1, 1), -n(0, 1), -n(0, 1), n(0, 0);
  inv /= det;

  const auto g_count = static_cast<Eigen::Index>(m.group_count());
  Eigen::MatrixXd pi_t(2, g_count);
  for (Eigen::Index g = 0; g < g_count; ++g) {
    pi_t(0, g) = m.rows[static_cast<std::size_t>(g)][0];
    pi_t(1, g) = m.rows[static_cast<std::size_t>(g)][1];
  }
  return InverseCoefficients{inv * pi_t};
}

/// Per-group average epochs with the number of epochs behind each average.
struct GroupMeans {
  std::vector<FeatureVector> means;
  std::vector<std::size_t> counts;

  std::size_t group_count() const { return means.size(); }
};

struct ClassMeans {
  FeatureVector mu_plus;
  FeatureVector mu_minus;
};

/// Linear recombination of group means into class means.
inline ClassMeans reconstruct_means(const InverseCoefficients& coeffs,
                                    const GroupMeans& groups) {
  const std::size_t g_count = groups.group_count();
  if (g_count != coeffs.group_count()) {
    throw ValueError("reconstruct_means: coefficient columns (" +
                     std::to_string(coeffs.group_count()) +
                     ") != group count (" + std::to_string(g_count) + ")");
  }
  if (g_count == 0) {
    throw ValueError("reconstruct_means: no groups");
  }
  if (groups.counts.size() != g_count) {
    throw ValueError("reconstruct_means: counts size mismatch");
  }
  const Eigen::Index dim = groups.means[0].size();
  for (std::size_t g = 0; g < g_count; ++g) {
    if (groups.counts[g] == 0) {
      throw InsufficientDataError("reconstruct_means: group " +
                                  std::to_string(g) + " has no epochs");
    }
    if (groups.means[g].size() != dim) {
      throw ValueError("reconstruct_means: group " + std::to_string(g) +
                       " has dimension " +
                       std::to_string(groups.means[g].size()) + ", expected " +
                       std::to_string(dim));
    }
  }
  ClassMeans out;
  out.mu_plus = FeatureVector::Zero(dim);
  out.mu_minus = FeatureVector::Zero(dim);
  for (std::size_t g = 0; g < g_count; ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    out.mu_plus += coeffs.nu(0, gi) * groups.means[g];
    out.mu_minus += coeffs.nu(1, gi) * groups.means[g];
  }
  return out;
}

/// Noise amplification factor of a mixing matrix:
/// G * sum of squared reconstruction weights over both classes.
/// Scales the variance of the reconstructed class means relative to
/// estimating pure class means from the same number of epochs; equals 4
/// for the identity matrix and grows as rows become more alike.
inline double noise_amplification(const MixingMatrix& m) {
  const InverseCoefficients coeffs = pseudoinverse(m);
  return static_cast<double>(m.group_count()) * coeffs.nu.array().square().sum();
}

}  // namespace llp
