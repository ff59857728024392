#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "llp/common.hpp"
#include "llp/mixing.hpp"
#include "llp/sequence.hpp"

namespace llp {

/// Regularised covariance estimate: (1 - gamma) * C + gamma * nu * I with
/// nu the mean diagonal of C and gamma the analytic shrinkage intensity.
struct ShrunkCovariance {
  Eigen::MatrixXd matrix;
  double gamma = 0.0;
  double target_scale = 0.0;  // nu
  bool degenerate = false;    // no scatter at all (e.g. identical epochs)
};

namespace detail {

/// Shrinkage intensity from the moments of centred samples:
/// sum_q2 = sum of squared squared-norms of the centred samples,
/// c_ml the maximum-likelihood covariance. Formula of the optimal
/// analytic shrinkage towards a scaled identity.
inline double shrinkage_intensity(double sum_q2, const Eigen::MatrixXd& c_ml,
                                  std::size_t n) {
  const double nd = static_cast<double>(n);
  const double dim = static_cast<double>(c_ml.rows());
  const double m = c_ml.trace() / dim;
  Eigen::MatrixXd centred = c_ml;
  centred.diagonal().array() -= m;
  const double delta2 = centred.squaredNorm();
  if (!(delta2 > 0.0)) return 1.0;
  double beta2 = sum_q2 / (nd * nd) - c_ml.squaredNorm() / nd;
  beta2 = std::max(beta2, 0.0);
  return std::min(beta2, delta2) / delta2;
}

inline ShrunkCovariance assemble_shrunk(const Eigen::MatrixXd& c,
                                        double gamma) {
  ShrunkCovariance out;
  out.gamma = gamma;
  out.target_scale = c.diagonal().mean();
  out.degenerate = !(out.target_scale > 0.0);
  const Eigen::Index d = c.rows();
  out.matrix = (1.0 - gamma) * c;
  out.matrix.diagonal().array() += gamma * out.target_scale;
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  (void)d;
  return out;
}

}  // namespace detail

/// Running state of the unsupervised decoder. Keeps per-group first
/// moments plus the global moments needed to produce the pooled shrunk
/// covariance at any time; epochs themselves are not stored.
class OnlineLLPState {
 public:
  OnlineLLPState(Eigen::Index dim, std::size_t groups)
      : dim_(dim),
        group_sums_(groups, Eigen::VectorXd::Zero(dim)),
        group_counts_(groups, 0),
        sum_(Eigen::VectorXd::Zero(dim)),
        outer_(Eigen::MatrixXd::Zero(dim, dim)),
        norm_weighted_sum_(Eigen::VectorXd::Zero(dim)) {
    if (dim < 1) throw ValueError("OnlineLLPState: dimension must be >= 1");
    if (groups < 2) throw ValueError("OnlineLLPState: needs at least 2 groups");
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t group_count() const { return group_sums_.size(); }
  std::size_t total_count() const { return total_; }
  std::size_t count(std::size_t group) const { return group_counts_.at(group); }

  void reset() {
    for (auto& s : group_sums_) s.setZero();
    std::fill(group_counts_.begin(), group_counts_.end(), 0);
    sum_.setZero();
    outer_.setZero();
    norm_weighted_sum_.setZero();
    sq_norm_sq_sum_ = 0.0;
    total_ = 0;
  }

  /// Adds one epoch to the given (0-based) group.
  void add(const FeatureVector& x, std::size_t group) {
    if (x.size() != dim_) {
      throw ValueError("OnlineLLPState::add: epoch has dimension " +
                       std::to_string(x.size()) + ", state expects " +
                       std::to_string(dim_));
    }
    if (group >= group_sums_.size()) {
      throw ValueError("OnlineLLPState::add: group " + std::to_string(group) +
                       " out of range");
    }
    const double q = x.squaredNorm();
    group_sums_[group] += x;
    group_counts_[group] += 1;
    sum_ += x;
    outer_.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
    norm_weighted_sum_ += q * x;
    sq_norm_sq_sum_ += q * q;
    total_ += 1;
  }

  /// Per-group averages. Every group must have seen at least one epoch.
  GroupMeans group_means() const {
    GroupMeans out;
    for (std::size_t g = 0; g < group_sums_.size(); ++g) {
      if (group_counts_[g] == 0) {
        throw InsufficientDataError("group_means: group " + std::to_string(g) +
                                    " has no epochs");
      }
      out.means.push_back(group_sums_[g] /
                          static_cast<double>(group_counts_[g]));
      out.counts.push_back(group_counts_[g]);
    }
    return out;
  }

  /// Pooled covariance over all epochs regardless of group, centred on the
  /// global mean, with analytic shrinkage towards a scaled identity.
  /// The shrinkage moments come from the running accumulators:
  /// sum over epochs of ||x - mu||^4 expands into the stored quantities.
  ShrunkCovariance pooled_covariance() const {
    if (total_ < 2) {
      throw InsufficientDataError(
          "pooled_covariance: needs at least 2 epochs");
    }
    const double n = static_cast<double>(total_);
    const Eigen::VectorXd mu = sum_ / n;
    Eigen::MatrixXd outer = outer_.selfadjointView<Eigen::Lower>();
    Eigen::MatrixXd scatter = outer - n * mu * mu.transpose();
    scatter = 0.5 * (scatter + scatter.transpose()).eval();

    const double c = mu.squaredNorm();
    const double mu_outer_mu = mu.dot(outer * mu);
    const double sum_q2 = sq_norm_sq_sum_ - 4.0 * mu.dot(norm_weighted_sum_) +
                          2.0 * c * outer.trace() + 4.0 * mu_outer_mu -
                          4.0 * c * mu.dot(sum_) + n * c * c;
    const Eigen::MatrixXd c_ml = scatter / n;
    const double gamma = detail::shrinkage_intensity(sum_q2, c_ml, total_);
    return detail::assemble_shrunk(scatter / (n - 1.0), gamma);
  }

 private:
  Eigen::Index dim_;
  std::vector<Eigen::VectorXd> group_sums_;
  std::vector<std::size_t> group_counts_;
  Eigen::VectorXd sum_;                // sum of x
  Eigen::MatrixXd outer_;              // sum of x x^T (lower triangle)
  Eigen::VectorXd norm_weighted_sum_;  // sum of ||x||^2 x
  double sq_norm_sq_sum_ = 0.0;        // sum of ||x||^4
  std::size_t total_ = 0;
};

/// Linear scoring rule; higher scores mean more target-like. LDA without
/// a bias term: neither ranking metrics nor the symbol argmax need one.
struct LinearClassifier {
  Eigen::VectorXd w;
};

/// w = Sigma^-1 (mu_plus - mu_minus) via a Cholesky solve.
inline LinearClassifier solve_lda(const ShrunkCovariance& sigma,
                                  const ClassMeans& means) {
  if (means.mu_plus.size() != means.mu_minus.size() ||
      means.mu_plus.size() != sigma.matrix.rows()) {
    throw ValueError("solve_lda: dimension mismatch");
  }
  if (sigma.degenerate) {
    throw SingularMatrixError("solve_lda: covariance has no scatter");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma.matrix);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("solve_lda: covariance is not positive definite");
  }
  return LinearClassifier{llt.solve(means.mu_plus - means.mu_minus)};
}

/// Unsupervised training: class means reconstructed from the group means
/// through the mixing matrix, covariance pooled over everything.
inline LinearClassifier train_llp(const OnlineLLPState& state,
                                  const MixingMatrix& pi) {
  if (pi.group_count() != state.group_count()) {
    throw ValueError("train_llp: state has " +
                     std::to_string(state.group_count()) +
                     " groups, mixing matrix has " +
                     std::to_string(pi.group_count()));
  }
  const ClassMeans means = reconstruct_means(pseudoinverse(pi),
                                             state.group_means());
  return solve_lda(state.pooled_covariance(), means);
}

/// Which covariance the supervised trainer pools.
/// `class_average`: mean of the two within-class covariances, shrinkage
/// moments from the class-centred residuals. `pooled`: covariance around
/// the global mean, identical to what the unsupervised path uses.
enum class SupervisedCovariance { class_average, pooled };

inline LinearClassifier train_supervised(
    const Eigen::MatrixXd& x, const std::vector<Label>& y,
    SupervisedCovariance mode = SupervisedCovariance::class_average) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw ValueError("train_supervised: label count mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (const Label l : y) {
    if (l != 1 && l != -1) {
      throw ValueError("train_supervised: labels must be +1 or -1");
    }
    (l == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw InsufficientDataError("train_supervised: needs both classes");
  }

  const Eigen::Index d = x.cols();
  ClassMeans means;
  means.mu_plus = Eigen::VectorXd::Zero(d);
  means.mu_minus = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < n; ++i) {
    (y[i] == 1 ? means.mu_plus : means.mu_minus) +=
        x.row(static_cast<Eigen::Index>(i));
  }
  means.mu_plus /= static_cast<double>(n_pos);
  means.mu_minus /= static_cast<double>(n_neg);

  ShrunkCovariance sigma;
  if (mode == SupervisedCovariance::class_average) {
    if (n_pos < 2 || n_neg < 2) {
      throw InsufficientDataError(
          "train_supervised: class-average covariance needs 2 epochs per class");
    }
    Eigen::MatrixXd r_pos(static_cast<Eigen::Index>(n_pos), d);
    Eigen::MatrixXd r_neg(static_cast<Eigen::Index>(n_neg), d);
    Eigen::Index ip = 0, in = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = x.row(static_cast<Eigen::Index>(i));
      if (y[i] == 1) {
        r_pos.row(ip++) = row - means.mu_plus.transpose();
      } else {
        r_neg.row(in++) = row - means.mu_minus.transpose();
      }
    }
    const Eigen::MatrixXd scatter_pos = r_pos.transpose() * r_pos;
    const Eigen::MatrixXd scatter_neg = r_neg.transpose() * r_neg;
    const double sum_q2 =
        r_pos.rowwise().squaredNorm().array().square().sum() +
        r_neg.rowwise().squaredNorm().array().square().sum();
    const Eigen::MatrixXd c =
        0.5 * (scatter_pos / static_cast<double>(n_pos - 1) +
               scatter_neg / static_cast<double>(n_neg - 1));
    // Residuals have zero mean by construction, so their raw moments feed
    // the intensity directly.
    const Eigen::MatrixXd c_ml = (scatter_pos + scatter_neg) /
                                 static_cast<double>(n);
    const double gamma = detail::shrinkage_intensity(sum_q2, c_ml, n);
    sigma = detail::assemble_shrunk(c, gamma);
  } else {
    if (n < 2) {
      throw InsufficientDataError("train_supervised: needs at least 2 epochs");
    }
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd r = x.rowwise() - mu;
    const Eigen::MatrixXd scatter = r.transpose() * r;
    const double sum_q2 =
        r.rowwise().squaredNorm().array().square().sum();
    const double gamma =
        detail::shrinkage_intensity(sum_q2, scatter / static_cast<double>(n),
                                    n);
    sigma = detail::assemble_shrunk(scatter / static_cast<double>(n - 1),
                                    gamma);
  }
  return solve_lda(sigma, means);
}

inline double score_epoch(const LinearClassifier& clf, const FeatureVector& x) {
  if (clf.w.size() != x.size()) {
    throw ValueError("score_epoch: dimension mismatch");
  }
  return clf.w.dot(x);
}

/// Decides the attended symbol of one trial: every selectable symbol gets
/// the sum of the scores of the stimuli that highlighted it (blanks take
/// part in no sum), the highest sum wins, ties go to the lowest cell id.
inline int select_symbol(const LinearClassifier& clf, const SymbolGrid& grid,
                         const Trial& trial,
                         const std::vector<FeatureVector>& epochs) {
  if (epochs.size() != trial.size()) {
    throw ValueError("select_symbol: epoch count does not match trial");
  }
  if (trial.size() == 0) throw ValueError("select_symbol: empty trial");
  std::vector<double> scores;
  scores.reserve(epochs.size());
  for (const auto& e : epochs) scores.push_back(score_epoch(clf, e));

  int best_id = -1;
  double best_sum = 0.0;
  for (const int id : grid.selectable()) {
    double sum = 0.0;
    for (std::size_t t = 0; t < trial.size(); ++t) {
      if (trial.stimuli[t].stimulus.contains(id)) sum += scores[t];
    }
    if (best_id < 0 || sum > best_sum) {
      best_id = id;
      best_sum = sum;
    }
  }
  if (best_id < 0) throw ValueError("select_symbol: grid has no selectable symbols");
  return best_id;
}

/// Everything recorded about one spelled character.
struct TrialRecord {
  Trial trial;
  std::vector<FeatureVector> epochs;
};

/// Re-decodes every recorded trial with one (typically final) classifier.
inline std::vector<int> posthoc_reanalyze(const LinearClassifier& clf,
                                          const SymbolGrid& grid,
                                          const std::vector<TrialRecord>& records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    out.push_back(select_symbol(clf, grid, rec.trial, rec.epochs));
  }
  return out;
}

/// Adapter for cross-validation: trains the supervised model and exposes
/// only its weight vector.
inline WeightTrainer supervised_trainer(
    SupervisedCovariance mode = SupervisedCovariance::class_average) {
  return [mode](const Eigen::MatrixXd& x, const std::vector<Label>& y) {
    return train_supervised(x, y, mode).w;
  };
}

}  // namespace llp
