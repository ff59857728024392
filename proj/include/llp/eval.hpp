#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "llp/common.hpp"
#include "llp/signal.hpp"

namespace llp {

/// Area under the ROC curve via the rank statistic. Ties between a target
/// and a non-target score count 1/2. Needs both classes present.
inline double auc(const std::vector<double>& scores,
                  const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) {
    throw ValueError("auc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (const Label y : labels) {
    if (y != 1 && y != -1) throw ValueError("auc: labels must be +1 or -1");
    if (y == 1) ++n_pos;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw InsufficientDataError("auc: needs both classes");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Midranks over tie runs keep the statistic exact under ties.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double u = rank_sum_pos -
                   0.5 * static_cast<double>(n_pos) *
                       static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct CvResult {
  double mean_auc = 0.0;
  std::vector<double> fold_aucs;
  std::size_t skipped_folds = 0;
};

/// K-fold cross-validation with contiguous, chronologically ordered folds:
/// fold f holds out one block of consecutive rows. Folds whose test block
/// lacks one of the classes are skipped (counted, not scored).
inline CvResult chronological_cv(const Eigen::MatrixXd& x,
                                 const std::vector<Label>& y, std::size_t folds,
                                 const WeightTrainer& trainer) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw ValueError("chronological_cv: label count mismatch");
  if (folds < 2) throw ValueError("chronological_cv: needs at least 2 folds");
  if (n < folds) throw InsufficientDataError("chronological_cv: fewer rows than folds");

  CvResult result;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    const std::size_t n_test = hi - lo;
    const std::size_t n_train = n - n_test;

    Eigen::MatrixXd x_train(n_train, x.cols());
    std::vector<Label> y_train;
    y_train.reserve(n_train);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= lo && i < hi) continue;
      x_train.row(r++) = x.row(static_cast<Eigen::Index>(i));
      y_train.push_back(y[i]);
    }

    bool has_pos = false, has_neg = false;
    for (std::size_t i = lo; i < hi; ++i) {
      has_pos |= y[i] == 1;
      has_neg |= y[i] == -1;
    }
    if (!has_pos || !has_neg) {
      ++result.skipped_folds;
      continue;
    }

    const Eigen::VectorXd w = trainer(x_train, y_train);
    std::vector<double> scores(n_test);
    std::vector<Label> labels(y.begin() + static_cast<std::ptrdiff_t>(lo),
                              y.begin() + static_cast<std::ptrdiff_t>(hi));
    for (std::size_t i = 0; i < n_test; ++i) {
      scores[i] = x.row(static_cast<Eigen::Index>(lo + i)).dot(w);
    }
    result.fold_aucs.push_back(auc(scores, labels));
  }
  if (result.fold_aucs.empty()) {
    throw InsufficientDataError("chronological_cv: every fold was skipped");
  }
  result.mean_auc =
      std::accumulate(result.fold_aucs.begin(), result.fold_aucs.end(), 0.0) /
      static_cast<double>(result.fold_aucs.size());
  return result;
}

struct SquareLossTerms {
  double direct = 0.0;      // sum over epochs of (w.x - y)^2
  double decomposed = 0.0;  // label-free sum plus the class-mean correction
};

/// The squared loss written two ways: directly, and as
/// sum((w.x)^2 + 1) - 2 w.(N+ mu+ - N- mu-), which only needs labels
/// through the class means. The two sides agree to rounding error.
inline SquareLossTerms square_loss_terms(const Eigen::VectorXd& w,
                                         const Eigen::MatrixXd& x,
                                         const std::vector<Label>& y) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw ValueError("square_loss_terms: label count mismatch");
  if (x.cols() != w.size()) {
    throw ValueError("square_loss_terms: weight dimension mismatch");
  }
  SquareLossTerms out;
  Eigen::VectorXd sum_pos = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd sum_neg = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 1 && y[i] != -1) {
      throw ValueError("square_loss_terms: labels must be +1 or -1");
    }
    const auto row = x.row(static_cast<Eigen::Index>(i));
    const double s = row.dot(w);
    out.direct += (s - y[i]) * (s - y[i]);
    out.decomposed += s * s + 1.0;
    if (y[i] == 1) {
      sum_pos += row.transpose();
    } else {
      sum_neg += row.transpose();
    }
  }
  out.decomposed -= 2.0 * w.dot(sum_pos - sum_neg);
  return out;
}

/// Signed point-biserial r^2 per feature: sign(mean difference) times the
/// squared correlation between the feature and the class label.
inline Eigen::VectorXd signed_r2(const Eigen::MatrixXd& x,
                                 const std::vector<Label>& y) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n) throw ValueError("signed_r2: label count mismatch");
  std::size_t n_pos = 0;
  for (const Label l : y) {
    if (l != 1 && l != -1) throw ValueError("signed_r2: labels must be +1 or -1");
    if (l == 1) ++n_pos;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw InsufficientDataError("signed_r2: needs both classes");
  }

  Eigen::VectorXd mean_pos = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd mean_neg = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    (y[i] == 1 ? mean_pos : mean_neg) += x.row(static_cast<Eigen::Index>(i));
  }
  mean_pos /= static_cast<double>(n_pos);
  mean_neg /= static_cast<double>(n_neg);

  const Eigen::VectorXd mean_all =
      (mean_pos * static_cast<double>(n_pos) +
       mean_neg * static_cast<double>(n_neg)) /
      static_cast<double>(n);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    var += (x.row(static_cast<Eigen::Index>(i)).transpose() - mean_all)
               .array()
               .square()
               .matrix();
  }

  Eigen::VectorXd out(x.cols());
  const double balance = static_cast<double>(n_pos) *
                         static_cast<double>(n_neg) /
                         (static_cast<double>(n) * static_cast<double>(n));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double diff = mean_pos(j) - mean_neg(j);
    const double total = var(j) / static_cast<double>(n);
    if (total <= 0.0) {
      out(j) = 0.0;
      continue;
    }
    const double r2 = balance * diff * diff / total;
    out(j) = diff >= 0.0 ? r2 : -r2;
  }
  return out;
}

struct PeakFeatures {
  double n150_amplitude = 0.0;
  double n150_latency_ms = 0.0;
  double p300_amplitude = 0.0;
  double p300_latency_ms = 0.0;
};

/// Early negative / late positive peaks of a class-average epoch:
/// the minimum of O1 in [100, 200] ms and the maximum of Cz in
/// [250, 500] ms. Ties resolve to the earliest sample.
inline PeakFeatures peak_features(const Epoch& average) {
  const int o1 = average.channel_index("O1");
  const int cz = average.channel_index("Cz");
  if (o1 < 0 || cz < 0) {
    throw ValueError("peak_features: needs channels O1 and Cz");
  }
  auto extremum = [&](int channel, double lo, double hi, bool minimum) {
    bool found = false;
    double best = 0.0, best_t = 0.0;
    for (Eigen::Index s = 0; s < average.sample_count(); ++s) {
      const double t = average.time_ms(s);
      if (t < lo - 1e-9 || t > hi + 1e-9) continue;
      const double v = average.data(channel, s);
      const bool better = !found || (minimum ? v < best : v > best);
      if (better) {
        found = true;
        best = v;
        best_t = t;
      }
    }
    if (!found) {
      throw ValueError("peak_features: search window contains no samples");
    }
    return std::make_pair(best, best_t);
  };
  PeakFeatures out;
  std::tie(out.n150_amplitude, out.n150_latency_ms) =
      extremum(o1, 100.0, 200.0, true);
  std::tie(out.p300_amplitude, out.p300_latency_ms) =
      extremum(cz, 250.0, 500.0, false);
  return out;
}

struct AccuracyResult {
  double accuracy = 0.0;
  double post_ramp_accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t ramp = 0;
};

/// Fraction of correct decisions, overall and after discarding the first
/// `ramp` decisions (the warm-up of an online classifier).
inline AccuracyResult character_accuracy(const std::vector<int>& decided,
                                         const std::vector<int>& truth,
                                         std::size_t ramp = 7) {
  if (decided.size() != truth.size()) {
    throw ValueError("character_accuracy: length mismatch");
  }
  if (decided.empty()) {
    throw InsufficientDataError("character_accuracy: no decisions");
  }
  AccuracyResult out;
  out.total = decided.size();
  out.ramp = std::min(ramp, decided.size());
  std::size_t late_correct = 0;
  for (std::size_t i = 0; i < decided.size(); ++i) {
    if (decided[i] == truth[i]) {
      ++out.correct;
      if (i >= out.ramp) ++late_correct;
    }
  }
  out.accuracy = static_cast<double>(out.correct) /
                 static_cast<double>(out.total);
  const std::size_t late_total = decided.size() - out.ramp;
  out.post_ramp_accuracy =
      late_total == 0 ? 0.0
                      : static_cast<double>(late_correct) /
                            static_cast<double>(late_total);
  return out;
}

struct HomogeneityEntry {
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  double mean_own_distance = 0.0;
  double mean_other_distance = 0.0;
};

namespace detail {

/// Paired two-sided t-test on d1 - d2. With zero variance the p-value
/// degenerates to 0 (consistent nonzero difference) or 1 (no difference).
inline HomogeneityEntry paired_t_test(const std::vector<double>& d1,
                                      const std::vector<double>& d2) {
  const std::size_t n = d1.size();
  HomogeneityEntry out;
  out.n = n;
  double mean_diff = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_diff += d1[i] - d2[i];
    out.mean_own_distance += d1[i];
    out.mean_other_distance += d2[i];
  }
  mean_diff /= static_cast<double>(n);
  out.mean_own_distance /= static_cast<double>(n);
  out.mean_other_distance /= static_cast<double>(n);

  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = d1[i] - d2[i] - mean_diff;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  if (var <= 0.0) {
    out.t_statistic = mean_diff == 0.0
                          ? 0.0
                          : std::numeric_limits<double>::infinity() *
                                (mean_diff > 0.0 ? 1.0 : -1.0);
    out.p_value = mean_diff == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t_statistic =
      mean_diff / std::sqrt(var / static_cast<double>(n));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(
                          dist, std::abs(out.t_statistic)));
  return out;
}

/// Squared L2 distance between two epochs over samples with
/// lo <= t <= hi, all channels.
inline double window_distance(const Epoch& a, const Eigen::MatrixXd& b,
                              double lo, double hi) {
  double d = 0.0;
  for (Eigen::Index s = 0; s < a.sample_count(); ++s) {
    const double t = a.time_ms(s);
    if (t < lo - 1e-9 || t > hi + 1e-9) continue;
    d += (a.data.col(s) - b.col(s)).squaredNorm();
  }
  return d;
}

/// Leave-one-out paired t statistic: every group-1 vector is compared by
/// squared distance to its own group's average (computed without it) and
/// to the group-2 average.
inline HomogeneityEntry loo_distance_t(
    const std::vector<const Eigen::VectorXd*>& g1,
    const std::vector<const Eigen::VectorXd*>& g2) {
  const Eigen::Index dim = g1[0]->size();
  Eigen::VectorXd sum1 = Eigen::VectorXd::Zero(dim);
  for (const auto* v : g1) sum1 += *v;
  Eigen::VectorXd avg2 = Eigen::VectorXd::Zero(dim);
  for (const auto* v : g2) avg2 += *v;
  avg2 /= static_cast<double>(g2.size());

  const double n1 = static_cast<double>(g1.size());
  std::vector<double> d_own, d_other;
  d_own.reserve(g1.size());
  d_other.reserve(g1.size());
  for (const auto* v : g1) {
    const Eigen::VectorXd loo_avg = (sum1 - *v) / (n1 - 1.0);
    d_own.push_back((*v - loo_avg).squaredNorm());
    d_other.push_back((*v - avg2).squaredNorm());
  }
  return paired_t_test(d_own, d_other);
}

/// The t reference distribution is not exact here: the distances share
/// the group averages, and their LOO/full-average expectations differ at
/// finite group sizes. The p-value therefore comes from the permutation
/// distribution of the same statistic, which is exact under the null
/// (both groups drawn from one distribution makes the pooled epochs
/// exchangeable). A fixed internal seed keeps reports reproducible.
inline HomogeneityEntry permutation_homogeneity(
    std::vector<const Eigen::VectorXd*> pool, std::size_t n1,
    std::size_t resamples) {
  const std::vector<const Eigen::VectorXd*> g1(pool.begin(),
                                               pool.begin() + n1);
  const std::vector<const Eigen::VectorXd*> g2(pool.begin() + n1, pool.end());
  HomogeneityEntry obs = loo_distance_t(g1, g2);
  if (resamples == 0 || !std::isfinite(obs.t_statistic) ||
      obs.p_value == 1.0) {
    return obs;  // zero-variance conventions already decide the outcome
  }
  std::mt19937_64 rng(0x686f6d6f67656e31ULL);
  std::size_t at_least = 0;
  for (std::size_t b = 0; b < resamples; ++b) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<const Eigen::VectorXd*> h1(pool.begin(),
                                                 pool.begin() + n1);
    const std::vector<const Eigen::VectorXd*> h2(pool.begin() + n1,
                                                 pool.end());
    if (std::abs(loo_distance_t(h1, h2).t_statistic) >=
        std::abs(obs.t_statistic)) {
      ++at_least;
    }
  }
  obs.p_value = (1.0 + static_cast<double>(at_least)) /
                (static_cast<double>(resamples) + 1.0);
  return obs;
}

}  // namespace detail

/// Leave-one-out test of the homogeneity assumption for one class.
/// For every epoch of group 1, its squared distance (window [lo, hi] ms,
/// all channels) to the group-1 average without itself is compared with
/// its distance to the full group-2 average; a paired two-sided t
/// statistic summarizes the distance differences and is calibrated
/// against `resamples` group-label permutations.
inline HomogeneityEntry bootstrap_homogeneity(const std::vector<Epoch>& group1,
                                              const std::vector<Epoch>& group2,
                                              double win_lo_ms = 0.0,
                                              double win_hi_ms = 700.0,
                                              std::size_t resamples = 1999) {
  if (group1.size() < 2 || group2.size() < 2) {
    throw InsufficientDataError(
        "bootstrap_homogeneity: each group needs at least 2 epochs");
  }
  const Eigen::Index rows = group1[0].data.rows();
  const Eigen::Index cols = group1[0].data.cols();
  std::vector<Eigen::Index> window;
  for (Eigen::Index s = 0; s < cols; ++s) {
    const double t = group1[0].time_ms(s);
    if (t >= win_lo_ms - 1e-9 && t <= win_hi_ms + 1e-9) window.push_back(s);
  }

  std::vector<Eigen::VectorXd> flat;
  flat.reserve(group1.size() + group2.size());
  for (const auto* group : {&group1, &group2}) {
    for (const auto& e : *group) {
      if (e.data.rows() != rows || e.data.cols() != cols) {
        throw ValueError("bootstrap_homogeneity: epoch shapes differ");
      }
      Eigen::VectorXd v(rows * static_cast<Eigen::Index>(window.size()));
      for (std::size_t s = 0; s < window.size(); ++s) {
        v.segment(static_cast<Eigen::Index>(s) * rows, rows) =
            e.data.col(window[s]);
      }
      flat.push_back(std::move(v));
    }
  }
  std::vector<const Eigen::VectorXd*> pool;
  pool.reserve(flat.size());
  for (const auto& v : flat) pool.push_back(&v);
  return detail::permutation_homogeneity(std::move(pool), group1.size(),
                                         resamples);
}

/// Same statistic on plain feature vectors instead of windowed epochs.
inline HomogeneityEntry bootstrap_homogeneity(
    const std::vector<FeatureVector>& group1,
    const std::vector<FeatureVector>& group2, std::size_t resamples = 1999) {
  if (group1.size() < 2 || group2.size() < 2) {
    throw InsufficientDataError(
        "bootstrap_homogeneity: each group needs at least 2 epochs");
  }
  const Eigen::Index dim = group1[0].size();
  std::vector<const Eigen::VectorXd*> pool;
  pool.reserve(group1.size() + group2.size());
  for (const auto* group : {&group1, &group2}) {
    for (const auto& v : *group) {
      if (v.size() != dim) {
        throw ValueError("bootstrap_homogeneity: dimension mismatch");
      }
      pool.push_back(&v);
    }
  }
  return detail::permutation_homogeneity(std::move(pool), group1.size(),
                                         resamples);
}

/// Bonferroni-adjusted significance threshold for a family of tests.
inline double corrected_alpha(double alpha, std::size_t n_tests) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValueError("corrected_alpha: alpha must lie in (0, 1)");
  }
  if (n_tests == 0) throw ValueError("corrected_alpha: no tests");
  return alpha / static_cast<double>(n_tests);
}

}  // namespace llp
