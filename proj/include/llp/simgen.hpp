#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "llp/common.hpp"
#include "llp/decoder.hpp"
#include "llp/eval.hpp"
#include "llp/mixing.hpp"
#include "llp/sequence.hpp"

namespace llp {

/// Sentence spelled in one session (63 symbols, '_' is the space symbol).
inline const char* kTestSentence =
    "FRANZY_JAGT_IM_KOMPLETT_VERWAHRLOSTEN_TAXI_QUER_DURCH_FREIBURG.";

/// Two-class Gaussian generator in feature space. Epochs of class y are
/// drawn around midpoint + y * snr_scale * (mu_plus - mu_minus) / 2, so
/// snr_scale 1 reproduces the stored class means and snr_scale 0 makes the
/// classes indistinguishable.
struct SyntheticModel {
  FeatureVector mu_plus;
  FeatureVector mu_minus;
  Eigen::MatrixXd covariance;
  double snr_scale = 1.0;

  Eigen::Index dim() const { return mu_plus.size(); }
};

/// Unit-separation model with a mildly anisotropic covariance
/// (identity plus a random rank-5 bump), deterministic in the seed.
inline SyntheticModel default_synthetic_model(Eigen::Index dim,
                                              std::uint64_t seed) {
  if (dim < 1) throw ValueError("default_synthetic_model: dim must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  SyntheticModel m;
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = nd(rng);
  v /= v.norm();
  m.mu_plus = v;
  m.mu_minus = -v;

  const Eigen::Index rank = std::min<Eigen::Index>(5, dim);
  Eigen::MatrixXd u(dim, rank);
  for (Eigen::Index j = 0; j < rank; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      u(i, j) = nd(rng) / std::sqrt(static_cast<double>(dim));
    }
  }
  m.covariance = Eigen::MatrixXd::Identity(dim, dim) + u * u.transpose();
  m.snr_scale = 1.0;
  return m;
}

/// Draws epochs from a SyntheticModel; the Cholesky factor of the
/// covariance is computed once.
class EpochSampler {
 public:
  explicit EpochSampler(const SyntheticModel& model)
      : mid_(0.5 * (model.mu_plus + model.mu_minus)),
        delta_half_(0.5 * (model.mu_plus - model.mu_minus)),
        snr_(model.snr_scale) {
    if (model.mu_plus.size() != model.mu_minus.size() ||
        model.covariance.rows() != model.mu_plus.size() ||
        model.covariance.rows() != model.covariance.cols()) {
      throw ValueError("EpochSampler: inconsistent model dimensions");
    }
    if (!(snr_ >= 0.0)) throw ValueError("EpochSampler: snr_scale must be >= 0");
    const Eigen::LLT<Eigen::MatrixXd> llt(model.covariance);
    if (llt.info() != Eigen::Success) {
      throw ValueError("EpochSampler: covariance is not positive definite");
    }
    chol_ = llt.matrixL();
  }

  Eigen::Index dim() const { return mid_.size(); }

  /// Class mean actually generated for a label at the current snr_scale.
  FeatureVector effective_mean(Label label) const {
    if (label != 1 && label != -1) {
      throw ValueError("effective_mean: label must be +1 or -1");
    }
    return mid_ + static_cast<double>(label) * snr_ * delta_half_;
  }

  FeatureVector sample(Label label, std::mt19937_64& rng) const {
    FeatureVector x = effective_mean(label);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd z(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) z(i) = nd(rng);
    x.noalias() += chol_ * z;
    return x;
  }

 private:
  FeatureVector mid_;
  FeatureVector delta_half_;
  double snr_ = 1.0;
  Eigen::MatrixXd chol_;
};

/// One-off draw; prefer EpochSampler in loops.
inline FeatureVector sample_epoch(const SyntheticModel& model, Label label,
                                  std::mt19937_64& rng) {
  return EpochSampler(model).sample(label, rng);
}

struct CalibrationOptions {
  std::size_t n_epochs = 3400;
  std::size_t folds = 5;
  double target_share = 16.0 / 68.0;  // class balance of the speller trials
  double tolerance = 0.005;
  std::uint64_t seed = 12345;
  double max_scale = 1e6;
};

/// Finds the snr_scale at which a supervised classifier reaches the given
/// chronological-CV AUC on data from the model. The noise draws are fixed
/// once, making the AUC monotone in the scale, and the scale is bisected.
/// Throws GenerationError when the target cannot be bracketed.
inline double calibrate_snr(const SyntheticModel& model, double target_auc,
                            const CalibrationOptions& opts = {}) {
  if (!(target_auc >= 0.5 && target_auc < 1.0)) {
    throw ValueError("calibrate_snr: target must lie in [0.5, 1)");
  }
  if (target_auc == 0.5) return 0.0;
  if (opts.n_epochs < 2 * opts.folds) {
    throw ValueError("calibrate_snr: too few epochs for the fold count");
  }

  SyntheticModel unit = model;
  unit.snr_scale = 1.0;
  const EpochSampler sampler(unit);
  std::mt19937_64 rng(opts.seed);
  std::bernoulli_distribution is_target(opts.target_share);

  const auto n = static_cast<Eigen::Index>(opts.n_epochs);
  const Eigen::Index d = model.dim();
  std::vector<Label> y(opts.n_epochs);
  Eigen::MatrixXd noise(n, d);
  const FeatureVector mid = 0.5 * (model.mu_plus + model.mu_minus);
  const FeatureVector delta_half = 0.5 * (model.mu_plus - model.mu_minus);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = is_target(rng) ? 1 : -1;
    // Store the pure noise part; the class offset is applied per scale.
    noise.row(i) = (sampler.sample(1, rng) - mid - delta_half).transpose();
  }

  const WeightTrainer trainer = supervised_trainer();
  auto auc_at = [&](double scale) {
    Eigen::MatrixXd x = noise;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = static_cast<double>(y[static_cast<std::size_t>(i)]) *
                       scale;
      x.row(i) += mid.transpose() + s * delta_half.transpose();
    }
    return chronological_cv(x, y, opts.folds, trainer).mean_auc;
  };

  double hi = 1.0;
  while (auc_at(hi) < target_auc) {
    hi *= 2.0;
    if (hi > opts.max_scale) {
      throw GenerationError(
          "calibrate_snr: target AUC unreachable at any usable scale");
    }
  }
  double lo = 0.0;
  double mid_scale = hi;
  for (int iter = 0; iter < 80; ++iter) {
    mid_scale = 0.5 * (lo + hi);
    const double a = auc_at(mid_scale);
    if (std::abs(a - target_auc) <= opts.tolerance) return mid_scale;
    (a < target_auc ? lo : hi) = mid_scale;
    if (hi - lo < 1e-9 * std::max(1.0, hi)) break;
  }
  return mid_scale;
}

/// Chronologically ordered labelled epochs waiting to be regrouped.
struct LabeledPool {
  std::vector<FeatureVector> features;
  std::vector<Label> labels;

  std::size_t size() const { return features.size(); }
};

/// Epochs reorganised into groups with prescribed class proportions.
struct GroupedDataset {
  std::vector<std::vector<FeatureVector>> groups;
  std::vector<std::vector<Label>> labels;  // aligned with `groups`
};

/// Splits `n` epochs of the pool into the groups of a mixing matrix. Group
/// sizes differ by at most one; each group's target count is its size
/// times its target share, rounded. Epochs are consumed chronologically
/// from the start of the pool (per class) and assigned to a uniformly
/// random group slot of the right class.
inline GroupedDataset assemble_artificial(const LabeledPool& pool,
                                          const MixingMatrix& pi,
                                          std::size_t n,
                                          std::mt19937_64& rng) {
  const MixingReport report = validate_mixing(pi);
  if (!report.ok()) {
    throw ValueError("assemble_artificial: invalid mixing matrix: " +
                     report.violations.front());
  }
  if (pool.labels.size() != pool.features.size()) {
    throw ValueError("assemble_artificial: pool labels misaligned");
  }
  if (n == 0) throw ValueError("assemble_artificial: n must be > 0");

  const std::size_t g_count = pi.group_count();
  std::vector<std::size_t> sizes(g_count), targets(g_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    sizes[g] = n / g_count + (g < n % g_count ? 1 : 0);
    const double share = pi.rows[g][0];
    targets[g] = std::min<std::size_t>(
        sizes[g],
        static_cast<std::size_t>(std::llround(share * static_cast<double>(sizes[g]))));
  }

  std::size_t need_pos = 0, need_neg = 0;
  for (std::size_t g = 0; g < g_count; ++g) {
    need_pos += targets[g];
    need_neg += sizes[g] - targets[g];
  }

  // Group slot per epoch, shuffled within each class.
  std::vector<std::size_t> pos_slots, neg_slots;
  for (std::size_t g = 0; g < g_count; ++g) {
    pos_slots.insert(pos_slots.end(), targets[g], g);
    neg_slots.insert(neg_slots.end(), sizes[g] - targets[g], g);
  }
  std::shuffle(pos_slots.begin(), pos_slots.end(), rng);
  std::shuffle(neg_slots.begin(), neg_slots.end(), rng);

  GroupedDataset out;
  out.groups.resize(g_count);
  out.labels.resize(g_count);
  std::size_t used_pos = 0, used_neg = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (used_pos == need_pos && used_neg == need_neg) break;
    const Label l = pool.labels[i];
    if (l == 1 && used_pos < need_pos) {
      const std::size_t g = pos_slots[used_pos++];
      out.groups[g].push_back(pool.features[i]);
      out.labels[g].push_back(1);
    } else if (l == -1 && used_neg < need_neg) {
      const std::size_t g = neg_slots[used_neg++];
      out.groups[g].push_back(pool.features[i]);
      out.labels[g].push_back(-1);
    }
  }
  if (used_pos < need_pos || used_neg < need_neg) {
    throw InsufficientDataError(
        "assemble_artificial: pool has too few epochs of a class (needs " +
        std::to_string(need_pos) + " targets, " + std::to_string(need_neg) +
        " non-targets)");
  }
  return out;
}

struct SessionConfig {
  std::string sentence = kTestSentence;
  std::uint64_t seed = 1;
};

struct CharacterResult {
  int true_id = -1;
  int online_id = -1;
  double running_auc = 0.5;  // AUC of the freshly retrained classifier
                             // over every epoch seen so far
};

struct SessionResult {
  std::uint64_t seed = 0;
  std::vector<CharacterResult> characters;
  std::vector<int> posthoc_ids;
  std::vector<TrialRecord> records;
  std::vector<std::vector<Label>> labels;  // true label per stimulus
  LinearClassifier final_classifier;
  AccuracyResult online;
  AccuracyResult posthoc;
};

/// Runs one simulated copy-spelling session. Per character: decode with
/// the current classifier (uniform random guess before the first
/// training), then feed the fresh epochs into the state and retrain.
/// After the last character every trial is re-decoded with the final
/// classifier. The decoder state starts empty: nothing carries over from
/// previous sentences.
inline SessionResult simulate_session(
    const SyntheticModel& model, const SessionConfig& cfg,
    const SymbolGrid& grid = SymbolGrid::standard(),
    const MixingMatrix& pi = MixingMatrix::speller(),
    const std::vector<SequencePlan>& composition = standard_composition()) {
  if (cfg.sentence.empty()) {
    throw ValueError("simulate_session: empty sentence");
  }
  if (pi.group_count() < 2) {
    throw ValueError("simulate_session: mixing matrix needs 2 groups");
  }

  // Group tags of the composition map to state groups by ascending tag.
  std::vector<int> tags;
  for (const auto& plan : composition) {
    if (std::find(tags.begin(), tags.end(), plan.group) == tags.end()) {
      tags.push_back(plan.group);
    }
  }
  std::sort(tags.begin(), tags.end());
  if (tags.size() != pi.group_count()) {
    throw ValueError("simulate_session: composition has " +
                     std::to_string(tags.size()) +
                     " groups, mixing matrix has " +
                     std::to_string(pi.group_count()));
  }
  auto group_index = [&](int tag) {
    return static_cast<std::size_t>(
        std::find(tags.begin(), tags.end(), tag) - tags.begin());
  };

  const EpochSampler sampler(model);
  std::mt19937_64 rng(cfg.seed);
  // Separate stream for the pre-training guesses so that replaying the
  // decisions does not need the main stream's position.
  std::mt19937_64 guess_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<int> selectable = grid.selectable();
  std::uniform_int_distribution<std::size_t> pick(0, selectable.size() - 1);

  OnlineLLPState state(model.dim(), pi.group_count());
  bool trained = false;
  LinearClassifier clf;
  SessionResult result;
  result.seed = cfg.seed;

  std::vector<FeatureVector> all_epochs;
  std::vector<Label> all_labels;
  std::vector<int> truth;

  for (const char c : cfg.sentence) {
    const int attended = grid.id_of(std::string(1, c));
    if (attended < 0) {
      throw ValueError(std::string("simulate_session: character '") + c +
                       "' is not a selectable symbol");
    }
    truth.push_back(attended);

    const Trial trial = assemble_trial(grid, rng, composition);
    const std::vector<Label> labels = label_stimuli(trial, attended, grid);
    std::vector<FeatureVector> epochs;
    epochs.reserve(trial.size());
    for (const Label l : labels) epochs.push_back(sampler.sample(l, rng));

    CharacterResult cr;
    cr.true_id = attended;
    cr.online_id = trained ? select_symbol(clf, grid, trial, epochs)
                           : selectable[pick(guess_rng)];

    for (std::size_t t = 0; t < trial.size(); ++t) {
      state.add(epochs[t], group_index(trial.stimuli[t].group));
      all_epochs.push_back(epochs[t]);
      all_labels.push_back(labels[t]);
    }
    clf = train_llp(state, pi);
    trained = true;

    std::vector<double> scores;
    scores.reserve(all_epochs.size());
    for (const auto& e : all_epochs) scores.push_back(score_epoch(clf, e));
    cr.running_auc = auc(scores, all_labels);

    result.characters.push_back(cr);
    result.records.push_back(TrialRecord{trial, std::move(epochs)});
    result.labels.push_back(labels);
  }

  result.final_classifier = clf;
  result.posthoc_ids = posthoc_reanalyze(clf, grid, result.records);

  std::vector<int> online_ids;
  for (const auto& cr : result.characters) online_ids.push_back(cr.online_id);
  result.online = character_accuracy(online_ids, truth);
  result.posthoc = character_accuracy(result.posthoc_ids, truth);
  return result;
}

/// Default mixing matrices for comparing reconstruction quality, ordered
/// by ascending noise amplification: nearly pure groups first, two almost
/// indistinguishable rows last, the speller matrix in between.
inline std::vector<MixingMatrix> default_sweep_candidates() {
  return {
      MixingMatrix{{{0.9, 0.1}, {0.1, 0.9}}},
      MixingMatrix{{{0.5, 0.5}, {0.1, 0.9}}},
      MixingMatrix{{{0.5, 0.5}, {0.2, 0.8}, {0.1, 0.9}}},
      MixingMatrix::speller(),
      MixingMatrix{{{0.4, 0.6}, {0.3, 0.7}}},
  };
}

struct SweepPoint {
  MixingMatrix matrix;
  double naf = 0.0;
  double mean_rmse = 0.0;  // class-mean reconstruction error
  double mean_auc = 0.0;   // unsupervised classifier on fresh balanced data
};

/// Reconstruction quality of one mixing matrix on synthetic data:
/// `seeds` independent datasets of `n_epochs` epochs are grouped per the
/// matrix, class means are reconstructed and compared with the generating
/// means (root mean squared error over both stacked means), and the
/// resulting unsupervised classifier is scored on fresh balanced data.
inline SweepPoint sweep_matrix(const SyntheticModel& model,
                               const MixingMatrix& pi, std::size_t n_epochs,
                               std::size_t seeds, std::uint64_t seed0,
                               std::size_t test_epochs = 1000) {
  const MixingReport report = validate_mixing(pi);
  if (!report.ok()) {
    throw ValueError("sweep_matrix: invalid mixing matrix: " +
                     report.violations.front());
  }
  if (seeds == 0) throw ValueError("sweep_matrix: needs at least 1 seed");
  const std::size_t g_count = pi.group_count();
  if (n_epochs < 2 * g_count) {
    throw ValueError("sweep_matrix: too few epochs");
  }

  const EpochSampler sampler(model);
  const InverseCoefficients coeffs = pseudoinverse(pi);
  const FeatureVector true_plus = sampler.effective_mean(1);
  const FeatureVector true_minus = sampler.effective_mean(-1);
  const double dim = static_cast<double>(model.dim());

  SweepPoint out;
  out.matrix = pi;
  out.naf = noise_amplification(pi);

  for (std::size_t s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(seed0 + s);
    OnlineLLPState state(model.dim(), g_count);
    for (std::size_t g = 0; g < g_count; ++g) {
      const std::size_t size = n_epochs / g_count +
                               (g < n_epochs % g_count ? 1 : 0);
      const auto targets = static_cast<std::size_t>(std::llround(
          pi.rows[g][0] * static_cast<double>(size)));
      for (std::size_t i = 0; i < size; ++i) {
        state.add(sampler.sample(i < targets ? 1 : -1, rng), g);
      }
    }
    const ClassMeans means = reconstruct_means(coeffs, state.group_means());
    const double se = (means.mu_plus - true_plus).squaredNorm() +
                      (means.mu_minus - true_minus).squaredNorm();
    out.mean_rmse += std::sqrt(se / (2.0 * dim));

    const LinearClassifier clf = solve_lda(state.pooled_covariance(), means);
    std::vector<double> scores;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < test_epochs; ++i) {
      const Label l = i % 2 == 0 ? 1 : -1;
      scores.push_back(score_epoch(clf, sampler.sample(l, rng)));
      labels.push_back(l);
    }
    out.mean_auc += auc(scores, labels);
  }
  out.mean_rmse /= static_cast<double>(seeds);
  out.mean_auc /= static_cast<double>(seeds);
  return out;
}

}  // namespace llp
