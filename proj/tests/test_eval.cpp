#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "llp/eval.hpp"

using namespace llp;

namespace {

// O(n^2) reference: every target/non-target pair contributes 1, 1/2 on a
// tie. The rank-based implementation must agree exactly.
double auc_brute_force(const std::vector<double>& scores,
                       const std::vector<Label>& labels) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != -1) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  for (const Label l : labels) n_neg += l == -1;
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Epoch make_epoch(std::mt19937_64& rng, Eigen::Index channels,
                 Eigen::Index samples, double mean_shift) {
  std::normal_distribution<double> nd(mean_shift, 1.0);
  Epoch e;
  e.rate = 100.0;
  e.start_ms = 0.0;
  for (Eigen::Index c = 0; c < channels; ++c) {
    e.channels.push_back("ch" + std::to_string(c));
  }
  e.data.resize(channels, samples);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index s = 0; s < samples; ++s) e.data(c, s) = nd(rng);
  }
  return e;
}

}  // namespace

TEST_CASE("auc equals the pairwise oracle on random tie-heavy instances") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(2, 40);
  std::uniform_int_distribution<int> coarse(-2, 2);
  std::uniform_real_distribution<double> fine(-1.0, 1.0);
  std::bernoulli_distribution is_target(0.4);
  std::bernoulli_distribution use_coarse(0.5);

  int tested = 0;
  while (tested < 500) {
    const int n = size(rng);
    std::vector<double> scores;
    std::vector<Label> labels;
    bool pos = false, neg = false;
    const bool discretise = use_coarse(rng);
    for (int i = 0; i < n; ++i) {
      scores.push_back(discretise ? static_cast<double>(coarse(rng))
                                  : fine(rng));
      const Label l = is_target(rng) ? 1 : -1;
      labels.push_back(l);
      (l == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    ++tested;
    CHECK(auc(scores, labels) == auc_brute_force(scores, labels));
  }
}

TEST_CASE("auc on the three-score example") {
  CHECK(auc({0.9, 0.8, 0.3}, {1, -1, 1}) == 0.5);
}

TEST_CASE("auc reaches the extremes on separated scores") {
  CHECK(auc({2.0, 3.0, -1.0, 0.0}, {1, 1, -1, -1}) == 1.0);
  CHECK(auc({-2.0, -3.0, 1.0, 0.0}, {1, 1, -1, -1}) == 0.0);
  CHECK(auc({1.0, 1.0, 1.0, 1.0}, {1, 1, -1, -1}) == 0.5);
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::bernoulli_distribution is_target(0.5);
  std::vector<double> scores;
  std::vector<Label> labels{1, -1};
  scores.push_back(u(rng));
  scores.push_back(u(rng));
  for (int i = 0; i < 50; ++i) {
    scores.push_back(u(rng));
    labels.push_back(is_target(rng) ? 1 : -1);
  }
  std::vector<double> warped;
  for (const double s : scores) warped.push_back(std::tanh(s) * 3.0 + 1.0);
  CHECK(auc(scores, labels) == auc(warped, labels));
}

TEST_CASE("auc rejects degenerate inputs") {
  CHECK_THROWS_AS(auc({1.0, 2.0}, {1, 1}), InsufficientDataError);
  CHECK_THROWS_AS(auc({1.0, 2.0}, {1}), ValueError);
  CHECK_THROWS_AS(auc({1.0, 2.0}, {1, 0}), ValueError);
}

TEST_CASE("chronological_cv uses contiguous blocks and all other rows") {
  const Eigen::Index n = 10;
  Eigen::MatrixXd x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = static_cast<double>(i);
  std::vector<Label> y;
  for (int i = 0; i < n; ++i) y.push_back(i % 2 == 0 ? 1 : -1);

  std::vector<std::vector<double>> train_sets;
  const WeightTrainer spy = [&](const Eigen::MatrixXd& xt,
                                const std::vector<Label>&) {
    std::vector<double> rows;
    for (Eigen::Index i = 0; i < xt.rows(); ++i) rows.push_back(xt(i, 0));
    train_sets.push_back(rows);
    return Eigen::VectorXd::Ones(1);
  };
  const CvResult r = chronological_cv(x, y, 5, spy);
  REQUIRE(train_sets.size() == 5);
  REQUIRE(r.fold_aucs.size() == 5);
  for (std::size_t f = 0; f < 5; ++f) {
    REQUIRE(train_sets[f].size() == 8);
    // The held-out block is the contiguous pair (2f, 2f + 1).
    for (const double v : train_sets[f]) {
      CHECK((v < 2.0 * static_cast<double>(f) ||
             v > 2.0 * static_cast<double>(f) + 1.0));
    }
  }
}

TEST_CASE("chronological_cv skips single-class folds") {
  Eigen::MatrixXd x(9, 1);
  x.setZero();
  // Fold 2 of 3 holds rows 3..5, all targets.
  const std::vector<Label> y{1, -1, 1, 1, 1, 1, -1, 1, -1};
  const WeightTrainer trainer = [](const Eigen::MatrixXd&,
                                   const std::vector<Label>&) {
    return Eigen::VectorXd::Ones(1);
  };
  const CvResult r = chronological_cv(x, y, 3, trainer);
  CHECK(r.skipped_folds == 1);
  CHECK(r.fold_aucs.size() == 2);
}

TEST_CASE("chronological_cv separates a linear problem and not noise") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Eigen::Index n = 400, d = 4;
  Eigen::MatrixXd x(n, d);
  std::vector<Label> y;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Label l = i % 2 == 0 ? 1 : -1;
    y.push_back(l);
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = nd(rng);
  }
  const WeightTrainer mean_diff = [](const Eigen::MatrixXd& xt,
                                     const std::vector<Label>& yt) {
    Eigen::VectorXd mp = Eigen::VectorXd::Zero(xt.cols());
    Eigen::VectorXd mn = Eigen::VectorXd::Zero(xt.cols());
    double np = 0.0, nn = 0.0;
    for (Eigen::Index i = 0; i < xt.rows(); ++i) {
      if (yt[static_cast<std::size_t>(i)] == 1) {
        mp += xt.row(i);
        np += 1.0;
      } else {
        mn += xt.row(i);
        nn += 1.0;
      }
    }
    return Eigen::VectorXd((mp / np - mn / nn));
  };

  const double auc_noise = chronological_cv(x, y, 5, mean_diff).mean_auc;
  CHECK_THAT(auc_noise, Catch::Matchers::WithinAbs(0.5, 0.1));

  Eigen::MatrixXd x_sep = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    x_sep(i, 0) += y[static_cast<std::size_t>(i)] == 1 ? 6.0 : -6.0;
  }
  CHECK(chronological_cv(x_sep, y, 5, mean_diff).mean_auc > 0.99);
}

TEST_CASE("chronological_cv validates its inputs") {
  Eigen::MatrixXd x(4, 1);
  x.setZero();
  const std::vector<Label> y{1, -1, 1, -1};
  const WeightTrainer trainer = [](const Eigen::MatrixXd&,
                                   const std::vector<Label>&) {
    return Eigen::VectorXd::Ones(1);
  };
  CHECK_THROWS_AS(chronological_cv(x, y, 1, trainer), ValueError);
  CHECK_THROWS_AS(chronological_cv(x, y, 5, trainer), InsufficientDataError);
  CHECK_THROWS_AS(chronological_cv(x, {1, -1}, 2, trainer), ValueError);
}

TEST_CASE("square loss decomposition on the two-point example") {
  Eigen::VectorXd w(1);
  w << 1.0;
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 2.0;
  const auto terms = square_loss_terms(w, x, {1, -1});
  CHECK(terms.direct == 9.0);
  CHECK(terms.decomposed == 9.0);
}

TEST_CASE("square loss decomposition with zero weights counts the epochs") {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 3);
  const auto terms = square_loss_terms(w, x, {1, -1, 1, -1, 1, -1, 1});
  CHECK(terms.direct == 7.0);
  CHECK(terms.decomposed == 7.0);
}

TEST_CASE("square loss decomposition agrees on random instances") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_int_distribution<int> dim(1, 20);
  std::uniform_int_distribution<int> rows(1, 60);
  std::bernoulli_distribution is_target(0.5);
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::Index d = dim(rng), n = rows(rng);
    Eigen::VectorXd w(d);
    for (Eigen::Index j = 0; j < d; ++j) w(j) = nd(rng);
    Eigen::MatrixXd x(n, d);
    std::vector<Label> y;
    for (Eigen::Index i = 0; i < n; ++i) {
      y.push_back(is_target(rng) ? 1 : -1);
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = nd(rng);
    }
    const auto terms = square_loss_terms(w, x, y);
    const double scale = std::max(1.0, std::abs(terms.direct));
    CHECK(std::abs(terms.direct - terms.decomposed) <= 1e-9 * scale);
  }
}

TEST_CASE("signed r2 hits the extremes on perfectly separated data") {
  Eigen::MatrixXd x(4, 2);
  x << 1, -1, 1, -1, -1, 1, -1, 1;
  const std::vector<Label> y{1, 1, -1, -1};
  const Eigen::VectorXd r = signed_r2(x, y);
  CHECK_THAT(r(0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(r(1), Catch::Matchers::WithinAbs(-1.0, 1e-12));
}

TEST_CASE("signed r2 vanishes on independent features and constants") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(800, 2);
  std::vector<Label> y;
  for (Eigen::Index i = 0; i < 800; ++i) {
    x(i, 0) = nd(rng);
    x(i, 1) = 3.25;  // constant
    y.push_back(i % 2 == 0 ? 1 : -1);
  }
  const Eigen::VectorXd r = signed_r2(x, y);
  CHECK(std::abs(r(0)) < 0.02);
  CHECK(r(1) == 0.0);
}

TEST_CASE("signed r2 is scale invariant and flips with the sign") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(300, 1);
  std::vector<Label> y;
  for (Eigen::Index i = 0; i < 300; ++i) {
    const Label l = i % 3 == 0 ? 1 : -1;
    y.push_back(l);
    x(i, 0) = nd(rng) + (l == 1 ? 0.8 : -0.8);
  }
  const double base = signed_r2(x, y)(0);
  const Eigen::MatrixXd scaled = 5.0 * x.array() + 7.0;
  CHECK_THAT(signed_r2(scaled, y)(0), Catch::Matchers::WithinAbs(base, 1e-12));
  const Eigen::MatrixXd flipped = -x;
  CHECK_THAT(signed_r2(flipped, y)(0),
             Catch::Matchers::WithinAbs(-base, 1e-12));
  CHECK(base > 0.0);
  CHECK(base <= 1.0);
}

TEST_CASE("peak features find the planted extrema") {
  Epoch e;
  e.rate = 100.0;
  e.start_ms = -200.0;
  e.channels = {"O1", "Cz"};
  e.data.resize(2, 91);
  for (Eigen::Index s = 0; s < 91; ++s) {
    const double t = e.time_ms(s);
    // Trough of exactly -9.76 at 150 ms, bump of 2.0 at 400 ms.
    e.data(0, s) = -9.76 + 0.001 * (t - 150.0) * (t - 150.0);
    e.data(1, s) = 2.0 - 0.0001 * (t - 400.0) * (t - 400.0);
  }
  const PeakFeatures p = peak_features(e);
  CHECK_THAT(p.n150_amplitude, Catch::Matchers::WithinAbs(-9.76, 1e-12));
  CHECK_THAT(p.n150_latency_ms, Catch::Matchers::WithinAbs(150.0, 1e-9));
  CHECK_THAT(p.p300_amplitude, Catch::Matchers::WithinAbs(2.0, 1e-12));
  CHECK_THAT(p.p300_latency_ms, Catch::Matchers::WithinAbs(400.0, 1e-9));
}

TEST_CASE("peak features break ties toward the earliest sample") {
  Epoch e;
  e.rate = 100.0;
  e.start_ms = -200.0;
  e.channels = {"O1", "Cz"};
  e.data = Eigen::MatrixXd::Zero(2, 91);
  const PeakFeatures p = peak_features(e);
  CHECK_THAT(p.n150_latency_ms, Catch::Matchers::WithinAbs(100.0, 1e-9));
  CHECK_THAT(p.p300_latency_ms, Catch::Matchers::WithinAbs(250.0, 1e-9));
}

TEST_CASE("peak features need both named channels") {
  Epoch e;
  e.rate = 100.0;
  e.start_ms = -200.0;
  e.channels = {"O1", "P3"};
  e.data = Eigen::MatrixXd::Zero(2, 91);
  CHECK_THROWS_AS(peak_features(e), ValueError);
}

TEST_CASE("character accuracy matches the hand-computed session") {
  std::vector<int> truth(63), decided(63);
  for (int i = 0; i < 63; ++i) {
    truth[static_cast<std::size_t>(i)] = i;
    decided[static_cast<std::size_t>(i)] = i;
  }
  // 10 mistakes: 7 inside the ramp, 3 after it.
  for (const int i : {0, 1, 2, 3, 4, 5, 6, 20, 40, 62}) {
    decided[static_cast<std::size_t>(i)] = 999;
  }
  const AccuracyResult r = character_accuracy(decided, truth, 7);
  CHECK(r.correct == 53);
  CHECK(r.total == 63);
  CHECK(std::abs(r.accuracy - 53.0 / 63.0) < 1e-12);
  CHECK_THAT(r.accuracy, Catch::Matchers::WithinAbs(0.841, 0.0005));
  CHECK(std::abs(r.post_ramp_accuracy - 53.0 / 56.0) < 1e-12);
}

TEST_CASE("character accuracy handles edge cases") {
  CHECK_THROWS_AS(character_accuracy({}, {}), InsufficientDataError);
  CHECK_THROWS_AS(character_accuracy({1}, {1, 2}), ValueError);
  const AccuracyResult r = character_accuracy({1, 2}, {1, 2}, 10);
  CHECK(r.accuracy == 1.0);
  CHECK(r.post_ramp_accuracy == 0.0);  // nothing left after the ramp
}

TEST_CASE("homogeneity test keeps its size under the null") {
  std::mt19937_64 rng(53);
  int rejections = 0;
  const int runs = 300;
  for (int rep = 0; rep < runs; ++rep) {
    std::vector<Epoch> g1, g2;
    for (int i = 0; i < 30; ++i) g1.push_back(make_epoch(rng, 4, 15, 0.0));
    for (int i = 0; i < 30; ++i) g2.push_back(make_epoch(rng, 4, 15, 0.0));
    const HomogeneityEntry h = bootstrap_homogeneity(g1, g2, 0.0, 700.0, 499);
    REQUIRE(h.n == 30);
    if (h.p_value < 0.05) ++rejections;
  }
  // Loose 3-sigma style bound around 5% of 300.
  CHECK(rejections <= 30);
}

TEST_CASE("homogeneity test detects a shifted second group") {
  std::mt19937_64 rng(59);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Epoch> g1, g2;
    for (int i = 0; i < 30; ++i) g1.push_back(make_epoch(rng, 4, 15, 0.0));
    for (int i = 0; i < 30; ++i) g2.push_back(make_epoch(rng, 4, 15, 1.5));
    const HomogeneityEntry h = bootstrap_homogeneity(g1, g2, 0.0, 700.0);
    CHECK(h.p_value < 0.001);
    CHECK(h.mean_other_distance > h.mean_own_distance);
  }
}

TEST_CASE("homogeneity test degenerates gracefully") {
  // Integer samples keep the leave-one-out averages exact, so the distances
  // of identical copies are exactly zero.
  Epoch proto;
  proto.rate = 100.0;
  proto.start_ms = 0.0;
  proto.channels = {"a", "b"};
  proto.data.resize(2, 5);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index s = 0; s < 5; ++s) {
      proto.data(c, s) = static_cast<double>(3 * c + s);
    }
  }
  std::vector<Epoch> same(4, proto);

  SECTION("identical groups have p = 1") {
    const HomogeneityEntry h = bootstrap_homogeneity(same, same, 0.0, 700.0);
    CHECK(h.p_value == 1.0);
  }
  SECTION("identical group 1 against a different group 2 has p = 0") {
    Epoch other = proto;
    other.data.array() += 2.0;
    std::vector<Epoch> g2(4, other);
    const HomogeneityEntry h = bootstrap_homogeneity(same, g2, 0.0, 700.0);
    CHECK(h.p_value == 0.0);
  }
  SECTION("tiny groups are rejected") {
    CHECK_THROWS_AS(bootstrap_homogeneity({proto}, same, 0.0, 700.0),
                    InsufficientDataError);
  }
}

TEST_CASE("homogeneity works on plain feature vectors") {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto draw = [&](double shift) {
    FeatureVector v(8);
    for (Eigen::Index i = 0; i < 8; ++i) v(i) = nd(rng) + shift;
    return v;
  };
  std::vector<FeatureVector> g1, g2, g3;
  for (int i = 0; i < 40; ++i) {
    g1.push_back(draw(0.0));
    g2.push_back(draw(0.0));
    g3.push_back(draw(2.0));
  }
  CHECK(bootstrap_homogeneity(g1, g2).p_value > 1e-4);
  // The permutation p-value bottoms out at 1/(resamples + 1).
  CHECK(bootstrap_homogeneity(g1, g3).p_value < 1e-3);
}

TEST_CASE("corrected alpha divides by the family size") {
  CHECK_THAT(corrected_alpha(0.05, 13),
             Catch::Matchers::WithinAbs(0.05 / 13.0, 1e-15));
  CHECK_THROWS_AS(corrected_alpha(0.0, 5), ValueError);
  CHECK_THROWS_AS(corrected_alpha(0.05, 0), ValueError);
}
