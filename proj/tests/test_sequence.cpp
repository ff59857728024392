#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "llp/sequence.hpp"

using namespace llp;

namespace {

int count_memberships(const std::vector<Stimulus>& seq, int id) {
  int n = 0;
  for (const Stimulus& st : seq) n += st.contains(id);
  return n;
}

}  // namespace

TEST_CASE("the standard grid has 32 selectable symbols and 10 blanks") {
  const SymbolGrid g = SymbolGrid::standard();
  CHECK(g.rows == 6);
  CHECK(g.cols == 7);
  CHECK(g.cell_count() == 42);
  CHECK(g.selectable().size() == 32);
  CHECK(g.blanks().size() == 10);
  CHECK(validate_grid(g).empty());

  CHECK(g.id_of("A") == 0);
  CHECK(g.id_of("G") == 6);
  CHECK(g.id_of("_") == 26);
  CHECK(g.id_of("<") == 31);
  CHECK(g.id_of("#") == -1);
  CHECK(g.id_of("@") == -1);
  CHECK(g.is_blank(41));
  CHECK_FALSE(g.is_blank(0));

  // 4-neighbourhood of the top-left corner and of an interior cell.
  CHECK(g.neighbours(0) == std::vector<int>{7, 1});
  const std::vector<int> mid = g.neighbours(8);  // "I", row 1 col 1
  CHECK(std::count(mid.begin(), mid.end(), 1) == 1);
  CHECK(std::count(mid.begin(), mid.end(), 15) == 1);
  CHECK(std::count(mid.begin(), mid.end(), 7) == 1);
  CHECK(std::count(mid.begin(), mid.end(), 9) == 1);
}

TEST_CASE("validate_grid reports structural problems") {
  SymbolGrid g;
  CHECK_FALSE(validate_grid(g).empty());

  g.rows = 2;
  g.cols = 2;
  g.symbols = {"A", "B", "C"};
  CHECK_FALSE(validate_grid(g).empty());

  g.symbols = {"A", "B", "A", "#"};
  const auto dup = validate_grid(g);
  REQUIRE(dup.size() == 1);
  CHECK(dup.front().find("duplicate") != std::string::npos);

  g.symbols = {"#", "#", "#", "#"};
  CHECK_FALSE(validate_grid(g).empty());
}

TEST_CASE("dense sequences use no blanks and sparse ones pad with them") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(7);

  const auto dense = generate_sequence(g, SequenceSpec::type1(), rng);
  REQUIRE(dense.size() == 8);
  int dense_blanks = 0;
  for (const Stimulus& st : dense) {
    REQUIRE(st.highlighted.size() == kHighlightCount);
    for (const int id : st.highlighted) dense_blanks += g.is_blank(id);
  }
  CHECK(dense_blanks == 0);  // 32 * 3 fills all 8 * 12 slots
  for (const int id : g.selectable()) {
    REQUIRE(count_memberships(dense, id) == 3);
  }

  const auto sparse = generate_sequence(g, SequenceSpec::type2(), rng);
  REQUIRE(sparse.size() == 18);
  int sparse_blanks = 0;
  for (const Stimulus& st : sparse) {
    REQUIRE(st.highlighted.size() == kHighlightCount);
    // Blanks inside one stimulus must be distinct cells; highlighted is
    // sorted, so duplicates would sit next to each other.
    CHECK(std::adjacent_find(st.highlighted.begin(), st.highlighted.end()) ==
          st.highlighted.end());
    for (const int id : st.highlighted) sparse_blanks += g.is_blank(id);
  }
  CHECK(sparse_blanks == 152);  // 18 * 12 slots - 32 * 2 symbol appearances
  for (const int id : g.selectable()) {
    REQUIRE(count_memberships(sparse, id) == 2);
  }
}

TEST_CASE("no selectable symbol is highlighted twice in a row") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const SequenceSpec spec =
        rep % 2 == 0 ? SequenceSpec::type1() : SequenceSpec::type2();
    const auto seq = generate_sequence(g, spec, rng);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      for (const int id : seq[i].highlighted) {
        if (g.is_blank(id)) continue;  // blanks carry no information
        INFO("rep " << rep << ", stimulus " << i << ", id " << id);
        REQUIRE_FALSE(seq[i - 1].contains(id));
      }
    }
  }
}

TEST_CASE("sequence generation is deterministic in the seed") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 a(99), b(99);
  const auto s1 = generate_sequence(g, SequenceSpec::type2(), a);
  const auto s2 = generate_sequence(g, SequenceSpec::type2(), b);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].highlighted == s2[i].highlighted);
  }
}

TEST_CASE("impossible sequence specs are rejected by counting") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(1);

  // 3 appearances do not fit into 3 stimuli without a consecutive repeat.
  CHECK_THROWS_AS(generate_sequence(g, {3, 3}, rng), ValueError);
  // 32 * 2 = 64 memberships exceed 5 * 12 = 60 slots.
  CHECK_THROWS_AS(generate_sequence(g, {5, 2}, rng), ValueError);
  // A single stimulus of 12 cells would need 12 distinct blanks; only 10
  // exist, and no selectable symbol may appear zero times.
  CHECK_THROWS_AS(generate_sequence(g, {1, 0}, rng), ValueError);
  CHECK_THROWS_AS(generate_sequence(g, {0, 1}, rng), ValueError);

  SymbolGrid bad;
  CHECK_THROWS_AS(generate_sequence(bad, SequenceSpec::type1(), rng),
                  ValueError);
}

TEST_CASE("interleave_order preserves counts") {
  std::mt19937_64 rng(13);
  const std::vector<std::size_t> lengths{8, 8, 8, 8, 18, 18};
  const std::vector<int> order = interleave_order(lengths, rng);
  REQUIRE(order.size() == 68);
  std::map<int, int> counts;
  for (const int s : order) counts[s] += 1;
  REQUIRE(counts.size() == 6);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    CHECK(counts[static_cast<int>(i)] == static_cast<int>(lengths[i]));
  }
}

TEST_CASE("a standard trial has the published structure") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(17);
  const Trial trial = assemble_trial(g, rng);
  REQUIRE(trial.size() == 68);

  int group1 = 0, group2 = 0;
  for (const TrialStimulus& ts : trial.stimuli) {
    (ts.group == 1 ? group1 : group2) += 1;
  }
  CHECK(group1 == 32);  // 4 dense sequences of 8
  CHECK(group2 == 36);  // 2 sparse sequences of 18

  // Every selectable symbol is highlighted 16 times: 4 * 3 + 2 * 2.
  for (const int id : g.selectable()) {
    int n = 0;
    for (const TrialStimulus& ts : trial.stimuli) n += ts.stimulus.contains(id);
    REQUIRE(n == 16);
  }

  // Stimuli of one sequence keep their relative order and group tag.
  for (int seq = 0; seq < 6; ++seq) {
    int count = 0;
    for (const TrialStimulus& ts : trial.stimuli) {
      if (ts.sequence != seq) continue;
      ++count;
      CHECK(ts.group == (seq < 4 ? 1 : 2));
    }
    CHECK(count == (seq < 4 ? 8 : 18));
  }
}

TEST_CASE("labels split 16 targets against 52 non-targets") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(19);
  const Trial trial = assemble_trial(g, rng);
  const int attended = g.id_of("K");
  const std::vector<Label> labels = label_stimuli(trial, attended, g);
  REQUIRE(labels.size() == 68);
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
      CHECK(trial.stimuli[i].stimulus.contains(attended));
    } else {
      REQUIRE(labels[i] == -1);
      ++neg;
      CHECK_FALSE(trial.stimuli[i].stimulus.contains(attended));
    }
  }
  CHECK(pos == 16);
  CHECK(neg == 52);

  const int blank = g.blanks().front();
  CHECK_THROWS_AS(label_stimuli(trial, blank, g), ValueError);
  CHECK_THROWS_AS(label_stimuli(trial, -1, g), ValueError);
  CHECK_THROWS_AS(label_stimuli(trial, 42, g), ValueError);
}

TEST_CASE("realized proportions are exactly the design ratios") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(23);
  const Trial trial = assemble_trial(g, rng);
  for (const std::string symbol : {"A", "Z", "<"}) {
    const auto props = realized_proportions(trial, g.id_of(symbol), g);
    REQUIRE(props.size() == 2);
    // Group 1: 12 of 32 stimuli highlight the attended symbol. Group 2:
    // 4 of 36. Both are exact by construction.
    CHECK(props[0][0] == 12.0 / 32.0);
    CHECK(props[0][1] == 20.0 / 32.0);
    CHECK(props[1][0] == 4.0 / 36.0);
    CHECK(props[1][1] == 32.0 / 36.0);
  }
}

TEST_CASE("many seeds produce structurally valid trials") {
  const SymbolGrid g = SymbolGrid::standard();
  const auto composition = standard_composition();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Trial trial = assemble_trial(g, rng, composition);
    const TrialReport report = validate_trial(g, trial, composition);
    INFO("seed " << seed << ": "
                 << (report.violations.empty() ? std::string("ok")
                                               : report.violations.front()));
    REQUIRE(report.ok());
  }
}

TEST_CASE("trial assembly is deterministic in the seed") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 a(4242), b(4242);
  const Trial t1 = assemble_trial(g, a);
  const Trial t2 = assemble_trial(g, b);
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1.stimuli[i].stimulus.highlighted ==
          t2.stimuli[i].stimulus.highlighted);
    CHECK(t1.stimuli[i].group == t2.stimuli[i].group);
    CHECK(t1.stimuli[i].sequence == t2.stimuli[i].sequence);
  }
}

TEST_CASE("validate_trial flags hand-broken trials") {
  const SymbolGrid g = SymbolGrid::standard();
  const auto composition = standard_composition();
  std::mt19937_64 rng(31);
  const Trial good = assemble_trial(g, rng, composition);
  REQUIRE(validate_trial(g, good, composition).ok());

  SECTION("duplicated cell inside a stimulus") {
    Trial bad = good;
    bad.stimuli[0].stimulus.highlighted[0] =
        bad.stimuli[0].stimulus.highlighted[1];
    CHECK_FALSE(validate_trial(g, bad, composition).ok());
  }
  SECTION("cell id outside the grid") {
    Trial bad = good;
    bad.stimuli[0].stimulus.highlighted.back() = 42;
    CHECK_FALSE(validate_trial(g, bad, composition).ok());
  }
  SECTION("wrong group tag") {
    Trial bad = good;
    bad.stimuli[0].group = 2;
    CHECK_FALSE(validate_trial(g, bad, composition).ok());
  }
  SECTION("appearance count broken by a swapped symbol") {
    Trial bad = good;
    // Replace one selectable id with another inside one stimulus; both
    // sequences now have wrong appearance counts.
    for (TrialStimulus& ts : bad.stimuli) {
      auto& h = ts.stimulus.highlighted;
      if (ts.sequence == 0 && !g.is_blank(h[0]) && !ts.stimulus.contains(0) &&
          h[0] != 0) {
        h[0] = 0;
        std::sort(h.begin(), h.end());
        break;
      }
    }
    CHECK_FALSE(validate_trial(g, bad, composition).ok());
  }
  SECTION("consecutive repeat within a sequence") {
    Trial bad = good;
    // Find two stimuli of sequence 0 that are consecutive within the
    // sequence and copy the first's selectable cells into the second.
    int first = -1;
    for (std::size_t i = 0; i < bad.stimuli.size(); ++i) {
      if (bad.stimuli[i].sequence != 0) continue;
      if (first < 0) {
        first = static_cast<int>(i);
        continue;
      }
      bad.stimuli[i].stimulus =
          bad.stimuli[static_cast<std::size_t>(first)].stimulus;
      break;
    }
    CHECK_FALSE(validate_trial(g, bad, composition).ok());
  }
  SECTION("wrong stimulus count") {
    Trial bad = good;
    bad.stimuli.pop_back();
    CHECK_FALSE(validate_trial(g, bad, composition).ok());
  }
}

TEST_CASE("membership patterns keep all symbols decodable") {
  const SymbolGrid g = SymbolGrid::standard();
  std::mt19937_64 rng(37);
  const Trial trial = assemble_trial(g, rng);
  const std::vector<int> ids = g.selectable();
  // Pairwise distinct membership patterns: some stimulus separates every
  // pair of selectable symbols.
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      bool separated = false;
      for (const TrialStimulus& ts : trial.stimuli) {
        if (ts.stimulus.contains(ids[a]) != ts.stimulus.contains(ids[b])) {
          separated = true;
          break;
        }
      }
      INFO("symbols " << ids[a] << " and " << ids[b]);
      REQUIRE(separated);
    }
  }
}
